#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "strata/grad_check.hpp"

namespace strata {

inline constexpr double kGradCheckTolerance = 1e-4;
/// Step of the Richardson-extrapolated central stencil the suite uses.
inline constexpr double kGradCheckEps = 1e-3;

struct ComponentCheck {
  std::string name;
  GradCheckResult result;
  bool passed() const noexcept { return result.max_rel_error < kGradCheckTolerance; }
};

/// Names of every component the suite knows, in run order.
std::vector<std::string> gradcheck_components();

/// Finite-difference checks of each primitive, each layer and both full
/// models (T=5, F=3, H_enc=4) on randomized inputs drawn from `seed`.
/// `only` keeps the components whose name contains it; empty keeps all.
std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed, std::string_view only = {});

}  // namespace strata
