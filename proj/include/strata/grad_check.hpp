#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "strata/autograd.hpp"

namespace strata {

/// Builds a scalar loss on `graph` from leaf variables bound to the parameters.
using ScalarFn = std::function<Var(Graph& graph, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

enum class Stencil {
  central,
  /// (4 D(eps/2) - D(eps)) / 3 over central differences D; the eps^2 error
  /// term cancels, so a larger eps can be used and rounding noise shrinks.
  richardson,
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps), one coordinate at a time. The relative
/// error denominator is max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_difference_check(const ScalarFn& f, std::vector<Tensor> params,
                                        double eps = 1e-5, Stencil stencil = Stencil::central);

}  // namespace strata
