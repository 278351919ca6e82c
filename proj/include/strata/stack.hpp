#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "strata/tensor.hpp"

namespace strata {

inline constexpr std::size_t kNumClasses = 3;

/// Skin strata in depth order.
enum Stratum : int { kEpidermis = 0, kDej = 1, kDermis = 2 };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"epidermis", "DEJ",
                                                                          "dermis"};

/// One depth-ordered stack: a T x F_raw feature matrix and one label per slice.
struct StackSample {
  std::string id;
  Tensor features;
  std::vector<int> labels;

  std::size_t length() const noexcept { return labels.size(); }

  friend bool operator==(const StackSample&, const StackSample&) = default;
};

using Dataset = std::vector<StackSample>;

}  // namespace strata
