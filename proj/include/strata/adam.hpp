#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "strata/tensor.hpp"

namespace strata {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
/// Empty until the first step.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

}  // namespace strata
