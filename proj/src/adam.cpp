#include "strata/adam.hpp"

#include <cmath>
#include <string>

#include "strata/error.hpp"

namespace strata {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].numel(); ++j) {
      const double g = grads[i][j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      params[i][j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace strata
