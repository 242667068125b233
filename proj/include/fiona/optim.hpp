#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fiona/error.hpp"
#include "fiona/models.hpp"
#include "fiona/tensor.hpp"

namespace fiona {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment estimates, one buffer per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_parameters(std::span<const Parameter> params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.value.size(), 0.0);
      s.v.emplace_back(p.value.size(), 0.0);
    }
    return s;
  }
};

// One bias-corrected Adam update at step t (1-based).
inline void adam_step(std::span<Parameter> params, std::span<const Tensor> grads, AdamState& state,
                      std::uint64_t t, const AdamConfig& cfg) {
  if (t < 1) throw ContractError("adam_step: step index must be >= 1");
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].value.size()) {
      throw DimensionError("adam_step: gradient shape mismatch for '" + params[k].name + "'");
    }
    if (!grads[k].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + params[k].name + "'");
    }
  }
  const double td = static_cast<double>(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, td);
  const double c2 = 1.0 - std::pow(cfg.beta2, td);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].value.data();
    const auto g = grads[k].data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace fiona
