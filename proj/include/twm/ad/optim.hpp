#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "twm/ad/graph.hpp"
#include "twm/error.hpp"

namespace twm::ad {

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Moments per parameter plus the shared step counter.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  void reset(const std::vector<Var<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.shape());
      v.emplace_back(p.shape());
    }
    t = 0;
  }
};

/// One bias-corrected Adam update. Gradients are read from each parameter's
/// grad buffer; a non-finite gradient aborts before any parameter changes.
template <typename T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state, long step_for_errors = -1) {
  if (state.m.size() != params.size()) state.reset(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i].shape())
      throw ShapeError("adam_step: state shape " + shape_str(state.m[i].shape()) + " vs parameter " +
                       shape_str(params[i].shape()));
    if (!params[i].grad().all_finite()) throw DivergenceError("non-finite gradient", step_for_errors);
  }
  ++state.t;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i].mutable_value();
    const Tensor<T>& g = params[i].grad();
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      p[k] = static_cast<T>(p[k] - update);
    }
    if (!p.all_finite()) throw DivergenceError("non-finite parameter after update", step_for_errors);
  }
}

}  // namespace twm::ad
