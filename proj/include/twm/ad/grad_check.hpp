#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "twm/ad/graph.hpp"
#include "twm/rng.hpp"

namespace twm::ad {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords = 64;  // per input; all coordinates when the input is smaller
  std::uint64_t seed = 1;
  double abs_floor = 1e-6;  // denominators below this are treated as this
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coords = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. The function is projected onto a fixed random direction of its
/// output so non-scalar ops can be checked too.
inline GradCheckResult grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                                  std::vector<Tensor<double>> inputs, const GradCheckOptions& opt = {}) {
  std::vector<Var<double>> vars;
  for (auto& x : inputs) vars.push_back(parameter(x));
  Var<double> out = f(vars);
  Rng rng(opt.seed);
  Tensor<double> direction(out.shape());
  for (double& d : direction.values()) d = rng.uniform(-1.0, 1.0);
  auto project = [&](const Tensor<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * direction[i];
    return s;
  };
  backward(out, &direction);

  GradCheckResult res;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const Tensor<double> analytic = vars[p].grad();
    std::vector<std::size_t> coords(inputs[p].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.max_coords) {
      for (std::size_t i = 0; i < opt.max_coords; ++i)
        std::swap(coords[i], coords[static_cast<std::size_t>(rng.uniform_int(static_cast<long>(i),
                                                                              static_cast<long>(coords.size()) - 1))]);
      coords.resize(opt.max_coords);
    }
    for (std::size_t idx : coords) {
      auto eval = [&](double delta) {
        std::vector<Var<double>> shifted;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          Tensor<double> x = inputs[q];
          if (q == p) x[idx] += delta;
          shifted.push_back(constant(std::move(x)));
        }
        return project(f(shifted).value());
      };
      const double numeric = (eval(opt.step) - eval(-opt.step)) / (2.0 * opt.step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[idx]), opt.abs_floor});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(numeric - analytic[idx]) / denom);
      ++res.coords;
    }
  }
  return res;
}

}  // namespace twm::ad
