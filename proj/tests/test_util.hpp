#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sclap/tensor.hpp"

namespace sclap::testutil {

// Central finite-difference check: rebuilds the scalar loss with `make_loss`
// after each coordinate perturbation and compares the analytic gradient.
// Returns the worst relative error across all coordinates of all params.
inline double finite_diff_max_rel_error(std::vector<Tensor>& params,
                                        const std::function<Tensor()>& make_loss, double h = 1e-5) {
  Tensor loss = make_loss();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.push_back(*p.grad);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = (*p.data)[i];
      (*p.data)[i] = saved + h;
      const double up = make_loss().scalar_value();
      (*p.data)[i] = saved - h;
      const double down = make_loss().scalar_value();
      (*p.data)[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[pi][i]), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic[pi][i]) / scale);
    }
  }
  return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace sclap::testutil
