#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "zoneprobe/tensor.hpp"

namespace zoneprobe::testutil {

// Central finite differences against the analytic gradients. `run` rebuilds
// the whole graph from scratch, returns the scalar loss, and calls backward()
// only when asked; parameter buffers are shared, so perturbing a Tensor here
// is visible inside `run`.
inline double max_rel_grad_error(const std::vector<Tensor*>& params,
                                 const std::function<double(bool)>& run, double h = 1e-5) {
  for (Tensor* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  run(true);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params)
    analytic.emplace_back(p->grad(), p->grad() + p->size());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->at(i);
      p->at(i) = saved + h;
      const double up = run(false);
      p->at(i) = saved - h;
      const double down = run(false);
      p->at(i) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err =
          std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline void fill_normal(Tensor& t, Rng& rng, double scale = 0.5) {
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal() * scale;
}

}  // namespace zoneprobe::testutil
