#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "satfuse/error.hpp"
#include "satfuse/nn/tensor.hpp"

namespace satfuse::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t nonsmooth = 0;  // coordinates left unchecked: a kink within every tried step
};

inline constexpr double kGradCheckStep = 1e-5;

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps coordinates
/// whose true gradient is ~0 from dividing roundoff by roundoff.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss` with respect to every coordinate of every
/// tensor in `wrt`, compared against `analytic` (same order and shapes).
/// `loss` must recompute from the current tensor contents.
inline GradCheckResult grad_check(const std::function<double()>& loss, std::span<Tensor<double>* const> wrt,
                                  std::span<const Tensor<double>* const> analytic, double step = kGradCheckStep,
                                  double floor = 1e-6) {
  require(wrt.size() == analytic.size(), ErrorKind::Argument, "grad_check: tensor lists differ in length");
  GradCheckResult r;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    Tensor<double>& x = *wrt[t];
    require(analytic[t]->shape() == x.shape(), ErrorKind::Argument, "grad_check: gradient shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + step;
      const double up = loss();
      x[i] = saved - step;
      const double down = loss();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = (*analytic[t])[i];
      const double err = relative_error(a, numeric, floor);
      ++r.coordinates;
      if (err > r.max_rel_error) r = {err, r.coordinates, t, i, a, numeric};
    }
  }
  return r;
}

}  // namespace satfuse::nn
