#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "satfuse/error.hpp"
#include "satfuse/nn/layers.hpp"
#include "satfuse/nn/tensor.hpp"

namespace satfuse::nn {

/// Per-parameter Adadelta accumulators. No global learning rate:
///   E[g^2]  <- rho E[g^2]  + (1-rho) g^2
///   dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
///   x       <- x + dx
template <typename T>
struct AdadeltaState {
  double rho = 0.95;
  double epsilon = 1e-6;
  std::vector<Tensor<T>> acc_grad_sq;
  std::vector<Tensor<T>> acc_update_sq;

  AdadeltaState() = default;
  AdadeltaState(double rho_, double epsilon_) : rho(rho_), epsilon(epsilon_) {
    require(rho > 0.0 && rho < 1.0, ErrorKind::Argument, "adadelta rho must lie in (0,1)");
    require(epsilon > 0.0, ErrorKind::Argument, "adadelta epsilon must be positive");
  }

  /// Lazily sized on the first step so the state follows the parameter list.
  void init(std::span<const Param<T>> params) {
    acc_grad_sq.clear();
    acc_update_sq.clear();
    for (const auto& p : params) {
      acc_grad_sq.emplace_back(p.value->shape());
      acc_update_sq.emplace_back(p.value->shape());
    }
  }
};

template <typename T>
void adadelta_step(std::span<const Param<T>> params, AdadeltaState<T>& state) {
  if (state.acc_grad_sq.empty()) state.init(params);
  require(state.acc_grad_sq.size() == params.size(), ErrorKind::Argument,
          "adadelta: parameter count does not match optimizer state");
  const T rho = static_cast<T>(state.rho);
  const T one_minus = static_cast<T>(1.0 - state.rho);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& x = *params[p].value;
    const Tensor<T>& g = *params[p].grad;
    Tensor<T>& eg = state.acc_grad_sq[p];
    Tensor<T>& edx = state.acc_update_sq[p];
    require(g.shape() == x.shape() && eg.shape() == x.shape(), ErrorKind::Argument,
            "adadelta: shape mismatch for parameter '" + params[p].name + "'");
    for (std::size_t i = 0; i < x.size(); ++i) {
      eg[i] = rho * eg[i] + one_minus * g[i] * g[i];
      const T dx = -std::sqrt(edx[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
      edx[i] = rho * edx[i] + one_minus * dx * dx;
      x[i] += dx;
    }
  }
}

}  // namespace satfuse::nn
