// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskfill/tensor.hpp"

namespace maskfill {

/// Moment accumulators for Adam with bias correction.
template <typename T> struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.9;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  AdamState() = default;
  AdamState(std::span<const Tensor<T>> params, double b1 = 0.9, double b2 = 0.9,
            double eps = 1e-8);
};

/// One Adam update of every parameter in place:
///   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T> &state, double lr);

} // namespace maskfill
