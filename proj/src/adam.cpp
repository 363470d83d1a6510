// SPDX-License-Identifier: Apache-2.0
#include "maskfill/adam.hpp"

#include <cmath>

namespace maskfill {

template <typename T>
AdamState<T>::AdamState(std::span<const Tensor<T>> params, double b1, double b2, double eps)
    : beta1(b1), beta2(b2), epsilon(eps) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto &p : params) {
    first_moment.emplace_back(p.shape());
    second_moment.emplace_back(p.shape());
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T> &state, double lr) {
  expects(params.size() == grads.size() && params.size() == state.first_moment.size() &&
              params.size() == state.second_moment.size(),
          "adam_step: parameter, gradient and moment counts differ");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T eps = static_cast<T>(state.epsilon);
  const T step_size = static_cast<T>(lr / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> &p = params[k];
    const Tensor<T> &g = grads[k];
    Tensor<T> &m = state.first_moment[k];
    Tensor<T> &v = state.second_moment[k];
    expects(p.same_shape(g) && p.same_shape(m) && p.same_shape(v),
            "adam_step: shape mismatch for parameter " + std::to_string(k));
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>>, std::span<const Tensor<float>>,
                        AdamState<float> &, double);
template void adam_step(std::span<Tensor<double>>, std::span<const Tensor<double>>,
                        AdamState<double> &, double);

} // namespace maskfill
