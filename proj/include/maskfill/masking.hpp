// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "maskfill/random.hpp"
#include "maskfill/tape.hpp"
#include "maskfill/tensor.hpp"

namespace maskfill {

/// Binary array congruent to an image: 0 = hidden (masked), 1 = visible.
class Mask {
public:
  Mask() = default;
  explicit Mask(Tensor<float> values);

  static Mask visible(const Shape &shape) { return Mask(Tensor<float>(shape, 1.0f)); }
  static Mask hidden(const Shape &shape) { return Mask(Tensor<float>(shape, 0.0f)); }

  const Tensor<float> &values() const { return values_; }
  const Shape &shape() const { return values_.shape(); }
  bool is_hidden(std::size_t i) const { return values_[i] == 0.0f; }

  /// Element-wise logical negation; the supervised set of a masked input.
  Mask negate() const;
  std::size_t hidden_count() const;

  friend bool operator==(const Mask &a, const Mask &b) { return a.values_ == b.values_; }

private:
  Tensor<float> values_;
};

struct MaskSpec {
  double ratio = 0.3;          ///< probability p that a site is hidden
  bool shared_channels = false; ///< one H x W plane replicated over channels
  std::uint64_t seed = 0;
};

/// Bernoulli mask over a [N,C,H,W] shape. Each sample (and each channel unless
/// shared) is drawn independently.
Mask sample_mask(const Shape &shape, const MaskSpec &spec, Rng &rng);

/// Element-wise product; hidden sites take the mask token 0.
Image apply_mask(const Mask &mask, const Image &img);

/// Mean of squared differences over sites where supervised == 1; 0 when no
/// site is supervised.
double masked_mse(const Image &pred, const Image &target, const Mask &supervised);

/// Differentiable form. With per_sample the loss is the mean over the batch of
/// each sample's masked MSE; otherwise all supervised sites are pooled.
template <typename T>
Var<T> masked_mse(Var<T> pred, const Tensor<T> &target, const Tensor<T> &supervised,
                  bool per_sample = false);

inline Var<float> masked_mse(Var<float> pred, const Image &target, const Mask &supervised,
                             bool per_sample = false) {
  return masked_mse(pred, target, supervised.values(), per_sample);
}

} // namespace maskfill
