// SPDX-License-Identifier: Apache-2.0
#include "maskfill/masking.hpp"

namespace maskfill {

Mask::Mask(Tensor<float> values) : values_(std::move(values)) {
  for (float v : values_.values())
    expects(v == 0.0f || v == 1.0f, "mask values must be exactly 0 or 1");
}

Mask Mask::negate() const {
  Tensor<float> out(values_.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = 1.0f - values_[i];
  return Mask(std::move(out));
}

std::size_t Mask::hidden_count() const {
  std::size_t n = 0;
  for (float v : values_.values())
    n += v == 0.0f ? 1 : 0;
  return n;
}

Mask sample_mask(const Shape &shape, const MaskSpec &spec, Rng &rng) {
  expects(shape.size() == 4, "sample_mask: expected a [N,C,H,W] shape, got " + shape_string(shape));
  expects(spec.ratio >= 0.0 && spec.ratio <= 1.0, "sample_mask: ratio must lie in [0,1]");
  Tensor<float> values(shape);
  const std::size_t batch = shape[0], channels = shape[1], plane = shape[2] * shape[3];
  for (std::size_t n = 0; n < batch; ++n) {
    float *sample = values.data() + n * channels * plane;
    if (spec.shared_channels) {
      for (std::size_t i = 0; i < plane; ++i)
        sample[i] = uniform01(rng) < spec.ratio ? 0.0f : 1.0f;
      for (std::size_t c = 1; c < channels; ++c)
        std::copy_n(sample, plane, sample + c * plane);
    } else {
      for (std::size_t i = 0; i < channels * plane; ++i)
        sample[i] = uniform01(rng) < spec.ratio ? 0.0f : 1.0f;
    }
  }
  return Mask(std::move(values));
}

Image apply_mask(const Mask &mask, const Image &img) {
  expects(mask.shape() == img.shape(), "apply_mask: mask " + shape_string(mask.shape()) +
                                           " vs image " + shape_string(img.shape()));
  Image out(img.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = mask.values()[i] * img[i];
  return out;
}

double masked_mse(const Image &pred, const Image &target, const Mask &supervised) {
  expects(pred.same_shape(target) && pred.shape() == supervised.shape(),
          "masked_mse: shapes differ");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (supervised.values()[i] == 0.0f)
      continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    ++count;
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

template <typename T>
Var<T> masked_mse(Var<T> pred, const Tensor<T> &target, const Tensor<T> &supervised,
                  bool per_sample) {
  expects(pred.valid(), "masked_mse: prediction is not recorded");
  const Tensor<T> &p = pred.value();
  expects(p.same_shape(target) && p.same_shape(supervised),
          "masked_mse: prediction " + shape_string(p.shape()) + ", target " +
              shape_string(target.shape()) + ", mask " + shape_string(supervised.shape()));

  const std::size_t groups = per_sample ? p.dim(0) : 1;
  const std::size_t group_size = p.numel() / groups;
  // weight[g] = d loss / d (squared error) for supervised sites of group g
  std::vector<double> weight(groups, 0.0);
  double loss = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = g * group_size; i < (g + 1) * group_size; ++i) {
      if (supervised[i] == T{0})
        continue;
      const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
      acc += d * d;
      ++count;
    }
    if (count > 0) {
      weight[g] = 1.0 / (static_cast<double>(count) * static_cast<double>(groups));
      loss += acc * weight[g];
    }
  }

  Tape<T> *tp = pred.tape;
  const std::size_t pid = pred.id;
  return tp->record(Tensor<T>({1}, static_cast<T>(loss)), {pred.id},
                    [tp, pid, target, supervised, weight, group_size](
                        const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                      const Tensor<T> &p = tp->value(Var<T>{tp, pid});
                      for (std::size_t i = 0; i < p.numel(); ++i) {
                        if (supervised[i] == T{0})
                          continue;
                        const T k = static_cast<T>(2.0 * weight[i / group_size]) * gout[0];
                        (*gin[0])[i] += k * (p[i] - target[i]);
                      }
                    });
}

template Var<float> masked_mse(Var<float>, const Tensor<float> &, const Tensor<float> &, bool);
template Var<double> masked_mse(Var<double>, const Tensor<double> &, const Tensor<double> &,
                                bool);

} // namespace maskfill
