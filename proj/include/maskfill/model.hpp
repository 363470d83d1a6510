// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maskfill/random.hpp"
#include "maskfill/tape.hpp"

namespace maskfill {

/// U-shaped encoder/decoder. Level 0 runs at full resolution with
/// base_channels features; level l >= 1 is reached by a stride-2 convolution
/// and carries min(base_channels * 2^(l-1), max_channels) features.
struct HourglassConfig {
  std::uint32_t in_channels = 3;
  std::uint32_t depth = 3;
  std::uint32_t base_channels = 32;
  std::uint32_t max_channels = 128;
  bool skip_connections = true;
  float leaky_slope = 0.1f;

  std::size_t level_width(std::size_t level) const;
  void validate() const;

  friend bool operator==(const HourglassConfig &, const HourglassConfig &) = default;
};

/// Shape of one convolution layer.
struct ConvLayer {
  std::string name;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
};

/// Layer list in parameter order.
std::vector<ConvLayer> hourglass_layers(const HourglassConfig &config);

/// Named parameter tensors as stored on disk.
struct ModelWeights {
  std::uint32_t version = 1;
  HourglassConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<float>> tensors;

  std::size_t parameter_count() const;
};

template <typename T> class Hourglass {
public:
  /// Kaiming fan-in initialization of every conv weight, zero biases.
  Hourglass(const HourglassConfig &config, Rng &rng);

  /// Adopts stored weights; throws ShapeMismatchError when shapes disagree with the config.
  explicit Hourglass(const ModelWeights &weights);

  const HourglassConfig &config() const { return config_; }
  const std::vector<std::string> &names() const { return names_; }
  std::vector<Tensor<T>> &parameters() { return params_; }
  const std::vector<Tensor<T>> &parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Records every parameter on the tape as a gradient-requiring leaf.
  std::vector<Var<T>> bind(Tape<T> &tape) const;

  /// input [N,C,H,W] -> [N,C,H,W]. H and W need not be multiples of 2^depth;
  /// the input is reflect-padded and the output cropped back.
  Var<T> forward(std::span<const Var<T>> params, Var<T> input) const;

  /// Inference-only forward.
  Tensor<T> predict(const Tensor<T> &input) const;

  ModelWeights to_weights() const;

  template <typename U> Hourglass<U> cast() const {
    Hourglass<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i)
      out.parameters()[i] = params_[i].template cast<U>();
    return out;
  }

private:
  template <typename> friend class Hourglass;
  explicit Hourglass(const HourglassConfig &config);

  HourglassConfig config_;
  std::vector<ConvLayer> layers_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> params_;
};

/// Byte size of everything preceding the raw float blobs in a weight file.
std::size_t weights_header_size(const ModelWeights &weights);

void save_weights(const ModelWeights &weights, const std::filesystem::path &path);
ModelWeights load_weights(const std::filesystem::path &path);

/// Loads and checks the echoed config against the expected one.
ModelWeights load_weights(const std::filesystem::path &path, const HourglassConfig &expected);

} // namespace maskfill
