// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "maskfill/adam.hpp"
#include "maskfill/model.hpp"
#include "maskfill/random.hpp"

namespace maskfill {

struct PretrainConfig {
  std::filesystem::path corpus_dir;
  std::size_t crop_size = 64;
  std::size_t batch_size = 8;
  std::size_t total_steps = 2000;
  double lr0 = 2e-3;
  double lr_min = 1e-5;
  double mask_ratio = 0.3;
  bool shared_channels = false;
  std::uint64_t seed = 0;
  HourglassConfig model;

  void validate() const;
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total, double lr0, double lr_min);

/// Draws uniformly positioned square crops from an in-memory corpus.
class CorpusSampler {
public:
  struct Crop {
    Image pixels; ///< [1,C,size,size]
    std::size_t source = 0;
    std::size_t top = 0;
    std::size_t left = 0;
  };

  /// Images are converted to `channels` (grayscale sources are replicated).
  CorpusSampler(std::vector<Image> images, std::size_t channels, std::uint64_t seed);

  /// Loads every image in the directory; throws ConfigError when there are none.
  static CorpusSampler from_directory(const std::filesystem::path &dir, std::size_t channels,
                                      std::uint64_t seed);

  /// Picks an image at least size x size uniformly, then a uniform origin.
  /// Throws ConfigError when no image is large enough.
  Crop sample(std::size_t size);
  Image sample_crop(std::size_t size) { return sample(size).pixels; }

  std::size_t size() const { return images_.size(); }
  const Image &image(std::size_t i) const { return images_.at(i); }

private:
  std::vector<Image> images_;
  Rng rng_;
};

/// One optimization step on a batch [B,C,H,W]: an independent mask per
/// element drawn from mask_streams[b], masked-MSE averaged over the batch,
/// one Adam update. Returns the loss. A batch without hidden sites leaves the
/// model and optimizer untouched.
double pretrain_step(Hourglass<float> &model, AdamState<float> &optimizer, const Image &batch,
                     double mask_ratio, double lr, std::span<Rng> mask_streams,
                     bool shared_channels = false);

struct PretrainLogRow {
  std::size_t step;
  double lr;
  double loss;
};

struct PretrainResult {
  ModelWeights weights;
  std::vector<PretrainLogRow> log;
};

using PretrainProgress = std::function<void(const PretrainLogRow &)>;

/// Full loop. Writes the weights file and, when log_path is non-empty, a CSV
/// "step,lr,loss" row per step.
PretrainResult run_pretrain(const PretrainConfig &config, const std::filesystem::path &weights_path,
                            const std::filesystem::path &log_path = {},
                            const PretrainProgress &progress = {});

/// Same loop over an already-built sampler; nothing is written.
PretrainResult run_pretrain(const PretrainConfig &config, CorpusSampler &sampler,
                            const PretrainProgress &progress = {});

} // namespace maskfill
