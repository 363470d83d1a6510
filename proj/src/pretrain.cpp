// SPDX-License-Identifier: Apache-2.0
#include "maskfill/pretrain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "maskfill/image_io.hpp"
#include "maskfill/masking.hpp"

namespace maskfill {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kCropStream = 2;
constexpr std::uint64_t kMaskStream = 3;

std::size_t uniform_index(Rng &rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

} // namespace

void PretrainConfig::validate() const {
  if (crop_size < 1 || batch_size < 1)
    throw ConfigError("pretrain: crop_size and batch_size must be positive");
  if (total_steps < 1)
    throw ConfigError("pretrain: total_steps must be at least 1");
  if (!(lr_min <= lr0) || lr_min < 0.0)
    throw ConfigError("pretrain: need 0 <= lr_min <= lr0");
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw ConfigError("pretrain: mask_ratio must lie in [0,1]");
  if (crop_size < (std::size_t{1} << model.depth))
    throw ConfigError("pretrain: crop_size smaller than 2^depth");
}

double cosine_lr(std::size_t step, std::size_t total, double lr0, double lr_min) {
  expects(total >= 1 && step <= total, "cosine_lr: need 0 <= step <= total");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

CorpusSampler::CorpusSampler(std::vector<Image> images, std::size_t channels,
                             std::uint64_t seed)
    : rng_(seed) {
  images_.reserve(images.size());
  for (auto &img : images) {
    expect_image_shape(img, "corpus image");
    images_.push_back(match_channels(img, channels));
  }
}

CorpusSampler CorpusSampler::from_directory(const std::filesystem::path &dir,
                                            std::size_t channels, std::uint64_t seed) {
  const auto paths = list_images(dir);
  if (paths.empty())
    throw ConfigError("corpus " + dir.string() + " contains no readable images");
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto &p : paths)
    images.push_back(load_image(p).pixels);
  return CorpusSampler(std::move(images), channels, seed);
}

CorpusSampler::Crop CorpusSampler::sample(std::size_t size) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < images_.size(); ++i)
    if (images_[i].dim(2) >= size && images_[i].dim(3) >= size)
      eligible.push_back(i);
  if (eligible.empty())
    throw ConfigError("corpus has no image of at least " + std::to_string(size) + "x" +
                      std::to_string(size));

  Crop crop;
  crop.source = eligible[uniform_index(rng_, eligible.size())];
  const Image &src = images_[crop.source];
  const std::size_t channels = src.dim(1), h = src.dim(2), w = src.dim(3);
  crop.top = uniform_index(rng_, h - size + 1);
  crop.left = uniform_index(rng_, w - size + 1);
  crop.pixels = make_image(channels, size, size);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < size; ++i)
      std::copy_n(src.data() + (c * h + crop.top + i) * w + crop.left, size,
                  crop.pixels.data() + (c * size + i) * size);
  return crop;
}

double pretrain_step(Hourglass<float> &model, AdamState<float> &optimizer, const Image &batch,
                     double mask_ratio, double lr, std::span<Rng> mask_streams,
                     bool shared_channels) {
  expect_image_shape(batch, "pretrain_step");
  const std::size_t count = batch.dim(0);
  expects(mask_streams.size() == count, "pretrain_step: need one mask stream per batch element");

  const Shape sample_shape{1, batch.dim(1), batch.dim(2), batch.dim(3)};
  const std::size_t sample_size = shape_numel(sample_shape);
  Tensor<float> mask_values(batch.shape());
  const MaskSpec spec{mask_ratio, shared_channels, 0};
  for (std::size_t b = 0; b < count; ++b) {
    const Mask m = sample_mask(sample_shape, spec, mask_streams[b]);
    std::copy_n(m.values().data(), sample_size, mask_values.data() + b * sample_size);
  }
  const Mask mask(std::move(mask_values));
  const Mask supervised = mask.negate();

  Tape<float> tape;
  const auto params = model.bind(tape);
  Var<float> pred = model.forward(params, tape.constant(apply_mask(mask, batch)));
  Var<float> loss = masked_mse(pred, batch, supervised, /*per_sample=*/true);
  const double value = loss.value()[0];
  if (!std::isfinite(value))
    throw NumericError("pretrain: non-finite loss");
  if (mask.hidden_count() == 0)
    return value;

  auto grads = tape.backward(loss);
  std::vector<Tensor<float>> g;
  g.reserve(params.size());
  for (const auto &p : params)
    g.push_back(grads.take(p));
  adam_step<float>(model.parameters(), g, optimizer, lr);
  return value;
}

PretrainResult run_pretrain(const PretrainConfig &config, CorpusSampler &sampler,
                            const PretrainProgress &progress) {
  config.validate();
  Rng init_rng(derive_seed(config.seed, kInitStream));
  Hourglass<float> model(config.model, init_rng);
  AdamState<float> optimizer(std::span<const Tensor<float>>(model.parameters()), 0.9, 0.9, 1e-8);

  PretrainResult result;
  const std::size_t size = config.crop_size, channels = config.model.in_channels;
  Image batch({config.batch_size, channels, size, size});
  std::vector<Rng> streams(config.batch_size);
  for (std::size_t step = 0; step < config.total_steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const Image crop = sampler.sample_crop(size);
      std::copy_n(crop.data(), crop.numel(), batch.data() + b * crop.numel());
      streams[b].seed(derive_seed(config.seed ^ kMaskStream, step, b));
    }
    const double lr = cosine_lr(step, config.total_steps, config.lr0, config.lr_min);
    const double loss = pretrain_step(model, optimizer, batch, config.mask_ratio, lr, streams,
                                      config.shared_channels);
    result.log.push_back({step, lr, loss});
    if (progress)
      progress(result.log.back());
  }
  result.weights = model.to_weights();
  return result;
}

PretrainResult run_pretrain(const PretrainConfig &config, const std::filesystem::path &weights_path,
                            const std::filesystem::path &log_path,
                            const PretrainProgress &progress) {
  config.validate();
  CorpusSampler sampler = CorpusSampler::from_directory(
      config.corpus_dir, config.model.in_channels, derive_seed(config.seed, kCropStream));

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log)
      throw IoError(log_path.string() + ": cannot open training log");
    log << "step,lr,loss\n";
  }
  PretrainResult result = run_pretrain(config, sampler, [&](const PretrainLogRow &row) {
    if (log.is_open()) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", row.step, row.lr, row.loss);
      log << buf << std::flush;
      if (!log)
        throw IoError(log_path.string() + ": write failed");
    }
    if (progress)
      progress(row);
  });
  save_weights(result.weights, weights_path);
  return result;
}

} // namespace maskfill
