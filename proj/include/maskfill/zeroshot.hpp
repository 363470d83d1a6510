// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maskfill/masking.hpp"
#include "maskfill/model.hpp"
#include "maskfill/random.hpp"

namespace maskfill {

enum class EnsembleKind {
  ema,       ///< exponential moving average over masked predictions
  average,   ///< per-pixel running mean over masked predictions
  last,      ///< latest masked prediction per pixel
  avg_after, ///< running mean over masked predictions from iteration `after` on
};

struct EnsembleMode {
  EnsembleKind kind = EnsembleKind::ema;
  std::size_t after = 0;

  friend bool operator==(const EnsembleMode &, const EnsembleMode &) = default;
};

/// Accepts "ema", "average", "last", "avg-after=K" (also "avg_after=K").
EnsembleMode parse_ensemble(const std::string &text);
std::string format_ensemble(const EnsembleMode &mode);

/// Stop once the mean loss of the trailing `window` iterations fails to
/// improve on the preceding window's mean by at least `threshold` (relative).
/// window == 0 disables it.
struct PlateauStop {
  std::size_t window = 0;
  double threshold = 1e-3;
};

struct DenoiseConfig {
  double mask_ratio = 0.3;
  double beta = 0.99;
  std::size_t iterations = 1000;
  double lr = 2e-3;
  std::size_t pd_factor = 1;
  EnsembleMode ensemble;
  bool mask_loss = true;
  bool shared_channels = false;
  std::string init_weights = "scratch";
  std::uint64_t seed = 0;
  PlateauStop plateau;
  HourglassConfig model; ///< architecture used for "scratch" initialization

  void validate() const;
};

/// Running ensemble ybar plus a per-pixel count of updates.
struct EmaEnsemble {
  Image value;
  std::vector<std::uint32_t> hits;

  explicit EmaEnsemble(Image init);
  std::size_t never_updated() const;
};

/// At hidden sites (mask == 0): ybar <- beta*ybar + (1-beta)*y. Visible sites are untouched.
void ema_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask, double beta);
/// At hidden sites: running mean of every prediction seen there.
void average_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask);
/// At hidden sites: ybar <- y.
void last_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask);

/// Pixel-shuffle split of [1,C,H,W] into [d*d,C,H/d,W/d]; sub-image i*d+j
/// holds the pixels at rows = i and columns = j (mod d). H, W must be multiples of d.
Image pd_down(const Image &img, std::size_t factor);
/// Exact inverse of pd_down.
Image pd_up(const Image &stack, std::size_t factor);
/// Reflect-pads bottom and right so both extents are multiples of `multiple`.
Image pad_to_multiple(const Image &img, std::size_t multiple);
/// Top-left height x width window.
Image crop_image(const Image &img, std::size_t height, std::size_t width);

struct TraceRow {
  std::size_t t = 0; ///< 1-based iteration
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> psnr;
};

/// Called after every iteration with the prediction y_t and the mask whose
/// hidden sites fed the ensemble (all hidden when mask_loss is off).
using FillObserver =
    std::function<void(std::size_t t, const Image &prediction, const Mask &ensemble_mask)>;

struct FillOptions {
  /// Scores the current ensemble (e.g. PSNR against a clean reference).
  std::function<double(const Image &ensemble)> quality;
  FillObserver observer;
};

struct FillResult {
  Image denoised;
  std::vector<TraceRow> trace;
  std::vector<std::uint32_t> hits;
  std::size_t never_masked = 0;
  std::size_t iterations_run = 0;
};

/// Per-image optimization from the model's current weights. x may be a
/// batch (the pixel-shuffle stack), optimized jointly. ybar starts at x.
FillResult iterative_fill(Hourglass<float> &model, const Image &x, const DenoiseConfig &config,
                          Rng &rng, const FillOptions &options = {});

/// Uniform per-pixel average of masked-site predictions over `samples`
/// random masks with fixed weights; never-masked pixels keep x.
Image direct_ensemble(const Hourglass<float> &model, const Image &x, double mask_ratio,
                      std::size_t samples, Rng &rng, bool shared_channels = false);

/// derive_seed() tags: scratch initialization and the per-image fill generator.
inline constexpr std::uint64_t kScratchInitStream = 0x5eed;
inline constexpr std::uint64_t kFillStream = 0xf111;

/// Builds the model named by config.init_weights ("scratch" or a weight file).
/// Scratch weights are drawn from derive_seed(config.seed, kScratchInitStream).
Hourglass<float> make_denoiser(const DenoiseConfig &config);

struct DenoiseResult {
  Image output; ///< unclipped
  std::vector<TraceRow> trace;
  std::size_t never_masked = 0;
  std::size_t iterations_run = 0;
};

/// Full pipeline: channel matching, optional pixel-shuffle split, iterative
/// filling and reassembly. `reference` (clean image) enables PSNR tracing.
/// The fill generator is seeded with derive_seed(config.seed, kFillStream).
DenoiseResult denoise(Hourglass<float> &model, const DenoiseConfig &config, const Image &x,
                      const Image *reference = nullptr, const FillObserver &observer = {});
DenoiseResult denoise(const DenoiseConfig &config, const Image &x,
                      const Image *reference = nullptr);

} // namespace maskfill
