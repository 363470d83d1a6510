// SPDX-License-Identifier: Apache-2.0
#include "maskfill/zeroshot.hpp"

#include <cmath>
#include <numeric>

#include "maskfill/adam.hpp"
#include "maskfill/image_io.hpp"
#include "maskfill/metrics.hpp"
#include "maskfill/ops.hpp"

namespace maskfill {

EnsembleMode parse_ensemble(const std::string &text) {
  if (text == "ema")
    return {EnsembleKind::ema, 0};
  if (text == "average")
    return {EnsembleKind::average, 0};
  if (text == "last")
    return {EnsembleKind::last, 0};
  for (const char *prefix : {"avg-after=", "avg_after="}) {
    const std::string p(prefix);
    if (text.rfind(p, 0) == 0) {
      try {
        std::size_t used = 0;
        const long k = std::stol(text.substr(p.size()), &used);
        if (k < 0 || used != text.size() - p.size())
          throw std::invalid_argument(text);
        return {EnsembleKind::avg_after, static_cast<std::size_t>(k)};
      } catch (const std::exception &) {
        throw ConfigError("ensemble mode '" + text + "': bad iteration count");
      }
    }
  }
  throw ConfigError("unknown ensemble mode '" + text + "' (ema, average, last, avg-after=K)");
}

std::string format_ensemble(const EnsembleMode &mode) {
  switch (mode.kind) {
  case EnsembleKind::ema:
    return "ema";
  case EnsembleKind::average:
    return "average";
  case EnsembleKind::last:
    return "last";
  case EnsembleKind::avg_after:
    return "avg-after=" + std::to_string(mode.after);
  }
  return "ema";
}

void DenoiseConfig::validate() const {
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw ConfigError("denoise: mask_ratio must lie in [0,1]");
  if (iterations < 1)
    throw ConfigError("denoise: iterations must be at least 1");
  if (ensemble.kind == EnsembleKind::ema && !(beta > 0.0 && beta < 1.0))
    throw ConfigError("denoise: ema needs 0 < beta < 1");
  if (!(lr > 0.0))
    throw ConfigError("denoise: lr must be positive");
  if (pd_factor < 1)
    throw ConfigError("denoise: pd factor must be at least 1");
  if (init_weights.empty())
    throw ConfigError("denoise: init_weights must be 'scratch' or a weight file");
}

EmaEnsemble::EmaEnsemble(Image init) : value(std::move(init)), hits(value.numel(), 0) {}

std::size_t EmaEnsemble::never_updated() const {
  return static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 0u));
}

namespace {

void check_congruent(const EmaEnsemble &ens, const Image &y, const Mask &m) {
  expects(ens.value.same_shape(y) && y.shape() == m.shape(),
          "ensemble update: ensemble " + shape_string(ens.value.shape()) + ", prediction " +
              shape_string(y.shape()) + ", mask " + shape_string(m.shape()));
}

} // namespace

void ema_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask, double beta) {
  check_congruent(ens, prediction, mask);
  const float b = static_cast<float>(beta);
  const float a = static_cast<float>(1.0 - beta);
  for (std::size_t i = 0; i < prediction.numel(); ++i) {
    if (!mask.is_hidden(i))
      continue;
    ens.value[i] = b * ens.value[i] + a * prediction[i];
    ++ens.hits[i];
  }
}

void average_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask) {
  check_congruent(ens, prediction, mask);
  for (std::size_t i = 0; i < prediction.numel(); ++i) {
    if (!mask.is_hidden(i))
      continue;
    const std::uint32_t n = ++ens.hits[i];
    ens.value[i] = n == 1 ? prediction[i]
                          : ens.value[i] + (prediction[i] - ens.value[i]) / static_cast<float>(n);
  }
}

void last_update(EmaEnsemble &ens, const Image &prediction, const Mask &mask) {
  check_congruent(ens, prediction, mask);
  for (std::size_t i = 0; i < prediction.numel(); ++i) {
    if (!mask.is_hidden(i))
      continue;
    ens.value[i] = prediction[i];
    ++ens.hits[i];
  }
}

Image pd_down(const Image &img, std::size_t factor) {
  expect_image_shape(img, "pd_down");
  expects(factor >= 1, "pd_down: factor must be positive");
  expects(img.dim(0) == 1, "pd_down: expected a single image");
  const std::size_t c = img.dim(1), h = img.dim(2), w = img.dim(3);
  expects(h % factor == 0 && w % factor == 0,
          "pd_down: extents " + shape_string(img.shape()) + " not divisible by " +
              std::to_string(factor));
  const std::size_t sh = h / factor, sw = w / factor;
  Image stack({factor * factor, c, sh, sw});
  for (std::size_t i = 0; i < factor; ++i)
    for (std::size_t j = 0; j < factor; ++j)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < sh; ++y)
          for (std::size_t x = 0; x < sw; ++x)
            stack.at(i * factor + j, ch, y, x) = img.at(0, ch, y * factor + i, x * factor + j);
  return stack;
}

Image pd_up(const Image &stack, std::size_t factor) {
  expect_image_shape(stack, "pd_up");
  expects(factor >= 1, "pd_up: factor must be positive");
  expects(stack.dim(0) == factor * factor,
          "pd_up: stack holds " + std::to_string(stack.dim(0)) + " sub-images, expected " +
              std::to_string(factor * factor));
  const std::size_t c = stack.dim(1), sh = stack.dim(2), sw = stack.dim(3);
  Image img = make_image(c, sh * factor, sw * factor);
  for (std::size_t i = 0; i < factor; ++i)
    for (std::size_t j = 0; j < factor; ++j)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < sh; ++y)
          for (std::size_t x = 0; x < sw; ++x)
            img.at(0, ch, y * factor + i, x * factor + j) = stack.at(i * factor + j, ch, y, x);
  return img;
}

Image pad_to_multiple(const Image &img, std::size_t multiple) {
  expect_image_shape(img, "pad_to_multiple");
  expects(multiple >= 1, "pad_to_multiple: multiple must be positive");
  const std::size_t h = img.dim(2), w = img.dim(3);
  const std::size_t ph = (multiple - h % multiple) % multiple;
  const std::size_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0)
    return img;
  Tape<float> tape;
  return reflect_pad(tape.constant(img), 0, ph, 0, pw).value();
}

Image crop_image(const Image &img, std::size_t height, std::size_t width) {
  expect_image_shape(img, "crop_image");
  if (img.dim(2) == height && img.dim(3) == width)
    return img;
  Tape<float> tape;
  return crop(tape.constant(img), 0, 0, height, width).value();
}

FillResult iterative_fill(Hourglass<float> &model, const Image &x, const DenoiseConfig &config,
                          Rng &rng, const FillOptions &options) {
  config.validate();
  expect_image_shape(x, "iterative_fill");
  expects(x.dim(1) == model.config().in_channels,
          "iterative_fill: image has " + std::to_string(x.dim(1)) + " channels, model expects " +
              std::to_string(model.config().in_channels));

  AdamState<float> optimizer(std::span<const Tensor<float>>(model.parameters()), 0.9, 0.9, 1e-8);
  EmaEnsemble ensemble(x);
  const MaskSpec spec{config.mask_ratio, config.shared_channels, config.seed};
  const Mask everywhere = Mask::hidden(x.shape());

  FillResult result;
  std::vector<double> losses;
  std::vector<Tensor<float>> grads;
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    const Mask mask = sample_mask(x.shape(), spec, rng);

    Tape<float> tape;
    const auto params = model.bind(tape);
    Var<float> pred = model.forward(params, tape.constant(apply_mask(mask, x)));
    Var<float> loss = config.mask_loss ? masked_mse(pred, x, mask.negate()) : mse(pred, x);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value))
      throw NumericError("iterative_fill: non-finite loss at iteration " + std::to_string(t));

    // y_t comes from theta_t, before this iteration's update.
    const Image &prediction = pred.value();
    const Mask &ensemble_mask = config.mask_loss ? mask : everywhere;
    switch (config.ensemble.kind) {
    case EnsembleKind::ema:
      ema_update(ensemble, prediction, ensemble_mask, config.beta);
      break;
    case EnsembleKind::average:
      average_update(ensemble, prediction, ensemble_mask);
      break;
    case EnsembleKind::avg_after:
      if (t >= config.ensemble.after)
        average_update(ensemble, prediction, ensemble_mask);
      break;
    case EnsembleKind::last:
      last_update(ensemble, prediction, ensemble_mask);
      break;
    }
    if (options.observer)
      options.observer(t, prediction, ensemble_mask);

    if (mask.hidden_count() > 0 || !config.mask_loss) {
      auto g = tape.backward(loss);
      grads.clear();
      for (const auto &p : params)
        grads.push_back(g.take(p));
      adam_step<float>(model.parameters(), grads, optimizer, config.lr);
    }

    TraceRow row{t, loss_value, config.lr, std::nullopt};
    if (options.quality)
      row.psnr = options.quality(ensemble.value);
    result.trace.push_back(row);
    result.iterations_run = t;

    losses.push_back(loss_value);
    const std::size_t w = config.plateau.window;
    if (w > 0 && losses.size() >= 2 * w) {
      const auto end = losses.end();
      const double recent = std::accumulate(end - static_cast<long>(w), end, 0.0) / w;
      const double before =
          std::accumulate(end - 2 * static_cast<long>(w), end - static_cast<long>(w), 0.0) / w;
      if (before <= 0.0 || (before - recent) / before < config.plateau.threshold)
        break;
    }
  }
  result.denoised = std::move(ensemble.value);
  result.never_masked = ensemble.never_updated();
  result.hits = std::move(ensemble.hits);
  return result;
}

Image direct_ensemble(const Hourglass<float> &model, const Image &x, double mask_ratio,
                      std::size_t samples, Rng &rng, bool shared_channels) {
  expects(samples >= 1, "direct_ensemble: need at least one sample");
  expect_image_shape(x, "direct_ensemble");
  const MaskSpec spec{mask_ratio, shared_channels, 0};
  std::vector<double> sum(x.numel(), 0.0);
  std::vector<std::uint32_t> count(x.numel(), 0);
  for (std::size_t k = 0; k < samples; ++k) {
    const Mask mask = sample_mask(x.shape(), spec, rng);
    const Image y = model.predict(apply_mask(mask, x));
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (!mask.is_hidden(i))
        continue;
      sum[i] += y[i];
      ++count[i];
    }
  }
  Image out = x;
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (count[i] > 0)
      out[i] = static_cast<float>(sum[i] / count[i]);
  return out;
}

Hourglass<float> make_denoiser(const DenoiseConfig &config) {
  if (config.init_weights == "scratch") {
    Rng init(derive_seed(config.seed, kScratchInitStream));
    return Hourglass<float>(config.model, init);
  }
  return Hourglass<float>(load_weights(config.init_weights));
}

DenoiseResult denoise(Hourglass<float> &model, const DenoiseConfig &config, const Image &x,
                      const Image *reference, const FillObserver &observer) {
  config.validate();
  expect_image_shape(x, "denoise");
  expects(x.dim(0) == 1, "denoise: expected a single image");
  if (reference)
    expects(reference->same_shape(x), "denoise: reference shape differs from the input");

  const std::size_t channels = model.config().in_channels;
  const std::size_t h = x.dim(2), w = x.dim(3), d = config.pd_factor;
  const Image input = match_channels(x, channels);

  // Maps the working ensemble back to the caller's geometry.
  auto assemble = [&](const Image &work) {
    Image full = d > 1 ? crop_image(pd_up(work, d), h, w) : work;
    return match_channels(full, x.dim(1));
  };

  FillOptions options;
  options.observer = observer;
  if (reference)
    options.quality = [&](const Image &ensemble) { return psnr(assemble(ensemble), *reference); };

  const Image work = d > 1 ? pd_down(pad_to_multiple(input, d), d) : input;
  Rng rng(derive_seed(config.seed, kFillStream));
  FillResult fill = iterative_fill(model, work, config, rng, options);

  DenoiseResult result;
  result.output = assemble(fill.denoised);
  result.trace = std::move(fill.trace);
  result.never_masked = fill.never_masked;
  result.iterations_run = fill.iterations_run;
  return result;
}

DenoiseResult denoise(const DenoiseConfig &config, const Image &x, const Image *reference) {
  config.validate();
  Hourglass<float> model = make_denoiser(config);
  return denoise(model, config, x, reference);
}

} // namespace maskfill
