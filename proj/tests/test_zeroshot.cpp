// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "maskfill/error.hpp"
#include "maskfill/metrics.hpp"
#include "maskfill/zeroshot.hpp"
#include "support/gradcheck.hpp"
#include "support/replay.hpp"

using namespace maskfill;
namespace fs = std::filesystem;

namespace {

Image random_image(const Shape &shape, Rng &rng) {
  return testing::random_tensor(shape, rng, 0.0, 1.0).cast<float>();
}

HourglassConfig tiny(std::uint32_t channels = 3) {
  return HourglassConfig{.in_channels = channels, .depth = 2, .base_channels = 4, .max_channels = 8};
}

DenoiseConfig quick(std::size_t iterations, EnsembleMode mode = {}) {
  DenoiseConfig cfg;
  cfg.iterations = iterations;
  cfg.beta = 0.9;
  cfg.ensemble = mode;
  cfg.model = tiny();
  cfg.seed = 21;
  return cfg;
}

} // namespace

TEST_CASE("ensemble modes: parse and format round trip") {
  for (const EnsembleMode m : {EnsembleMode{EnsembleKind::ema, 0}, EnsembleMode{EnsembleKind::average, 0},
                               EnsembleMode{EnsembleKind::last, 0}, EnsembleMode{EnsembleKind::avg_after, 500}})
    CHECK(parse_ensemble(format_ensemble(m)) == m);
  CHECK(parse_ensemble("avg_after=7") == EnsembleMode{EnsembleKind::avg_after, 7});
  for (const char *bad : {"", "EMA", "avg-after=", "avg-after=-1", "avg-after=3x", "median"})
    CHECK_THROWS_AS(parse_ensemble(bad), ConfigError);
}

TEST_CASE("ema_update: examples") {
  const Image x({1, 1, 1, 2}, std::vector<float>{0.5f, 0.2f});
  const Image y({1, 1, 1, 2}, std::vector<float>{1.0f, 0.8f});

  EmaEnsemble all_visible(x);
  ema_update(all_visible, y, Mask::visible(x.shape()), 0.9);
  CHECK(all_visible.value == x);
  CHECK(all_visible.never_updated() == 2);

  EmaEnsemble ens(x);
  const Mask first_hidden(Tensor<float>({1, 1, 1, 2}, std::vector<float>{0.0f, 1.0f}));
  ema_update(ens, y, first_hidden, 0.9);
  CHECK(ens.value[0] == doctest::Approx(0.55).epsilon(1e-6));
  CHECK(ens.value[1] == 0.2f);
  CHECK(ens.hits == std::vector<std::uint32_t>{1, 0});
  CHECK(ens.never_updated() == 1);

  CHECK_THROWS_AS(ema_update(ens, Image({1, 1, 1, 3}), first_hidden, 0.9), ContractViolation);
}

TEST_CASE("average_update and last_update: examples") {
  const Image x({1, 1, 1, 2}, std::vector<float>{0.5f, 0.2f});
  const Mask hidden = Mask::hidden(x.shape());
  const Mask second_only(Tensor<float>({1, 1, 1, 2}, std::vector<float>{1.0f, 0.0f}));
  const Image y1({1, 1, 1, 2}, std::vector<float>{0.1f, 0.3f});
  const Image y2({1, 1, 1, 2}, std::vector<float>{0.7f, 0.9f});

  EmaEnsemble avg(x);
  average_update(avg, y1, hidden);
  CHECK(avg.value == y1);
  average_update(avg, y2, second_only);
  CHECK(avg.value[0] == 0.1f);
  CHECK(avg.value[1] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(avg.hits == std::vector<std::uint32_t>{1, 2});

  EmaEnsemble last(x);
  last_update(last, y1, second_only);
  CHECK(last.value[0] == 0.5f);
  CHECK(last.value[1] == 0.3f);
  last_update(last, y2, hidden);
  CHECK(last.value == y2);
}

TEST_CASE("pd_down: sub-image layout") {
  Image img = make_image(1, 4, 4);
  for (std::size_t i = 0; i < 16; ++i)
    img[i] = static_cast<float>(i);
  const Image stack = pd_down(img, 2);
  REQUIRE(stack.shape() == Shape{4, 1, 2, 2});
  // sub-image i*d + j takes rows = i, columns = j (mod d)
  CHECK(stack.at(0, 0, 0, 0) == 0.0f);
  CHECK(stack.at(0, 0, 0, 1) == 2.0f);
  CHECK(stack.at(0, 0, 1, 0) == 8.0f);
  CHECK(stack.at(0, 0, 1, 1) == 10.0f);
  CHECK(stack.at(1, 0, 0, 0) == 1.0f);
  CHECK(stack.at(2, 0, 0, 0) == 4.0f);
  CHECK(stack.at(3, 0, 1, 1) == 15.0f);

  CHECK(pd_down(make_image(3, 64, 64), 2).shape() == Shape{4, 3, 32, 32});
  CHECK_THROWS_AS(pd_down(make_image(1, 5, 4), 2), ContractViolation);
  CHECK_THROWS_AS(pd_up(Image({3, 1, 2, 2}), 2), ContractViolation);
}

TEST_CASE("pixel shuffle: bit-exact round trip with pad and crop") {
  Rng rng(1);
  for (std::size_t d = 1; d <= 4; ++d)
    for (const Shape &s : {Shape{1, 3, 24, 24}, Shape{1, 3, 17, 30}, Shape{1, 1, 9, 7}, Shape{1, 3, 4, 4}}) {
      CAPTURE(d);
      CAPTURE(shape_string(s));
      const Image x = random_image(s, rng);
      const Image padded = pad_to_multiple(x, d);
      REQUIRE(padded.dim(2) % d == 0);
      REQUIRE(padded.dim(3) % d == 0);
      REQUIRE(padded.dim(2) - s[2] < d);
      REQUIRE(padded.dim(3) - s[3] < d);
      CHECK(pd_up(pd_down(padded, d), d) == padded);
      CHECK(crop_image(pd_up(pd_down(padded, d), d), s[2], s[3]) == x);
    }
  // single-pixel sub-images
  const Image x = random_image({1, 2, 3, 3}, rng);
  const Image stack = pd_down(x, 3);
  CHECK(stack.shape() == Shape{9, 2, 1, 1});
  CHECK(pd_up(stack, 3) == x);
}

TEST_CASE("iterative_fill: one ema step from x") {
  Rng rng(2);
  Hourglass<float> model(tiny(), rng);
  const Image x = random_image({1, 3, 16, 16}, rng);
  DenoiseConfig cfg = quick(1);
  cfg.beta = 0.75;
  std::vector<testing::FillRecord> records;
  FillOptions opts;
  opts.observer = testing::recorder(records);
  Rng fill(3);
  const FillResult r = iterative_fill(model, x, cfg, fill, opts);
  REQUIRE(records.size() == 1);
  const auto &[t, y, m] = records[0];
  CHECK(t == 1);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (m.is_hidden(i))
      REQUIRE(r.denoised[i] == doctest::Approx(0.75 * x[i] + 0.25 * y[i]).epsilon(1e-6));
    else
      REQUIRE(r.denoised[i] == x[i]);
  }
}

TEST_CASE("iterative_fill: replay oracle for every ensemble mode") {
  Rng rng(4);
  const Hourglass<float> base(tiny(), rng);
  const Image x = random_image({1, 3, 16, 16}, rng);
  for (const EnsembleMode mode : {EnsembleMode{EnsembleKind::ema, 0}, EnsembleMode{EnsembleKind::average, 0},
                                  EnsembleMode{EnsembleKind::last, 0}, EnsembleMode{EnsembleKind::avg_after, 20}}) {
    CAPTURE(format_ensemble(mode));
    const DenoiseConfig cfg = quick(60, mode);
    Hourglass<float> model = base;
    std::vector<testing::FillRecord> records;
    FillOptions opts;
    opts.observer = testing::recorder(records);
    Rng fill(5);
    const FillResult r = iterative_fill(model, x, cfg, fill, opts);
    REQUIRE(records.size() == 60);
    CHECK(testing::max_abs_difference(r.denoised, testing::replay_ensemble(x, records, mode, cfg.beta)) < 1e-6);
  }
}

TEST_CASE("iterative_fill: without mask loss every site feeds the ensemble") {
  Rng rng(6);
  Hourglass<float> model(tiny(), rng);
  const Image x = random_image({1, 3, 16, 16}, rng);
  DenoiseConfig cfg = quick(5);
  cfg.mask_loss = false;
  std::vector<testing::FillRecord> records;
  FillOptions opts;
  opts.observer = testing::recorder(records);
  Rng fill(7);
  const FillResult r = iterative_fill(model, x, cfg, fill, opts);
  for (const auto &rec : records)
    CHECK(rec.mask == Mask::hidden(x.shape()));
  CHECK(r.never_masked == 0);
  CHECK(testing::max_abs_difference(r.denoised, testing::replay_ensemble(x, records, cfg.ensemble, cfg.beta)) < 1e-6);
}

TEST_CASE("iterative_fill: invalid inputs") {
  Rng rng(8);
  Hourglass<float> model(tiny(), rng);
  Image x = make_image(3, 8, 8, std::numeric_limits<float>::quiet_NaN());
  Rng fill(9);
  CHECK_THROWS_AS(iterative_fill(model, x, quick(3), fill), NumericError);
  CHECK_THROWS_AS(iterative_fill(model, make_image(3, 8, 8), quick(0), fill), ConfigError);
  CHECK_THROWS_AS(iterative_fill(model, make_image(1, 8, 8), quick(3), fill), ContractViolation);
}

TEST_CASE("iterative_fill: coverage, trace and plateau stop") {
  Rng rng(10);
  const Hourglass<float> base(tiny(), rng);
  const Image x = random_image({1, 3, 16, 16}, rng);

  Hourglass<float> model = base;
  Rng fill(11);
  FillOptions opts;
  opts.quality = [&](const Image &e) { return psnr(e, x); };
  const FillResult r = iterative_fill(model, x, quick(100), fill, opts);
  CHECK(r.never_masked == 0);
  CHECK(r.iterations_run == 100);
  REQUIRE(r.trace.size() == 100);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    REQUIRE(r.trace[i].t == i + 1);
    REQUIRE(r.trace[i].lr == 2e-3);
    REQUIRE(r.trace[i].psnr.has_value());
  }

  DenoiseConfig cfg = quick(100);
  cfg.plateau = {5, 10.0}; // no window can improve by 1000%
  model = base;
  const FillResult stopped = iterative_fill(model, x, cfg, fill);
  CHECK(stopped.iterations_run == 10);
  CHECK(stopped.trace.size() == 10);
}

TEST_CASE("denoise: determinism and shape") {
  Rng rng(12);
  const Image x = random_image({1, 3, 19, 14}, rng);
  DenoiseConfig cfg = quick(8);
  const auto a = denoise(cfg, x);
  const auto b = denoise(cfg, x);
  CHECK(a.output.shape() == x.shape());
  CHECK(a.output == b.output);
  cfg.seed = 22;
  CHECK(denoise(cfg, x).output != a.output);
}

TEST_CASE("denoise: d = 1 is iterative_fill with the documented stream") {
  Rng rng(13);
  const Image x = random_image({1, 3, 16, 16}, rng);
  const DenoiseConfig cfg = quick(6);
  Hourglass<float> model = make_denoiser(cfg);
  Hourglass<float> copy = model;
  const auto full = denoise(model, cfg, x);
  Rng fill(derive_seed(cfg.seed, kFillStream));
  const auto direct = iterative_fill(copy, x, cfg, fill);
  CHECK(full.output == direct.denoised);
}

TEST_CASE("denoise: d = 2 conjugates iterative_fill by the pixel shuffle") {
  Rng rng(14);
  const Image x = random_image({1, 3, 21, 18}, rng);
  DenoiseConfig cfg = quick(6);
  cfg.pd_factor = 2;
  Hourglass<float> model = make_denoiser(cfg);
  Hourglass<float> copy = model;
  const auto full = denoise(model, cfg, x);
  Rng fill(derive_seed(cfg.seed, kFillStream));
  const auto inner = iterative_fill(copy, pd_down(pad_to_multiple(x, 2), 2), cfg, fill);
  CHECK(full.output.shape() == x.shape());
  CHECK(full.output == crop_image(pd_up(inner.denoised, 2), 21, 18));
}

TEST_CASE("denoise: grayscale input through a color model keeps one channel") {
  Rng rng(15);
  const Image x = random_image({1, 1, 12, 12}, rng);
  CHECK(denoise(quick(2), x).output.shape() == x.shape());
}

TEST_CASE("make_denoiser: scratch and file initialization") {
  DenoiseConfig cfg = quick(1);
  Rng init(derive_seed(cfg.seed, kScratchInitStream));
  const Hourglass<float> expected(cfg.model, init);
  CHECK(make_denoiser(cfg).parameters() == expected.parameters());

  const auto path = fs::temp_directory_path() / "maskfill_test_zeroshot_init.bin";
  save_weights(expected.to_weights(), path);
  cfg.init_weights = path.string();
  cfg.seed = 99;
  CHECK(make_denoiser(cfg).parameters() == expected.parameters());
  fs::remove(path);
  CHECK_THROWS_AS(make_denoiser(cfg), IoError);
}

TEST_CASE("direct_ensemble: single sample and constant head") {
  Rng rng(16);
  Hourglass<float> model(tiny(), rng);
  const Image x = random_image({1, 3, 16, 16}, rng);
  Rng a(17), b(17);
  const Image once = direct_ensemble(model, x, 0.3, 1, a);
  const Mask m = sample_mask(x.shape(), {0.3, false, 0}, b);
  const Image y = model.predict(apply_mask(m, x));
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(once[i] == (m.is_hidden(i) ? y[i] : x[i]));

  // all weights zero, output bias = the constant: predictions equal the image
  for (auto &p : model.parameters())
    for (auto &v : p.values())
      v = 0.0f;
  auto &head_bias = model.parameters().back();
  REQUIRE(model.names().back().ends_with(".bias"));
  for (auto &v : head_bias.values())
    v = 0.4f;
  const Image flat = make_image(3, 16, 16, 0.4f);
  Rng c(18);
  CHECK(direct_ensemble(model, flat, 0.5, 8, c) == flat);
  CHECK_THROWS_AS(direct_ensemble(model, flat, 0.5, 0, c), ContractViolation);
}
