// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "maskfill/error.hpp"
#include "maskfill/image_io.hpp"
#include "maskfill/pretrain.hpp"
#include "support/gradcheck.hpp"

using namespace maskfill;
namespace fs = std::filesystem;

namespace {

Image random_image(const Shape &shape, Rng &rng) {
  return testing::random_tensor(shape, rng, 0.0, 1.0).cast<float>();
}

HourglassConfig tiny(std::uint32_t channels = 3) {
  return HourglassConfig{.in_channels = channels, .depth = 2, .base_channels = 4, .max_channels = 8};
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("maskfill_test_pretrain_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

} // namespace

TEST_CASE("cosine_lr: endpoints and midpoint") {
  CHECK(cosine_lr(0, 2000, 2e-3, 1e-5) == doctest::Approx(2e-3).epsilon(1e-15));
  CHECK(cosine_lr(2000, 2000, 2e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK(cosine_lr(1000, 2000, 2e-3, 1e-5) == doctest::Approx(1.005e-3).epsilon(1e-14));
  CHECK_THROWS_AS(cosine_lr(2001, 2000, 2e-3, 1e-5), ContractViolation);
}

TEST_CASE("cosine_lr: closed form at every step") {
  const std::size_t total = 80000;
  double worst = 0.0;
  for (std::size_t s = 0; s <= total; ++s) {
    const double expected =
        1e-5 + (2e-3 - 1e-5) * (1.0 + std::cos(std::numbers::pi * double(s) / double(total))) / 2.0;
    worst = std::max(worst, std::abs(cosine_lr(s, total, 2e-3, 1e-5) - expected));
  }
  CHECK(worst < 1e-18);
}

TEST_CASE("sampler: an exactly sized source yields the whole image") {
  Rng rng(1);
  const Image img = random_image({1, 3, 16, 16}, rng);
  CorpusSampler sampler({img}, 3, 5);
  const auto crop = sampler.sample(16);
  CHECK(crop.top == 0);
  CHECK(crop.left == 0);
  CHECK(crop.pixels == img);
}

TEST_CASE("sampler: crops copy the source window") {
  Rng rng(2);
  const Image a = random_image({1, 3, 40, 33}, rng), b = random_image({1, 3, 21, 50}, rng);
  CorpusSampler sampler({a, b}, 3, 6);
  for (int i = 0; i < 200; ++i) {
    const auto crop = sampler.sample(20);
    const Image &src = crop.source == 0 ? a : b;
    REQUIRE(crop.top + 20 <= src.dim(2));
    REQUIRE(crop.left + 20 <= src.dim(3));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 0; x < 20; ++x)
          REQUIRE(crop.pixels.at(0, c, y, x) == src.at(0, c, crop.top + y, crop.left + x));
  }
}

TEST_CASE("sampler: crop origins are uniform (chi-square, alpha = 0.01)") {
  const Image img = make_image(1, 40, 40);
  CorpusSampler sampler({img}, 1, 7);
  // 10 x 10 possible origins for a 31-pixel crop
  std::vector<double> counts(100, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto crop = sampler.sample(31);
    counts[crop.top * 10 + crop.left] += 1.0;
  }
  double chi2 = 0.0;
  const double expected = draws / 100.0;
  for (double c : counts)
    chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 134.642); // 99 degrees of freedom
}

TEST_CASE("sampler: small sources are skipped, grayscale is replicated") {
  Rng rng(3);
  const Image gray = random_image({1, 1, 24, 24}, rng);
  CorpusSampler sampler({make_image(3, 8, 8), gray}, 3, 9);
  for (int i = 0; i < 20; ++i) {
    const auto crop = sampler.sample(16);
    REQUIRE(crop.source == 1);
    REQUIRE(crop.pixels.dim(1) == 3);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const float g = gray.at(0, 0, crop.top + y, crop.left + x);
        REQUIRE(crop.pixels.at(0, 0, y, x) == g);
        REQUIRE(crop.pixels.at(0, 2, y, x) == g);
      }
  }
  CHECK_THROWS_AS(sampler.sample(32), ConfigError);
}

TEST_CASE("sampler: an empty corpus is a configuration error") {
  const auto dir = scratch_dir("empty");
  CHECK_THROWS_AS(CorpusSampler::from_directory(dir, 3, 0), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("pretrain_step: p = 0 is a no-op with zero loss") {
  Rng rng(4);
  Hourglass<float> model(tiny(), rng);
  const auto before = model.parameters();
  AdamState<float> adam(std::span<const Tensor<float>>(model.parameters()));
  std::vector<Rng> streams{Rng(1), Rng(2)};
  const double loss = pretrain_step(model, adam, random_image({2, 3, 16, 16}, rng), 0.0, 1e-3, streams);
  CHECK(loss == 0.0);
  CHECK(model.parameters() == before);
  CHECK(adam.step == 0);
}

TEST_CASE("pretrain_step: batch order does not change the loss") {
  Rng rng(5);
  const Hourglass<float> model(tiny(), rng);
  const Image batch = random_image({3, 3, 16, 16}, rng);
  const std::size_t n = batch.numel() / 3;
  Image swapped(batch.shape());
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t b = 0; b < 3; ++b)
    std::copy_n(batch.data() + order[b] * n, n, swapped.data() + b * n);

  auto loss_of = [&](const Image &x, std::vector<Rng> streams) {
    Hourglass<float> m = model;
    AdamState<float> adam(std::span<const Tensor<float>>(m.parameters()));
    return pretrain_step(m, adam, x, 0.3, 1e-3, streams);
  };
  const double a = loss_of(batch, {Rng(10), Rng(11), Rng(12)});
  const double b = loss_of(swapped, {Rng(12), Rng(10), Rng(11)});
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("run_pretrain: a constant corpus is learned") {
  PretrainConfig cfg;
  cfg.crop_size = 16;
  cfg.batch_size = 2;
  cfg.total_steps = 200;
  cfg.model = tiny();
  cfg.seed = 3;
  CorpusSampler sampler({make_image(3, 24, 24, 0.6f)}, 3, 1);
  const auto result = run_pretrain(cfg, sampler);
  REQUIRE(result.log.size() == 200);
  CHECK(result.log.back().loss < result.log.front().loss);
  CHECK(result.log.back().loss < 0.01 * result.log.front().loss);
}

TEST_CASE("run_pretrain: fixed seed gives identical trajectories and files") {
  const auto dir = scratch_dir("determinism");
  Rng rng(6);
  for (int i = 0; i < 3; ++i)
    save_image(random_image({1, 3, 20 + 4 * std::size_t(i), 24}, rng), dir / ("img" + std::to_string(i) + ".ppm"));
  PretrainConfig cfg;
  cfg.corpus_dir = dir;
  cfg.crop_size = 16;
  cfg.batch_size = 2;
  cfg.total_steps = 6;
  cfg.model = tiny();
  cfg.seed = 11;
  const auto r1 = run_pretrain(cfg, dir / "a.bin", dir / "a.csv");
  const auto r2 = run_pretrain(cfg, dir / "b.bin", dir / "b.csv");
  for (std::size_t i = 0; i < r1.log.size(); ++i)
    CHECK(r1.log[i].loss == r2.log[i].loss);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  cfg.seed = 12;
  const auto r3 = run_pretrain(cfg, dir / "c.bin");
  CHECK(slurp(dir / "a.bin") != slurp(dir / "c.bin"));
  fs::remove_all(dir);
}

TEST_CASE("run_pretrain: a single step writes a loadable file and a log row") {
  const auto dir = scratch_dir("single");
  Rng rng(7);
  save_image(random_image({1, 3, 16, 16}, rng), dir / "only.ppm");
  PretrainConfig cfg;
  cfg.corpus_dir = dir;
  cfg.crop_size = 16;
  cfg.batch_size = 1;
  cfg.total_steps = 1;
  cfg.model = tiny();
  run_pretrain(cfg, dir / "w.bin", dir / "log.csv");
  const ModelWeights w = load_weights(dir / "w.bin", cfg.model);
  CHECK(w.parameter_count() == Hourglass<float>(w).parameter_count());
  const std::string log = slurp(dir / "log.csv");
  CHECK(log.starts_with("step,lr,loss\n0,0.002,"));
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  fs::remove_all(dir);
}

TEST_CASE("pretrain config validation") {
  PretrainConfig cfg;
  cfg.lr_min = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.total_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.mask_ratio = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
