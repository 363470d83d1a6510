// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "maskfill/error.hpp"
#include "maskfill/noise.hpp"

using namespace maskfill;

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(const std::vector<double> &v) {
  double s = 0.0, ss = 0.0;
  for (double x : v)
    s += x;
  const double mean = s / v.size();
  for (double x : v)
    ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (v.size() - 1))};
}

std::vector<double> residual(const Image &noisy, const Image &clean) {
  std::vector<double> r(noisy.numel());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = double(noisy[i]) - double(clean[i]);
  return r;
}

} // namespace

TEST_CASE("gaussian: standard deviation within 2%, zero mean, no clipping") {
  const Image clean = make_image(3, 256, 256, 0.02f);
  Rng rng(1);
  for (double sigma : {10.0 / 255, 25.0 / 255, 50.0 / 255}) {
    CAPTURE(sigma);
    const Image noisy = add_gaussian(clean, sigma, rng);
    const Moments m = moments(residual(noisy, clean));
    CHECK(std::abs(m.stddev / sigma - 1.0) < 0.02);
    CHECK(std::abs(m.mean) < 4.0 * sigma / std::sqrt(double(noisy.numel())));
  }
  // values near 0 go negative rather than being clamped
  const Image noisy = add_gaussian(clean, 0.2, rng);
  CHECK(*std::min_element(noisy.values().begin(), noisy.values().end()) < 0.0f);
}

TEST_CASE("poisson: unbiased mean within three standard errors") {
  Rng rng(2);
  for (double rate : {10.0, 25.0, 50.0})
    for (float level : {0.1f, 0.5f, 0.9f}) {
      CAPTURE(rate);
      CAPTURE(level);
      const Image clean = make_image(1, 200, 200, level);
      const Image noisy = add_poisson(clean, rate, rng);
      std::vector<double> v(noisy.values().begin(), noisy.values().end());
      const Moments m = moments(v);
      const double se = std::sqrt(level / rate / v.size());
      CHECK(std::abs(m.mean - level) < 3.0 * se);
      // variance I / rate
      CHECK(m.stddev * m.stddev == doctest::Approx(level / rate).epsilon(0.05));
      // quantized to multiples of 1/rate
      for (std::size_t i = 0; i < 50; ++i) {
        const double k = v[i] * rate;
        REQUIRE(std::abs(k - std::round(k)) < 1e-4);
      }
    }
}

TEST_CASE("nlf: read variance follows the log-linear law exactly") {
  for (double shot : {0.01, 0.011, 0.012, 0.5}) {
    CAPTURE(shot);
    // same expression, up to last-place rounding of constant folding
    CHECK(nlf_read_variance(shot) == doctest::Approx(std::exp(2.18 * std::log(shot) + 1.2)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(nlf_read_variance(0.0), ContractViolation);
}

TEST_CASE("nlf: residual variance is read + shot * I") {
  Rng rng(3);
  const double shot = 0.01;
  for (float level : {0.2f, 0.8f}) {
    CAPTURE(level);
    const Image clean = make_image(1, 256, 256, level);
    const Moments m = moments(residual(add_nlf(clean, shot, rng), clean));
    const double expected = std::sqrt(nlf_read_variance(shot) + shot * level);
    CHECK(std::abs(m.stddev / expected - 1.0) < 0.02);
  }
}

TEST_CASE("speckle: relative standard deviation within 2%") {
  Rng rng(4);
  const double v = 25.0 / 255.0;
  const Image clean = make_image(3, 256, 256, 0.6f);
  const Image noisy = add_speckle(clean, v, rng);
  std::vector<double> rel(noisy.numel());
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    rel[i] = (double(noisy[i]) - 0.6) / 0.6;
    lo = std::min(lo, rel[i]);
    hi = std::max(hi, rel[i]);
  }
  CHECK(std::abs(moments(rel).stddev / v - 1.0) < 0.02);
  // uniform support is [-sqrt(3) v, sqrt(3) v]
  CHECK(hi <= std::sqrt(3.0) * v + 1e-6);
  CHECK(lo >= -std::sqrt(3.0) * v - 1e-6);
  // black stays black
  CHECK(add_speckle(make_image(1, 8, 8), v, rng) == make_image(1, 8, 8));
}

TEST_CASE("salt and pepper: affected fraction 2d inside the binomial interval") {
  Rng rng(5);
  const Image clean = make_image(3, 256, 256, 0.5f);
  const double n = 256.0 * 256.0;
  for (double d : {0.02, 0.025, 0.05}) {
    CAPTURE(d);
    const Image noisy = add_salt_pepper(clean, d, rng);
    std::size_t salt = 0, pepper = 0;
    for (std::size_t i = 0; i < 256 * 256; ++i) {
      const float v = noisy.at(0, 0, i / 256, i % 256);
      REQUIRE((v == 0.5f || v == 0.0f || v == 1.0f));
      // all channels share the event
      REQUIRE(noisy.at(0, 1, i / 256, i % 256) == v);
      REQUIRE(noisy.at(0, 2, i / 256, i % 256) == v);
      salt += v == 1.0f;
      pepper += v == 0.0f;
    }
    const double frac = (salt + pepper) / n;
    CHECK(std::abs(frac - 2 * d) <= 3.0 * std::sqrt(2 * d * (1 - 2 * d) / n));
    CHECK(std::abs(salt / n - d) <= 3.0 * std::sqrt(d * (1 - d) / n));
  }
}

TEST_CASE("zero-strength noise is the identity") {
  Rng rng(6);
  Image clean = make_image(3, 16, 16);
  for (std::size_t i = 0; i < clean.numel(); ++i)
    clean[i] = float(i % 17) / 16.0f;
  CHECK(add_gaussian(clean, 0.0, rng) == clean);
  CHECK(add_speckle(clean, 0.0, rng) == clean);
  CHECK(add_salt_pepper(clean, 0.0, rng) == clean);
}

TEST_CASE("add_noise: dispatch and seeding") {
  const Image clean = make_image(3, 32, 32, 0.5f);
  const NoiseSpec spec{GaussianNoise{0.1}, 42};
  CHECK(add_noise(clean, spec) == add_noise(clean, spec));
  CHECK(add_noise(clean, spec) != add_noise(clean, NoiseSpec{GaussianNoise{0.1}, 43}));
  Rng a(42);
  CHECK(add_noise(clean, spec) == add_gaussian(clean, 0.1, a));
}

TEST_CASE("parse_noise: round trip and errors") {
  CHECK(std::get<GaussianNoise>(parse_noise("gaussian:25/255")).sigma == 25.0 / 255.0);
  CHECK(std::get<PoissonNoise>(parse_noise("poisson:25")).rate == 25.0);
  CHECK(std::get<NlfNoise>(parse_noise("nlf:0.01")).shot == 0.01);
  CHECK(std::get<SpeckleNoise>(parse_noise("speckle:0.098")).stddev == 0.098);
  CHECK(std::get<SaltPepperNoise>(parse_noise("sp:0.03")).density == 0.03);
  for (const NoiseModel m : {NoiseModel{GaussianNoise{0.1}}, NoiseModel{PoissonNoise{12.5}},
                             NoiseModel{NlfNoise{0.011}}, NoiseModel{SpeckleNoise{1.0 / 3}},
                             NoiseModel{SaltPepperNoise{0.04}}}) {
    const NoiseModel back = parse_noise(format_noise(m));
    CHECK(noise_kind(back) == noise_kind(m));
    CHECK(noise_parameter(back) == noise_parameter(m));
  }
  for (const char *bad : {"gaussian", "blur:1", "gaussian:x", "gaussian:1/0", "poisson:0",
                          "saltpepper:0.6", "gaussian:-1", "nlf:0"})
    CHECK_THROWS_AS(parse_noise(bad), ConfigError);
}

TEST_CASE("generalization ranges") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double g = std::get<GaussianNoise>(sample_generalization_noise(NoiseFamily::gaussian, rng)).sigma;
    REQUIRE((g >= 10.0 / 255 && g <= 50.0 / 255));
    const double p = std::get<PoissonNoise>(sample_generalization_noise(NoiseFamily::poisson, rng)).rate;
    REQUIRE((p >= 10.0 && p <= 50.0));
    const double s = std::get<NlfNoise>(sample_generalization_noise(NoiseFamily::nlf, rng)).shot;
    REQUIRE((s >= 0.01 && s <= 0.012));
    const double v = std::get<SpeckleNoise>(sample_generalization_noise(NoiseFamily::speckle, rng)).stddev;
    REQUIRE((v >= 10.0 / 255 && v <= 50.0 / 255));
    const double d =
        std::get<SaltPepperNoise>(sample_generalization_noise(NoiseFamily::salt_pepper, rng)).density;
    REQUIRE((d >= 0.02 && d <= 0.05));
  }
}
