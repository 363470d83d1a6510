// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "maskfill/error.hpp"
#include "maskfill/metrics.hpp"
#include "maskfill/noise.hpp"
#include "support/gradcheck.hpp"

using namespace maskfill;

namespace {

Image random_image(const Shape &shape, Rng &rng) {
  return testing::random_tensor(shape, rng, 0.0, 1.0).cast<float>();
}

// Mean SSIM of two constant images: variances and covariance vanish.
double constant_ssim(double a, double b, double k1 = 0.01) {
  const double c1 = k1 * k1;
  return (2 * a * b + c1) / (a * a + b * b + c1);
}

} // namespace

TEST_CASE("psnr: uniform difference of 0.1 is 20 dB") {
  const Image a = make_image(3, 16, 16, 0.6f), b = make_image(3, 16, 16, 0.5f);
  // float storage of 0.6 and 0.5 perturbs the difference in the eighth digit
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-5);
  CHECK(psnr(a, b) == psnr(b, a));
  // exactly representable: difference 0.5 against peak 5
  CHECK(psnr(make_image(1, 4, 4, 1.0f), make_image(1, 4, 4, 0.5f), 5.0) == 20.0);
}

TEST_CASE("psnr: sigma = 0.1 gaussian pair is 20 +- 0.1 dB") {
  Rng rng(1);
  const Image clean = random_image({1, 3, 128, 128}, rng);
  const Image noisy = add_gaussian(clean, 0.1, rng);
  CHECK(std::abs(psnr(noisy, clean) - 20.0) < 0.1);
}

TEST_CASE("psnr: identical images hit the cap, unclipped values are used") {
  Rng rng(2);
  const Image a = random_image({1, 1, 8, 8}, rng);
  CHECK(psnr(a, a) == kPsnrCap);
  const Image over = make_image(1, 8, 8, 1.5f);
  CHECK(psnr(over, make_image(1, 8, 8, 1.0f)) == doctest::Approx(10.0 * std::log10(1.0 / 0.25)));
  CHECK_THROWS_AS(psnr(a, make_image(1, 8, 9)), ContractViolation);
}

TEST_CASE("ssim: identity and symmetry") {
  Rng rng(3);
  const Image a = random_image({1, 3, 32, 32}, rng);
  const Image b = add_gaussian(a, 0.05, rng);
  CHECK(ssim(a, a) == 1.0);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("ssim: constant images match the closed form") {
  for (const auto &[x, y] : {std::pair{0.5f, 0.5f}, std::pair{0.2f, 0.6f}, std::pair{0.9f, 0.1f},
                             std::pair{0.0f, 0.3f}}) {
    CAPTURE(x);
    CAPTURE(y);
    const Image a = make_image(3, 20, 24, x), b = make_image(3, 20, 24, y);
    CHECK(std::abs(ssim(a, b) - constant_ssim(x, y)) < 1e-6);
  }
}

TEST_CASE("ssim: decreases as noise grows") {
  Rng rng(4);
  Image clean = make_image(1, 48, 48);
  for (std::size_t i = 0; i < 48; ++i)
    for (std::size_t j = 0; j < 48; ++j)
      clean.at(0, 0, i, j) = 0.5f + 0.4f * std::sin(0.3f * i) * std::cos(0.2f * j);
  double previous = 1.0;
  for (double sigma : {0.01, 0.05, 0.1, 0.2}) {
    CAPTURE(sigma);
    const double s = ssim(add_gaussian(clean, sigma, rng), clean);
    CHECK(s < previous);
    previous = s;
  }
}

TEST_CASE("ssim: images smaller than the window are rejected") {
  CHECK_THROWS_AS(ssim(make_image(1, 10, 30), make_image(1, 10, 30)), ContractViolation);
  SsimOptions small;
  small.window = 7;
  CHECK_NOTHROW(ssim(make_image(1, 10, 30), make_image(1, 10, 30), small));
}

TEST_CASE("quantize8: clamps and rounds to 8-bit levels") {
  const Image x({1, 1, 1, 5}, std::vector<float>{-0.2f, 0.5f, 1.3f, 0.25f, 1.0f / 255.0f});
  const Image q = quantize8(x);
  CHECK(q[0] == 0.0f);
  CHECK(q[1] == 128.0f / 255.0f);
  CHECK(q[2] == 1.0f);
  CHECK(q[3] == 64.0f / 255.0f);
  CHECK(q[4] == 1.0f / 255.0f);
}

TEST_CASE("quality report: csv layout and means") {
  QualityReport report;
  CHECK(report.to_csv() == "path,noise_kind,param,psnr,ssim\n");
  report.rows.push_back({"a.png", "gaussian", "0.098", 30.0, 0.8});
  report.rows.push_back({"b.png", "", "", 20.0, 0.6});
  CHECK(report.mean_psnr() == 25.0);
  CHECK(report.mean_ssim() == doctest::Approx(0.7));
  CHECK(report.to_csv() == "path,noise_kind,param,psnr,ssim\n"
                           "a.png,gaussian,0.098,30.0000,0.800000\n"
                           "b.png,,,20.0000,0.600000\n"
                           "mean,,,25.0000,0.700000\n");
}
