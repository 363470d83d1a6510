// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "maskfill/random.hpp"
#include "maskfill/tensor.hpp"

namespace maskfill {

/// Additive N(0, sigma^2); sigma on the [0,1] intensity scale.
struct GaussianNoise {
  double sigma = 25.0 / 255.0;
};

/// P(I * rate) / rate.
struct PoissonNoise {
  double rate = 25.0;
};

/// Heteroscedastic Gaussian with variance read + shot * I, where
/// ln(read) = 2.18 ln(shot) + 1.2.
struct NlfNoise {
  double shot = 0.01;
};

/// I + I * U with U uniform, zero mean and standard deviation `stddev`.
struct SpeckleNoise {
  double stddev = 25.0 / 255.0;
};

/// Each pixel becomes white with probability `density`, black with
/// probability `density`, across all channels at once.
struct SaltPepperNoise {
  double density = 0.025;
};

using NoiseModel =
    std::variant<GaussianNoise, PoissonNoise, NlfNoise, SpeckleNoise, SaltPepperNoise>;

struct NoiseSpec {
  NoiseModel model = GaussianNoise{};
  std::uint64_t seed = 0;
};

double nlf_read_variance(double shot);

Image add_gaussian(const Image &img, double sigma, Rng &rng);
Image add_poisson(const Image &img, double rate, Rng &rng);
Image add_nlf(const Image &img, double shot, Rng &rng);
Image add_speckle(const Image &img, double stddev, Rng &rng);
Image add_salt_pepper(const Image &img, double density, Rng &rng);

/// Dispatches on the model; the generator is seeded from spec.seed.
Image add_noise(const Image &img, const NoiseSpec &spec);
Image add_noise(const Image &img, const NoiseModel &model, Rng &rng);

void validate(const NoiseModel &model);

/// Text form "kind:value", e.g. "gaussian:0.098", "poisson:25", "nlf:0.01",
/// "speckle:0.098", "saltpepper:0.025". Gaussian and speckle also accept a
/// "/255" suffix ("gaussian:25/255").
NoiseModel parse_noise(const std::string &text);
std::string format_noise(const NoiseModel &model);
std::string noise_kind(const NoiseModel &model);
double noise_parameter(const NoiseModel &model);

enum class NoiseFamily { gaussian, poisson, nlf, speckle, salt_pepper };

/// Draws a model whose parameter is uniform over the generalization range of
/// its family: gaussian sigma and speckle v in [10,50]/255, poisson rate in
/// [10,50], salt-and-pepper density in [0.02,0.05], nlf shot in [0.01,0.012].
NoiseModel sample_generalization_noise(NoiseFamily family, Rng &rng);

} // namespace maskfill
