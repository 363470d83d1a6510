// SPDX-License-Identifier: Apache-2.0
#include "maskfill/noise.hpp"

#include <cmath>
#include <random>

namespace maskfill {

namespace {
template <class... Ts> struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;
} // namespace

double nlf_read_variance(double shot) {
  expects(shot > 0.0, "nlf: shot coefficient must be positive");
  return std::exp(2.18 * std::log(shot) + 1.2);
}

Image add_gaussian(const Image &img, double sigma, Rng &rng) {
  expects(sigma >= 0.0, "gaussian noise: sigma must be non-negative");
  Image out = img;
  if (sigma == 0.0)
    return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto &v : out.values())
    v = static_cast<float>(v + sigma * normal(rng));
  return out;
}

Image add_poisson(const Image &img, double rate, Rng &rng) {
  expects(rate > 0.0, "poisson noise: rate must be positive");
  Image out = img;
  for (auto &v : out.values()) {
    const double mean = std::max(0.0, static_cast<double>(v)) * rate;
    if (mean == 0.0) {
      v = 0.0f;
      continue;
    }
    std::poisson_distribution<long> poisson(mean);
    v = static_cast<float>(static_cast<double>(poisson(rng)) / rate);
  }
  return out;
}

Image add_nlf(const Image &img, double shot, Rng &rng) {
  const double read = nlf_read_variance(shot);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image out = img;
  for (auto &v : out.values()) {
    const double variance = std::max(0.0, read + shot * static_cast<double>(v));
    v = static_cast<float>(v + std::sqrt(variance) * normal(rng));
  }
  return out;
}

Image add_speckle(const Image &img, double stddev, Rng &rng) {
  expects(stddev >= 0.0, "speckle noise: stddev must be non-negative");
  Image out = img;
  if (stddev == 0.0)
    return out;
  const double half_width = stddev * std::sqrt(3.0);
  for (auto &v : out.values()) {
    const double u = (2.0 * uniform01(rng) - 1.0) * half_width;
    v = static_cast<float>(v + v * u);
  }
  return out;
}

Image add_salt_pepper(const Image &img, double density, Rng &rng) {
  expects(density >= 0.0 && 2.0 * density <= 1.0,
          "salt-and-pepper noise: density must satisfy 0 <= 2d <= 1");
  expect_image_shape(img, "add_salt_pepper");
  Image out = img;
  if (density == 0.0)
    return out;
  const std::size_t batch = img.dim(0), channels = img.dim(1);
  const std::size_t plane = img.dim(2) * img.dim(3);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double u = uniform01(rng);
      if (u >= 2.0 * density)
        continue;
      const float value = u < density ? 1.0f : 0.0f;
      for (std::size_t c = 0; c < channels; ++c)
        out[(n * channels + c) * plane + i] = value;
    }
  }
  return out;
}

void validate(const NoiseModel &model) {
  std::visit(overloaded{
                 [](const GaussianNoise &m) { expects(m.sigma >= 0.0, "gaussian: sigma < 0"); },
                 [](const PoissonNoise &m) { expects(m.rate > 0.0, "poisson: rate must be > 0"); },
                 [](const NlfNoise &m) { expects(m.shot > 0.0, "nlf: shot must be > 0"); },
                 [](const SpeckleNoise &m) { expects(m.stddev >= 0.0, "speckle: v < 0"); },
                 [](const SaltPepperNoise &m) {
                   expects(m.density >= 0.0 && 2.0 * m.density <= 1.0,
                           "saltpepper: need 0 <= 2d <= 1");
                 },
             },
             model);
}

Image add_noise(const Image &img, const NoiseModel &model, Rng &rng) {
  return std::visit(
      overloaded{
          [&](const GaussianNoise &m) { return add_gaussian(img, m.sigma, rng); },
          [&](const PoissonNoise &m) { return add_poisson(img, m.rate, rng); },
          [&](const NlfNoise &m) { return add_nlf(img, m.shot, rng); },
          [&](const SpeckleNoise &m) { return add_speckle(img, m.stddev, rng); },
          [&](const SaltPepperNoise &m) { return add_salt_pepper(img, m.density, rng); },
      },
      model);
}

Image add_noise(const Image &img, const NoiseSpec &spec) {
  Rng rng(spec.seed);
  return add_noise(img, spec.model, rng);
}

std::string noise_kind(const NoiseModel &model) {
  return std::visit(overloaded{
                        [](const GaussianNoise &) { return std::string("gaussian"); },
                        [](const PoissonNoise &) { return std::string("poisson"); },
                        [](const NlfNoise &) { return std::string("nlf"); },
                        [](const SpeckleNoise &) { return std::string("speckle"); },
                        [](const SaltPepperNoise &) { return std::string("saltpepper"); },
                    },
                    model);
}

double noise_parameter(const NoiseModel &model) {
  return std::visit(overloaded{
                        [](const GaussianNoise &m) { return m.sigma; },
                        [](const PoissonNoise &m) { return m.rate; },
                        [](const NlfNoise &m) { return m.shot; },
                        [](const SpeckleNoise &m) { return m.stddev; },
                        [](const SaltPepperNoise &m) { return m.density; },
                    },
                    model);
}

std::string format_noise(const NoiseModel &model) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", noise_parameter(model));
  return noise_kind(model) + ":" + buf;
}

NoiseModel parse_noise(const std::string &text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw ConfigError("noise spec '" + text + "' must look like kind:value");
  const std::string kind = text.substr(0, colon);
  std::string value = text.substr(colon + 1);
  double divisor = 1.0;
  if (const auto slash = value.find('/'); slash != std::string::npos) {
    try {
      divisor = std::stod(value.substr(slash + 1));
    } catch (const std::exception &) {
      throw ConfigError("noise spec '" + text + "': bad divisor");
    }
    value = value.substr(0, slash);
  }
  double x = 0.0;
  try {
    std::size_t used = 0;
    x = std::stod(value, &used);
    if (used != value.size())
      throw std::invalid_argument(value);
  } catch (const std::exception &) {
    throw ConfigError("noise spec '" + text + "': bad number");
  }
  if (divisor <= 0.0)
    throw ConfigError("noise spec '" + text + "': divisor must be positive");
  x /= divisor;

  NoiseModel model;
  if (kind == "gaussian")
    model = GaussianNoise{x};
  else if (kind == "poisson")
    model = PoissonNoise{x};
  else if (kind == "nlf")
    model = NlfNoise{x};
  else if (kind == "speckle")
    model = SpeckleNoise{x};
  else if (kind == "saltpepper" || kind == "sp")
    model = SaltPepperNoise{x};
  else
    throw ConfigError("unknown noise kind '" + kind + "'");
  try {
    validate(model);
  } catch (const ContractViolation &e) {
    throw ConfigError(std::string("noise spec '") + text + "': " + e.what());
  }
  return model;
}

NoiseModel sample_generalization_noise(NoiseFamily family, Rng &rng) {
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  switch (family) {
  case NoiseFamily::gaussian:
    return GaussianNoise{between(10.0, 50.0) / 255.0};
  case NoiseFamily::poisson:
    return PoissonNoise{between(10.0, 50.0)};
  case NoiseFamily::nlf:
    return NlfNoise{between(0.01, 0.012)};
  case NoiseFamily::speckle:
    return SpeckleNoise{between(10.0, 50.0) / 255.0};
  case NoiseFamily::salt_pepper:
    return SaltPepperNoise{between(0.02, 0.05)};
  }
  throw ContractViolation("unknown noise family");
}

} // namespace maskfill
