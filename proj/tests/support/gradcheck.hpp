// SPDX-License-Identifier: Apache-2.0
// Central finite-difference checks for the autodiff engine (64-bit).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "maskfill/ops.hpp"
#include "maskfill/random.hpp"
#include "maskfill/tape.hpp"

namespace maskfill::testing {

using Tensor64 = Tensor<double>;
using Var64 = Var<double>;
using Builder = std::function<Var64(Tape<double> &, std::span<const Var64>)>;

inline Tensor64 random_tensor(const Shape &shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto &v : t.values())
    v = dist(rng);
  return t;
}

/// Reduces any output to a scalar through a fixed random weighting, so every
/// output element contributes a distinct coefficient to the loss.
inline Var64 project(Tape<double> &tape, Var64 out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximized over
/// every element of every input.
inline GradReport check_gradients(const std::vector<Tensor64> &inputs, const Builder &build,
                                  double h = 1e-5, double floor = 1e-6) {
  auto evaluate = [&](const std::vector<Tensor64> &xs) {
    Tape<double> tape;
    std::vector<Var64> vars;
    for (const auto &x : xs)
      vars.push_back(tape.leaf(x));
    return build(tape, vars).value()[0];
  };

  Tape<double> tape;
  std::vector<Var64> vars;
  for (auto x : inputs) {
    x.set_requires_grad(true);
    vars.push_back(tape.leaf(std::move(x)));
  }
  const Var64 loss = build(tape, vars);
  const auto grads = tape.backward(loss);

  GradReport report;
  std::vector<Tensor64> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor64 analytic = grads.of(vars[i]);
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double saved = probe[i][j];
      probe[i][j] = saved + h;
      const double up = evaluate(probe);
      probe[i][j] = saved - h;
      const double down = evaluate(probe);
      probe[i][j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), floor});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic[j] - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

} // namespace maskfill::testing
