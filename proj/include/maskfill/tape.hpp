// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "maskfill/tensor.hpp"

namespace maskfill {

template <typename T> class Tape;

/// Handle to a value recorded on a Tape.
template <typename T> struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Tape<T> *tape = nullptr;
  std::size_t id = npos;

  bool valid() const { return tape != nullptr && id != npos; }
  const Tensor<T> &value() const { return tape->value(*this); }
  const Shape &shape() const { return value().shape(); }
};

/// Result of a reverse sweep. Gradients are retained for leaves only; a leaf
/// the loss does not depend on reports zeros.
template <typename T> class Gradients {
public:
  Gradients(const Tape<T> *tape, std::vector<std::optional<Tensor<T>>> grads,
            std::size_t visited)
      : tape_(tape), grads_(std::move(grads)), visited_(visited) {}

  Tensor<T> of(Var<T> v) const;
  Tensor<T> take(Var<T> v);
  bool reached(Var<T> v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }

  /// Number of recorded ops whose backward rule ran.
  std::size_t visited() const { return visited_; }

private:
  const Tape<T> *tape_;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::size_t visited_;
};

/// Append-only record of forward computations. Node ids are assigned in
/// execution order, so every op's inputs precede it.
template <typename T> class Tape {
public:
  /// Receives the output gradient and one slot per input; a slot is null when
  /// that input does not need a gradient. Slots are zero-initialized and the
  /// rule must accumulate into them.
  using BackwardFn =
      std::function<void(const Tensor<T> &grad_out, std::span<Tensor<T> *const> grad_inputs)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  /// Registers an input; gradients flow to it iff value.requires_grad().
  Var<T> leaf(Tensor<T> value);
  Var<T> constant(Tensor<T> value);
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor<T> &value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var<T> v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t op_count() const;

  /// Reverse-mode sweep from a scalar loss.
  Gradients<T> backward(Var<T> loss) const;

private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
};

} // namespace maskfill
