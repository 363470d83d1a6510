// SPDX-License-Identifier: Apache-2.0
#include "maskfill/tape.hpp"

#include <sstream>

namespace maskfill {

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T> Tensor<T> Gradients<T>::of(Var<T> v) const {
  if (reached(v))
    return *grads_[v.id];
  return Tensor<T>(tape_->value(v).shape());
}

template <typename T> Tensor<T> Gradients<T>::take(Var<T> v) {
  if (reached(v)) {
    Tensor<T> g = std::move(*grads_[v.id]);
    grads_[v.id].reset();
    return g;
  }
  return Tensor<T>(tape_->value(v).shape());
}

template <typename T> Var<T> Tape<T>::leaf(Tensor<T> value) {
  const bool grad = value.requires_grad();
  nodes_.push_back(Node{std::move(value), {}, {}, grad});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T> Var<T> Tape<T>::constant(Tensor<T> value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool grad = false;
  for (auto id : inputs) {
    expects(id < nodes_.size(), "tape: op input recorded after the op");
    grad = grad || nodes_[id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), grad});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T> std::size_t Tape<T>::op_count() const {
  std::size_t n = 0;
  for (const auto &node : nodes_)
    n += node.backward ? 1 : 0;
  return n;
}

template <typename T> Gradients<T> Tape<T>::backward(Var<T> loss) const {
  expects(loss.tape == this && loss.id < nodes_.size(), "backward: loss is not on this tape");
  expects(nodes_[loss.id].value.numel() == 1,
          "backward: loss must be a scalar, got shape " +
              shape_string(nodes_[loss.id].value.shape()));

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  std::size_t visited = 0;
  if (!nodes_[loss.id].needs_grad)
    return Gradients<T>(this, std::move(grads), visited);

  grads[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T{1});
  std::vector<Tensor<T> *> slots;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node &node = nodes_[id];
    if (!grads[id] || !node.backward)
      continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].needs_grad)
        continue;
      if (!grads[in])
        grads[in] = Tensor<T>(nodes_[in].value.shape());
      slots[k] = &*grads[in];
    }
    node.backward(*grads[id], slots);
    ++visited;
    grads[id].reset();
  }
  return Gradients<T>(this, std::move(grads), visited);
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

} // namespace maskfill
