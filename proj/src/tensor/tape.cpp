#include "ftcn/tensor/tape.hpp"

namespace ftcn {

template <typename T>
Var Tape<T>::constant(TensorT value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(const std::string& name, TensorT value) {
  for (const auto& [existing, idx] : params_) {
    if (existing == name) throw Error("parameter '" + name + "' registered twice on tape");
  }
  nodes_.push_back(Node{std::move(value), {}, false, true, {}});
  params_.emplace_back(name, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(TensorT value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (auto in : inputs) needs = needs || requires_grad(in);
  nodes_.push_back(Node{std::move(value), {}, false, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

template <typename T>
void Tape<T>::accumulate(Var v, const TensorT& grad) {
  Node& node = nodes_.at(v.index);
  if (!node.requires_grad) return;
  if (grad.shape() != node.value.shape()) {
    throw ShapeError("gradient shape " + to_string(grad.shape()) + " does not match value " +
                     to_string(node.value.shape()));
  }
  if (!node.has_grad) {
    node.grad = grad;
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::accumulate(Var v, TensorT&& grad) {
  Node& node = nodes_.at(v.index);
  if (!node.requires_grad) return;
  if (!node.has_grad && grad.shape() == node.value.shape()) {
    node.grad = std::move(grad);
    node.has_grad = true;
    return;
  }
  accumulate(v, static_cast<const TensorT&>(grad));
}

template <typename T>
GradMap<T> Tape<T>::backward(Var loss) {
  if (consumed_) throw Error("tape already consumed by a previous backward pass");
  consumed_ = true;
  if (value(loss).size() != 1) {
    throw ShapeError("backward needs a single-value loss, got " + to_string(value(loss).shape()));
  }
  if (requires_grad(loss)) accumulate(loss, TensorT(value(loss).shape(), T{1}));

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    const TensorT grad = std::move(node.grad);
    node.grad = TensorT{};
    node.has_grad = false;
    node.backward(*this, grad);
  }

  GradMap<T> out;
  for (const auto& [name, idx] : params_) {
    Node& node = nodes_[idx];
    out.emplace(name, node.has_grad ? std::move(node.grad) : TensorT(node.value.shape(), T{0}));
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ftcn
