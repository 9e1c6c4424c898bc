#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

template <typename T>
using GradMap = std::map<std::string, BasicTensor<T>>;

/// Reverse-mode recorder. Values are immutable once recorded; backward()
/// replays the recorded closures in exact reverse order and may run once.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  /// Receives the gradient of the node's output and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, const TensorT&)>;

  Var constant(TensorT value);
  /// A named leaf whose gradient is reported by backward().
  Var parameter(const std::string& name, TensorT value);
  /// Records an op output. `fn` is dropped when no input requires a gradient.
  Var record(TensorT value, std::initializer_list<Var> inputs, BackwardFn fn);

  const TensorT& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void accumulate(Var v, const TensorT& grad);
  void accumulate(Var v, TensorT&& grad);

  /// d(loss)/d(p) for every registered parameter; unreached ones get zeros.
  GradMap<T> backward(Var loss);

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> params_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ftcn
