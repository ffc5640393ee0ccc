#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>

#include "bigr/nn/tensor.hpp"

namespace bigr::nn {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

// Reverse-mode autodiff over whole matrices. Each op appends one node holding
// its output and a closure that pushes the output gradient to its inputs.
// Parameter nodes alias the parameter storage, so gradients accumulate
// straight into Parameter::grad.
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Matrix<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}});
    return Var{nodes_.size() - 1};
  }

  Var param(Parameter<T>& p) {
    nodes_.push_back(Node{{}, &p, {}, recording_, {}});
    return Var{nodes_.size() - 1};
  }

  // Appends an op output. `backward` runs only when some input needs a gradient.
  Var record(Matrix<T> value, std::initializer_list<Var> inputs, std::function<void()> backward) {
    bool needs = false;
    if (recording_) {
      for (Var in : inputs) needs = needs || (in.valid() && nodes_[in.id].needs_grad);
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs, needs ? std::move(backward) : nullptr});
    return Var{nodes_.size() - 1};
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].needs_grad; }

  Matrix<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) {
      if (n.param->grad.rows() != n.param->value.rows() ||
          n.param->grad.cols() != n.param->value.cols()) {
        n.param->zero_grad();
      }
      return n.param->grad;
    }
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(Var v) const { return nodes_[v.id].grad.size() != 0; }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 output (or `seed` for other shapes)
  // and runs the closures in reverse creation order.
  void backward(Var loss) {
    require(recording_, ErrorKind::Internal, "backward on a non-recording tape");
    Matrix<T>& g = grad(loss);
    g.setOnes();
    run_backward(loss);
  }

  void backward(Var out, const Matrix<T>& seed) {
    require(recording_, ErrorKind::Internal, "backward on a non-recording tape");
    grad(out) = seed;
    run_backward(out);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Parameter<T>* param;
    Matrix<T> grad;
    bool needs_grad;
    std::function<void()> backward;
  };

  void run_backward(Var from) {
    for (std::size_t i = from.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward();
    }
  }

  bool recording_;
  std::deque<Node> nodes_;
};

}  // namespace bigr::nn
