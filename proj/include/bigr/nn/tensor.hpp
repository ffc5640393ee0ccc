#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bigr/errors.hpp"
#include "bigr/rng.hpp"

namespace bigr::nn {

// Activations are stored row-major: one row per token / pixel / sample.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool decay = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters in registration order. Order is part of the checkpoint
// layout, so modules must register deterministically.
template <class T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Matrix<T> init, bool decay = true) {
    for (const auto& p : params_) {
      require(p->name != name, ErrorKind::Internal, "duplicate parameter name " + name);
    }
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = std::move(init);
    p->decay = decay;
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(std::string_view name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  const Parameter<T>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  Parameter<T>& at(std::string_view name) {
    auto* p = find(name);
    require(p != nullptr, ErrorKind::Internal, "unknown parameter " + std::string(name));
    return *p;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <class T>
Matrix<T> normal_matrix(Rng& rng, int rows, int cols, double stddev) {
  Matrix<T> m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * stddev);
  return m;
}

template <class T>
Matrix<T> uniform_matrix(Rng& rng, int rows, int cols, double bound) {
  Matrix<T> m(rows, cols);
  for (int i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }
  return m;
}

// Xavier-uniform for an in x out weight.
template <class T>
Matrix<T> xavier(Rng& rng, int fan_in, int fan_out) {
  return uniform_matrix<T>(rng, fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)));
}

template <class T>
Matrix<T> zeros(int rows, int cols) {
  return Matrix<T>::Zero(rows, cols);
}

template <class Dst, class Src>
Matrix<Dst> cast_matrix(const Matrix<Src>& m) {
  return m.template cast<Dst>();
}

template <class T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

}  // namespace bigr::nn
