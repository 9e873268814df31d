// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_TENSOR_HPP_
#define POSTLAB_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace postlab {

// Dense row-major tensor. Weight matrices are stored [out, in] so a forward
// GEMV is a sequence of contiguous dot products.
template <typename T>
struct TensorT {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<T> data;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.size() > 1 ? shape.at(1) : 1; }
  T* row(int64_t r) { return data.data() + r * cols(); }
  const T* row(int64_t r) const { return data.data() + r * cols(); }
};

// Named parameter collection with a stable iteration order. Order matters:
// checkpoints serialise tensors in insertion order and elementwise merges
// walk the two sets in lockstep.
template <typename T>
class ParameterSetT {
 public:
  TensorT<T>& add(const std::string& name, std::vector<int64_t> shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate tensor: " + name);
    index_[name] = tensors_.size();
    TensorT<T> t;
    t.name = name;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(t.numel()), T(0));
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  TensorT<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
  }
  const TensorT<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
  }

  size_t size() const { return tensors_.size(); }
  TensorT<T>& operator[](size_t i) { return tensors_[i]; }
  const TensorT<T>& operator[](size_t i) const { return tensors_[i]; }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  bool same_structure(const ParameterSetT& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name != o.tensors_[i].name) return false;
      if (tensors_[i].shape != o.tensors_[i].shape) return false;
    }
    return true;
  }

  void check_same_structure(const ParameterSetT& o) const {
    if (!same_structure(o)) throw std::invalid_argument("parameter sets differ in structure");
  }

  // this += alpha * other
  void axpy(T alpha, const ParameterSetT& other) {
    check_same_structure(other);
    for (size_t i = 0; i < tensors_.size(); ++i) {
      const auto& src = other.tensors_[i].data;
      auto& dst = tensors_[i].data;
      for (size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
    }
  }

  void scale(T alpha) {
    for (auto& t : tensors_)
      for (T& v : t.data) v *= alpha;
  }

  void fill(T v) {
    for (auto& t : tensors_)
      for (T& x : t.data) x = v;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& t : tensors_)
      for (T v : t.data) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
  }
  double l2_norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (const auto& t : tensors_)
      for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  ParameterSetT<U> cast() const {
    ParameterSetT<U> out;
    for (const auto& t : tensors_) {
      auto& dst = out.add(t.name, t.shape);
      for (size_t j = 0; j < t.data.size(); ++j) dst.data[j] = static_cast<U>(t.data[j]);
    }
    return out;
  }

 private:
  std::vector<TensorT<T>> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

using Tensor = TensorT<float>;
using ParameterSet = ParameterSetT<float>;

}  // namespace postlab

#endif  // POSTLAB_TENSOR_HPP_
