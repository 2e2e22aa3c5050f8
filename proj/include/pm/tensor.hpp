// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pm {

// Dense row-major tensor. Instantiated with float for training and double
// for finite-difference gradient checks.
template <typename T>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<std::size_t> s)
      : shape(std::move(s)), data(count(shape), T(0)) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  T& at(std::size_t i) { return data[i]; }
  T at(std::size_t i) const { return data[i]; }
  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  T at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  // Pointer to row i of a 2-D tensor (or to plane i of a 3-D one).
  T* row(std::size_t i) { return data.data() + i * (size() / shape[0]); }
  const T* row(std::size_t i) const {
    return data.data() + i * (size() / shape[0]);
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

// Named parameter tensors with paired gradient accumulators. Iteration order
// is the registration order; checkpoints and optimizer steps both follow it.
// Non-trainable entries (e.g. a frozen embedding matrix) are persisted but
// receive no gradient and no update.
template <typename T>
class ParamSetT {
 public:
  struct Param {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
    bool trainable = true;
    // Leading scalars pinned by the architecture (e.g. the pad embedding
    // row): excluded from optimizer updates and gradient checks.
    std::size_t frozen_scalars = 0;
  };

  Param& add(std::string name, std::vector<std::size_t> shape,
             bool trainable = true) {
    for (const auto& p : items_)
      if (p->name == name)
        throw std::logic_error("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = std::move(name);
    p->value = TensorT<T>(shape);
    p->grad = TensorT<T>(std::move(shape));
    p->trainable = trainable;
    items_.push_back(std::move(p));
    return *items_.back();
  }

  void zero_grads() {
    for (auto& p : items_) p->grad.zero();
  }

  std::size_t trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& p : items_)
      if (p->trainable) n += p->value.size();
    return n;
  }

  Param* find(const std::string& name) {
    for (auto& p : items_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t count() const { return items_.size(); }
  Param& operator[](std::size_t i) { return *items_[i]; }
  const Param& operator[](std::size_t i) const { return *items_[i]; }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

using ParamSet = ParamSetT<float>;

}  // namespace pm
