// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rcnas {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double value) { return Array(Shape{1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a single-element array.
  double item() const;
  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct TensorNode {
  Array value;
  Array grad;
  bool requires_grad = false;
};

/// Shared handle to a value that may participate in a gradient tape.
/// Copies alias the same storage. A gradient buffer exists iff requires_grad.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array value, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(Array(std::move(shape)), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }

  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  std::span<const double> data() const { return node_->value.data(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Turning gradients off drops the buffer; turning them on allocates zeros.
  void set_requires_grad(bool on);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Array& grad() const { return node_->grad; }
  /// Gradient buffer, allocated on first use. Only valid when requires_grad.
  Array& grad_buffer() const;
  void zero_grad();

  /// A constant (no-grad) tensor sharing nothing with this one.
  Tensor detached_copy() const { return Tensor(node_->value, false); }

  const TensorNode* id() const { return node_.get(); }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// A named trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace rcnas
