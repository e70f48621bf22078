// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "rcnas/error.hpp"

namespace rcnas {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("array: zero-sized dimension in " + shape_to_string(shape_));
  }
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("array: " + std::to_string(data_.size()) +
                     " values do not fill shape " + shape_to_string(shape_));
  }
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item: expected one element, got shape " + shape_to_string(shape_));
  }
  return data_[0];
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor::Tensor(Array value, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
  node_->value = std::move(value);
  set_requires_grad(requires_grad);
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    if (node_->grad.empty()) node_->grad = Array(node_->value.shape());
  } else {
    node_->grad = Array();
  }
}

Array& Tensor::grad_buffer() const {
  if (node_->grad.empty()) node_->grad = Array(node_->value.shape());
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

}  // namespace rcnas
