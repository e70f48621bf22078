// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rcnas/tensor.hpp"

namespace rcnas {

/// Reverse-mode gradient tape. Primitives append one record per application
/// whose inputs require gradients; backward() replays the records in exact
/// reverse order, so recording order must be a topological order (it is, as
/// outputs are only recorded after their inputs exist).
class Tape {
 public:
  /// Receives d(loss)/d(output) and accumulates into the inputs' gradients.
  using BackwardFn = std::function<void(const Array& output_grad)>;

  struct Record {
    std::string primitive;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::string primitive, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward);

  /// Populates grad on every requires_grad tensor reachable from `loss`.
  void backward(const Tensor& loss);

  void clear() { records_.clear(); }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

}  // namespace rcnas
