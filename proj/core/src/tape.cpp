// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/tape.hpp"

#include "rcnas/error.hpp"

namespace rcnas {

void Tape::record(std::string primitive, std::vector<Tensor> inputs, Tensor output,
                  BackwardFn backward) {
  records_.push_back(
      Record{std::move(primitive), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (records_.empty() || !loss.requires_grad()) {
    throw Error("backward: loss was not produced on this tape from any tensor requiring grad");
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
}

}  // namespace rcnas
