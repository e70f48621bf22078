// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "rcnas/tape.hpp"
#include "rcnas/tensor.hpp"

namespace rcnas {

/// Scalar-valued function of one tensor, evaluated on the given tape.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  /// |analytic - numeric| / max(|analytic|, |numeric|, floor) per coordinate.
  std::vector<double> rel_error;
  std::vector<std::size_t> failing;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares the tape gradient of f at x against central differences with
/// step h. Coordinates whose gradients are both below `floor` in magnitude are
/// compared on an absolute scale of `floor`. Exceptions raised by f on a
/// perturbed input are rethrown with the coordinate index.
GradCheckReport grad_check(const ScalarFn& f, const Array& x, double h = 1e-4,
                           double tol = 1e-5, double floor = 1e-8);

}  // namespace rcnas
