// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "rcnas/error.hpp"

namespace rcnas {

namespace {

double evaluate(const ScalarFn& f, const Array& x) {
  Tape tape;
  Tensor input(x, false);
  Tensor out = f(tape, input);
  if (!out.defined() || out.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Array& x, double h, double tol, double floor) {
  GradCheckReport report;
  {
    Tape tape;
    Tensor input(x, true);
    Tensor out = f(tape, input);
    tape.backward(out);
    report.analytic.assign(input.grad().data().begin(), input.grad().data().end());
  }
  report.numeric.resize(x.numel());
  report.rel_error.resize(x.numel());
  Array probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    double plus = 0.0, minus = 0.0;
    try {
      probe[i] = orig + h;
      plus = evaluate(f, probe);
      probe[i] = orig - h;
      minus = evaluate(f, probe);
    } catch (const std::exception& e) {
      throw Error("grad_check: f failed at coordinate " + std::to_string(i) + ": " + e.what());
    }
    probe[i] = orig;
    const double num = (plus - minus) / (2.0 * h);
    const double ana = report.analytic[i];
    report.numeric[i] = num;
    const double denom = std::max({std::abs(ana), std::abs(num), floor});
    const double err = std::abs(ana - num) / denom;
    report.rel_error[i] = err;
    report.max_rel_error = std::max(report.max_rel_error, err);
    if (!(err <= tol)) report.failing.push_back(i);
  }
  report.passed = report.failing.empty();
  return report;
}

}  // namespace rcnas
