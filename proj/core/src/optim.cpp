// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/optim.hpp"

#include <cmath>

#include "rcnas/error.hpp"

namespace rcnas {

namespace {

void check_groups(std::size_t n_params, std::size_t n_grads, std::size_t n_state) {
  if (n_params != n_grads) throw ShapeError("optimizer: parameter and gradient group counts differ");
  if (n_state != 0 && n_state != n_params) throw ShapeError("optimizer: group count changed between steps");
}

}  // namespace

void MomentumSgd::step(std::span<const std::span<double>> params,
                       std::span<const std::span<const double>> grads) {
  check_groups(params.size(), grads.size(), buffers_.size());
  const bool first = buffers_.empty();
  if (first) buffers_.resize(params.size());
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto p = params[g];
    auto grad = grads[g];
    if (p.size() != grad.size()) throw ShapeError("optimizer: gradient size mismatch in group " + std::to_string(g));
    auto& buf = buffers_[g];
    if (first) buf.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = grad[i] + cfg_.weight_decay * p[i];
      buf[i] = first ? d : cfg_.momentum * buf[i] + d;
      p[i] -= cfg_.lr * buf[i];
    }
  }
}

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  check_groups(params.size(), grads.size(), m_.size());
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t g = 0; g < params.size(); ++g) {
      m_[g].assign(params[g].size(), 0.0);
      v_[g].assign(params[g].size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto p = params[g];
    auto grad = grads[g];
    if (p.size() != grad.size() || m_[g].size() != p.size()) {
      throw ShapeError("optimizer: gradient size mismatch in group " + std::to_string(g));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = grad[i] + cfg_.weight_decay * p[i];
      m_[g][i] = cfg_.beta1 * m_[g][i] + (1.0 - cfg_.beta1) * d;
      v_[g][i] = cfg_.beta2 * v_[g][i] + (1.0 - cfg_.beta2) * d * d;
      const double mhat = m_[g][i] / bc1;
      const double vhat = v_[g][i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  const std::span<double> p[1] = {params};
  const std::span<const double> g[1] = {grads};
  step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g));
}

}  // namespace rcnas
