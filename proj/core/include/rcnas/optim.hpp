// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rcnas {

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Heavy-ball SGD with coupled weight decay: d = g + wd*p; b = mu*b + d
/// (b = d on the first step); p -= lr*b.
class MomentumSgd {
 public:
  explicit MomentumSgd(SgdConfig cfg = {}) : cfg_(cfg) {}
  /// One update of every group; group i keeps its own buffer across calls.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  const SgdConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::vector<std::vector<double>>& buffers() { return buffers_; }
  const std::vector<std::vector<double>>& buffers() const { return buffers_; }

 private:
  SgdConfig cfg_;
  std::vector<std::vector<double>> buffers_;
};

/// Bias-corrected adaptive moments with coupled weight decay.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);
  /// Single-group convenience.
  void step(std::span<double> params, std::span<const double> grads);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace rcnas
