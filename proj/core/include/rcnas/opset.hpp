// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rcnas/rng.hpp"
#include "rcnas/tape.hpp"
#include "rcnas/tensor.hpp"

namespace rcnas {

/// Candidate operations. The first eight make up the normal/reduction set,
/// the last four the connection set.
enum class OpKind {
  kZero,
  kMaxPool3,
  kAvgPool3,
  kIdentity,
  kSepConv3,
  kSepConv5,
  kDilSepConv3,
  kDilSepConv5,
  kDilConv3,
  kGroupConv1x1G1,
  kGroupConv1x1G2,
  kGroupConv1x1G4,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

/// Default normal/reduction candidates, in logit order.
const std::vector<OpKind>& default_cell_ops();
/// Default connection-cell candidates, in logit order.
const std::vector<OpKind>& default_connection_ops();
bool is_cell_op(OpKind kind);
bool is_connection_op(OpKind kind);

/// Shape context an op instance is built for. Spatial dims are per image.
struct OpContext {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t h_in = 0;
  std::size_t w_in = 0;
  std::size_t stride = 1;

  std::size_t h_out() const { return (h_in - 1) / stride + 1; }
  std::size_t w_out() const { return (w_in - 1) / stride + 1; }
  /// Throws ShapeError unless all fields are positive and stride is 1 or 2.
  void validate() const;
  friend bool operator==(const OpContext&, const OpContext&) = default;
};

// Cost conventions: FLOPs are multiply-accumulates of convolutions, pooling
// windows and the classifier's linear layer; ReLU, batch-norm, additions and
// concatenation are free. Convs carry no bias; batch-norm contributes 2*c
// affine parameters.
std::uint64_t param_count(OpKind kind, const OpContext& ctx);

/// k^2 * (c_in / groups) * c_out * h_out * w_out.
inline std::uint64_t conv_macs(std::uint64_t k, std::uint64_t c_in, std::uint64_t c_out, std::uint64_t h_out,
                               std::uint64_t w_out, std::uint64_t groups = 1) {
  return k * k * (c_in / groups) * c_out * h_out * w_out;
}
/// k^2 * c * h_out * w_out.
inline std::uint64_t pool_macs(std::uint64_t k, std::uint64_t c, std::uint64_t h_out, std::uint64_t w_out) {
  return k * k * c * h_out * w_out;
}

std::uint64_t flop_count(OpKind kind, const OpContext& ctx);

/// A built candidate operation with its own weights.
class OpInstance {
 public:
  OpKind kind() const { return kind_; }
  const OpContext& context() const { return ctx_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  /// Total number of scalar weights.
  std::size_t weight_count() const;

  /// x: (N, c_in, h_in, w_in) -> (N, c_out, h_out, w_out). Zero yields an
  /// undefined tensor unless `materialize_zero` is set, so mixtures can skip it.
  Tensor apply(Tape& tape, const Tensor& x, bool materialize_zero = true) const;

 private:
  friend OpInstance build_op(OpKind, const OpContext&, Rng&, const std::string&);

  enum class StageType { kRelu, kConv, kBatchNorm, kShuffle, kMaxPool, kAvgPool, kFactorizedReduce };
  struct Stage {
    StageType type;
    std::size_t param = 0;   // first parameter index used by the stage
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
    std::size_t groups = 1;
  };

  OpKind kind_ = OpKind::kZero;
  OpContext ctx_;
  std::vector<Parameter> params_;
  std::vector<Stage> stages_;
};

/// Builds `kind` for `ctx`, drawing weights from `rng` (Kaiming-uniform on
/// fan-in for convs, batch-norm affine = (1, 0)). Parameter names are
/// prefixed with `name`. Identity with stride 2 becomes a factorized reduce;
/// with stride 1 and c_in != c_out a ReLU-1x1conv-BN projection.
OpInstance build_op(OpKind kind, const OpContext& ctx, Rng& rng, const std::string& name = "op");

}  // namespace rcnas
