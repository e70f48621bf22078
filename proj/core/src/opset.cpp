// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/opset.hpp"

#include <array>
#include <cmath>

#include "rcnas/error.hpp"
#include "rcnas/primitives.hpp"

namespace rcnas {
namespace {

struct OpInfo {
  OpKind kind;
  std::string_view name;
};

constexpr std::array<OpInfo, 12> kOps = {{
    {OpKind::kZero, "zero"},
    {OpKind::kMaxPool3, "max_pool_3x3"},
    {OpKind::kAvgPool3, "avg_pool_3x3"},
    {OpKind::kIdentity, "identity"},
    {OpKind::kSepConv3, "sep_conv_3x3"},
    {OpKind::kSepConv5, "sep_conv_5x5"},
    {OpKind::kDilSepConv3, "dil_sep_conv_3x3"},
    {OpKind::kDilSepConv5, "dil_sep_conv_5x5"},
    {OpKind::kDilConv3, "dil_conv_3x3"},
    {OpKind::kGroupConv1x1G1, "group_conv_1x1_g1"},
    {OpKind::kGroupConv1x1G2, "group_conv_1x1_g2"},
    {OpKind::kGroupConv1x1G4, "group_conv_1x1_g4"},
}};

std::size_t kernel_of(OpKind kind) {
  switch (kind) {
    case OpKind::kSepConv5:
    case OpKind::kDilSepConv5:
      return 5;
    default:
      return 3;
  }
}

std::size_t groups_of(OpKind kind) {
  switch (kind) {
    case OpKind::kGroupConv1x1G2:
      return 2;
    case OpKind::kGroupConv1x1G4:
      return 4;
    default:
      return 1;
  }
}

bool identity_is_passthrough(const OpContext& ctx) { return ctx.stride == 1 && ctx.c_in == ctx.c_out; }

void check_buildable(OpKind kind, const OpContext& ctx) {
  ctx.validate();
  const std::string name(op_name(kind));
  if ((kind == OpKind::kMaxPool3 || kind == OpKind::kAvgPool3) && ctx.c_in != ctx.c_out) {
    throw ShapeError(name + ": pooling requires c_in == c_out, got " + std::to_string(ctx.c_in) +
                     " -> " + std::to_string(ctx.c_out));
  }
  const std::size_t g = groups_of(kind);
  if (ctx.c_in % g != 0 || ctx.c_out % g != 0) {
    throw ShapeError(name + ": channels " + std::to_string(ctx.c_in) + " -> " +
                     std::to_string(ctx.c_out) + " not divisible by groups " + std::to_string(g));
  }
  if (kind == OpKind::kIdentity && ctx.stride == 2) {
    if (ctx.c_out % 2 != 0 || ctx.h_in % 2 != 0 || ctx.w_in % 2 != 0) {
      throw ShapeError("identity: factorized reduce needs even c_out and spatial dims, got " +
                       std::to_string(ctx.c_out) + " channels at " + std::to_string(ctx.h_in) +
                       "x" + std::to_string(ctx.w_in));
    }
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& info : kOps) {
    if (info.kind == kind) return info.name;
  }
  return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& info : kOps) {
    if (info.name == name) return info.kind;
  }
  return std::nullopt;
}

const std::vector<OpKind>& default_cell_ops() {
  static const std::vector<OpKind> ops = {
      OpKind::kZero,     OpKind::kMaxPool3, OpKind::kAvgPool3,    OpKind::kIdentity,
      OpKind::kSepConv3, OpKind::kSepConv5, OpKind::kDilSepConv3, OpKind::kDilSepConv5};
  return ops;
}

const std::vector<OpKind>& default_connection_ops() {
  static const std::vector<OpKind> ops = {OpKind::kDilConv3, OpKind::kGroupConv1x1G1,
                                          OpKind::kGroupConv1x1G2, OpKind::kGroupConv1x1G4};
  return ops;
}

bool is_cell_op(OpKind kind) { return static_cast<int>(kind) <= static_cast<int>(OpKind::kDilSepConv5); }
bool is_connection_op(OpKind kind) { return !is_cell_op(kind); }

void OpContext::validate() const {
  if (c_in == 0 || c_out == 0 || h_in == 0 || w_in == 0) {
    throw ShapeError("op context: channels and spatial dims must be positive");
  }
  if (stride != 1 && stride != 2) {
    throw ShapeError("op context: stride must be 1 or 2, got " + std::to_string(stride));
  }
}

std::uint64_t param_count(OpKind kind, const OpContext& ctx) {
  const std::uint64_t ci = ctx.c_in, co = ctx.c_out;
  const std::uint64_t k = kernel_of(kind);
  switch (kind) {
    case OpKind::kZero:
    case OpKind::kMaxPool3:
    case OpKind::kAvgPool3:
      return 0;
    case OpKind::kIdentity:
      return identity_is_passthrough(ctx) ? 0 : ci * co + 2 * co;
    case OpKind::kSepConv3:
    case OpKind::kSepConv5:
      return (k * k * ci + ci * ci + 2 * ci) + (k * k * ci + ci * co + 2 * co);
    case OpKind::kDilSepConv3:
    case OpKind::kDilSepConv5:
    case OpKind::kDilConv3:
      return k * k * ci + ci * co + 2 * co;
    case OpKind::kGroupConv1x1G1:
    case OpKind::kGroupConv1x1G2:
    case OpKind::kGroupConv1x1G4:
      return ci * co / groups_of(kind) + 2 * co;
  }
  return 0;
}

std::uint64_t flop_count(OpKind kind, const OpContext& ctx) {
  const std::uint64_t ci = ctx.c_in, co = ctx.c_out;
  const std::uint64_t hw = static_cast<std::uint64_t>(ctx.h_out()) * ctx.w_out();
  const std::uint64_t k = kernel_of(kind);
  switch (kind) {
    case OpKind::kZero:
      return 0;
    case OpKind::kMaxPool3:
    case OpKind::kAvgPool3:
      return 9 * co * hw;
    case OpKind::kIdentity:
      return identity_is_passthrough(ctx) ? 0 : ci * co * hw;
    case OpKind::kSepConv3:
    case OpKind::kSepConv5:
      return (k * k * ci + ci * ci) * hw + (k * k * ci + ci * co) * hw;
    case OpKind::kDilSepConv3:
    case OpKind::kDilSepConv5:
    case OpKind::kDilConv3:
      return (k * k * ci + ci * co) * hw;
    case OpKind::kGroupConv1x1G1:
    case OpKind::kGroupConv1x1G2:
    case OpKind::kGroupConv1x1G4:
      return ci / groups_of(kind) * co * hw;
  }
  return 0;
}

std::size_t OpInstance::weight_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

OpInstance build_op(OpKind kind, const OpContext& ctx, Rng& rng, const std::string& name) {
  check_buildable(kind, ctx);
  OpInstance op;
  op.kind_ = kind;
  op.ctx_ = ctx;
  using Stage = OpInstance::Stage;
  using T = OpInstance::StageType;

  auto add_conv = [&](const std::string& pname, std::size_t c_in, std::size_t c_out, std::size_t k,
                      std::size_t stride, std::size_t dilation, std::size_t groups) {
    const std::size_t fan_in = c_in / groups * k * k;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Array w(Shape{c_out, c_in / groups, k, k});
    for (double& v : w.data()) v = uniform(rng, -bound, bound);
    Stage s{T::kConv, op.params_.size(), k, stride, dilation * (k - 1) / 2, dilation, groups};
    op.params_.push_back({name + "." + pname + ".weight", Tensor(std::move(w), true)});
    op.stages_.push_back(s);
  };
  auto add_bn = [&](const std::string& pname, std::size_t c) {
    op.stages_.push_back(Stage{T::kBatchNorm, op.params_.size()});
    op.params_.push_back({name + "." + pname + ".gamma", Tensor(Array(Shape{c}, 1.0), true)});
    op.params_.push_back({name + "." + pname + ".beta", Tensor(Array(Shape{c}, 0.0), true)});
  };
  auto add_relu = [&] { op.stages_.push_back(Stage{T::kRelu}); };

  const std::size_t ci = ctx.c_in, co = ctx.c_out, s = ctx.stride;
  switch (kind) {
    case OpKind::kZero:
      break;
    case OpKind::kMaxPool3:
      op.stages_.push_back(Stage{T::kMaxPool, 0, 3, s, 1});
      break;
    case OpKind::kAvgPool3:
      op.stages_.push_back(Stage{T::kAvgPool, 0, 3, s, 1});
      break;
    case OpKind::kIdentity:
      if (identity_is_passthrough(ctx)) break;
      add_relu();
      if (s == 2) {
        op.stages_.push_back(Stage{T::kFactorizedReduce, op.params_.size()});
        for (const char* branch : {"fr1", "fr2"}) {
          const double bound = std::sqrt(6.0 / static_cast<double>(ci));
          Array w(Shape{co / 2, ci, 1, 1});
          for (double& v : w.data()) v = uniform(rng, -bound, bound);
          op.params_.push_back({name + "." + branch + ".weight", Tensor(std::move(w), true)});
        }
      } else {
        add_conv("proj", ci, co, 1, 1, 1, 1);
      }
      add_bn("bn", co);
      break;
    case OpKind::kSepConv3:
    case OpKind::kSepConv5: {
      const std::size_t k = kernel_of(kind);
      add_relu();
      add_conv("dw1", ci, ci, k, s, 1, ci);
      add_conv("pw1", ci, ci, 1, 1, 1, 1);
      add_bn("bn1", ci);
      add_relu();
      add_conv("dw2", ci, ci, k, 1, 1, ci);
      add_conv("pw2", ci, co, 1, 1, 1, 1);
      add_bn("bn2", co);
      break;
    }
    case OpKind::kDilSepConv3:
    case OpKind::kDilSepConv5:
    case OpKind::kDilConv3: {
      const std::size_t k = kernel_of(kind);
      add_relu();
      add_conv("dw", ci, ci, k, s, 2, ci);
      add_conv("pw", ci, co, 1, 1, 1, 1);
      add_bn("bn", co);
      break;
    }
    case OpKind::kGroupConv1x1G1:
    case OpKind::kGroupConv1x1G2:
    case OpKind::kGroupConv1x1G4: {
      const std::size_t g = groups_of(kind);
      add_relu();
      add_conv("gconv", ci, co, 1, s, 1, g);
      add_bn("bn", co);
      if (g > 1) op.stages_.push_back(Stage{T::kShuffle, 0, 1, 1, 0, 1, g});
      break;
    }
  }
  return op;
}

Tensor OpInstance::apply(Tape& tape, const Tensor& x, bool materialize_zero) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != ctx_.c_in || s[2] != ctx_.h_in || s[3] != ctx_.w_in) {
    throw ShapeError(std::string(op_name(kind_)) + ": input " + shape_to_string(s) +
                     " does not match context (N, " + std::to_string(ctx_.c_in) + ", " +
                     std::to_string(ctx_.h_in) + ", " + std::to_string(ctx_.w_in) + ")");
  }
  if (kind_ == OpKind::kZero) {
    if (!materialize_zero) return Tensor();
    return Tensor::zeros(Shape{s[0], ctx_.c_out, ctx_.h_out(), ctx_.w_out()});
  }
  Tensor y = x;
  for (const Stage& st : stages_) {
    switch (st.type) {
      case StageType::kRelu:
        y = prim::relu(tape, y);
        break;
      case StageType::kConv:
        y = prim::conv2d(tape, y, params_[st.param].tensor,
                         prim::Conv2dAttrs{st.stride, st.padding, st.dilation, st.groups});
        break;
      case StageType::kBatchNorm:
        y = prim::batch_norm(tape, y, params_[st.param].tensor, params_[st.param + 1].tensor);
        break;
      case StageType::kShuffle:
        y = prim::channel_shuffle(tape, y, st.groups);
        break;
      case StageType::kMaxPool:
        y = prim::max_pool2d(tape, y, prim::PoolAttrs{st.kernel, st.stride, st.padding});
        break;
      case StageType::kAvgPool:
        y = prim::avg_pool2d(tape, y, prim::PoolAttrs{st.kernel, st.stride, st.padding});
        break;
      case StageType::kFactorizedReduce: {
        const prim::Conv2dAttrs a{2, 0, 1, 1};
        Tensor left = prim::conv2d(tape, y, params_[st.param].tensor, a);
        Tensor shifted = prim::crop(tape, y, 1, 1);
        Tensor right = prim::conv2d(tape, shifted, params_[st.param + 1].tensor, a);
        const Tensor parts[] = {left, right};
        y = prim::concat_channels(tape, parts);
        break;
      }
    }
  }
  return y;
}

}  // namespace rcnas
