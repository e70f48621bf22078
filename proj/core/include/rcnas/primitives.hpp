// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcnas/tape.hpp"
#include "rcnas/tensor.hpp"

// Differentiable primitives over NCHW tensors. Each function computes its
// output eagerly and, when any input requires grad, records a backward rule on
// the tape. Shape violations raise ShapeError naming the primitive.
namespace rcnas::prim {

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

struct PoolAttrs {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// Output spatial extent of a windowed primitive.
std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation);

Tensor relu(Tape& tape, const Tensor& x);

/// x: (N, C_in, H, W); w: (C_out, C_in / groups, k, k). No bias.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Conv2dAttrs& attrs);

/// Per-batch statistics over (N, H, W) for each channel; gamma, beta: (C).
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Padding acts as -inf.
Tensor max_pool2d(Tape& tape, const Tensor& x, const PoolAttrs& attrs);
/// Padding excluded from the divisor.
Tensor avg_pool2d(Tape& tape, const Tensor& x, const PoolAttrs& attrs);
/// (N, C, H, W) -> (N, C).
Tensor global_avg_pool(Tape& tape, const Tensor& x);

Tensor concat_channels(Tape& tape, std::span<const Tensor> xs);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
/// Sum of all elements, shape (1).
Tensor sum(Tape& tape, const Tensor& x);

/// sum_k weights[k] * xs[k]. Undefined entries of xs are all-zero terms and
/// are skipped; at least one entry must be defined and all defined entries
/// share one shape.
Tensor weighted_sum(Tape& tape, const Tensor& weights, std::span<const Tensor> xs);

/// x: (N, F); w: (O, F); b: (O).
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
/// Softmax over the last axis of a rank-1 or rank-2 tensor.
Tensor softmax(Tape& tape, const Tensor& x);
/// Mean softmax cross-entropy; labels: (N) holding integral class indices.
Tensor cross_entropy(Tape& tape, const Tensor& logits, const Tensor& labels);

/// Interleaves channel groups: (g, C/g) -> (C/g, g).
Tensor channel_shuffle(Tape& tape, const Tensor& x, std::size_t groups);
/// x[:, :, top:, left:].
Tensor crop(Tape& tape, const Tensor& x, std::size_t top, std::size_t left);

using AttrMap = std::map<std::string, double>;

/// Names accepted by apply_primitive.
const std::vector<std::string>& primitive_names();

/// Dispatch by primitive name. Integral attributes are passed as doubles:
/// conv2d {stride, padding, dilation, groups}; max_pool2d/avg_pool2d
/// {kernel, stride, padding}; batch_norm {eps}; scale {factor};
/// channel_shuffle {groups}; crop {top, left}. Inputs follow the typed
/// signatures above (weighted_sum: weights first, then the terms).
Tensor apply_primitive(Tape& tape, std::string_view name, std::span<const Tensor> inputs,
                       const AttrMap& attrs = {});

}  // namespace rcnas::prim
