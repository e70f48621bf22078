// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rcnas/error.hpp"

namespace rcnas::prim {
namespace {

using Index = std::ptrdiff_t;

[[noreturn]] void shape_fail(std::string_view prim, const std::string& what) {
  throw ShapeError(std::string(prim) + ": " + what);
}

void expect_rank(std::string_view prim, const Tensor& t, std::size_t rank, const char* arg) {
  if (!t.defined()) shape_fail(prim, std::string(arg) + " is undefined");
  if (t.shape().size() != rank) {
    shape_fail(prim, std::string(arg) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void expect_same_shape(std::string_view prim, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(prim, "shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Range of output positions o with 0 <= o * stride + offset < in.
void valid_range(Index offset, Index stride, Index in, Index out, Index& lo, Index& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  Index last = in - 1 - offset;
  hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
}

struct ConvGeom {
  Index n, c_in, h, w, c_out, c_in_g, c_out_g, k, ho, wo, stride, pad, dil, groups;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// The three conv passes share one loop nest; Mode selects the inner update.
enum class ConvPass { kForward, kInputGrad, kWeightGrad };

template <ConvPass Pass>
void conv_loops(const ConvGeom& g, const double* x, const double* wt, const double* gout,
                double* out, double* gx, double* gw) {
  const Index in_plane = g.h * g.w;
  const Index out_plane = g.ho * g.wo;
  for (Index n = 0; n < g.n; ++n) {
    for (Index grp = 0; grp < g.groups; ++grp) {
      for (Index ocg = 0; ocg < g.c_out_g; ++ocg) {
        const Index oc = grp * g.c_out_g + ocg;
        const Index out_off = (n * g.c_out + oc) * out_plane;
        for (Index icg = 0; icg < g.c_in_g; ++icg) {
          const Index ic = grp * g.c_in_g + icg;
          const Index in_off = (n * g.c_in + ic) * in_plane;
          const Index w_off = (oc * g.c_in_g + icg) * g.k * g.k;
          if (g.pointwise()) {
            if constexpr (Pass == ConvPass::kForward) {
              const double wv = wt[w_off];
              double* o = out + out_off;
              const double* xi = x + in_off;
              for (Index p = 0; p < in_plane; ++p) o[p] += wv * xi[p];
            } else if constexpr (Pass == ConvPass::kInputGrad) {
              const double wv = wt[w_off];
              double* gi = gx + in_off;
              const double* go = gout + out_off;
              for (Index p = 0; p < in_plane; ++p) gi[p] += wv * go[p];
            } else {
              const double* xi = x + in_off;
              const double* go = gout + out_off;
              double acc = 0.0;
              for (Index p = 0; p < in_plane; ++p) acc += go[p] * xi[p];
              gw[w_off] += acc;
            }
            continue;
          }
          for (Index kh = 0; kh < g.k; ++kh) {
            Index oh_lo, oh_hi;
            valid_range(kh * g.dil - g.pad, g.stride, g.h, g.ho, oh_lo, oh_hi);
            for (Index kw = 0; kw < g.k; ++kw) {
              Index ow_lo, ow_hi;
              const Index col_off = kw * g.dil - g.pad;
              valid_range(col_off, g.stride, g.w, g.wo, ow_lo, ow_hi);
              if (ow_lo >= ow_hi) continue;
              const Index widx = w_off + kh * g.k + kw;
              [[maybe_unused]] const double wv = Pass == ConvPass::kWeightGrad ? 0.0 : wt[widx];
              double acc = 0.0;
              for (Index oh = oh_lo; oh < oh_hi; ++oh) {
                const Index ih = oh * g.stride + kh * g.dil - g.pad;
                const Index orow = out_off + oh * g.wo;
                const Index irow = in_off + ih * g.w + col_off;
                if constexpr (Pass == ConvPass::kForward) {
                  double* o = out + orow;
                  const double* xi = x + irow;
                  if (g.stride == 1) {
                    for (Index ow = ow_lo; ow < ow_hi; ++ow) o[ow] += wv * xi[ow];
                  } else {
                    for (Index ow = ow_lo; ow < ow_hi; ++ow) o[ow] += wv * xi[ow * g.stride];
                  }
                } else if constexpr (Pass == ConvPass::kInputGrad) {
                  double* gi = gx + irow;
                  const double* go = gout + orow;
                  if (g.stride == 1) {
                    for (Index ow = ow_lo; ow < ow_hi; ++ow) gi[ow] += wv * go[ow];
                  } else {
                    for (Index ow = ow_lo; ow < ow_hi; ++ow) gi[ow * g.stride] += wv * go[ow];
                  }
                } else {
                  const double* xi = x + irow;
                  const double* go = gout + orow;
                  for (Index ow = ow_lo; ow < ow_hi; ++ow) acc += go[ow] * xi[ow * g.stride];
                }
              }
              if constexpr (Pass == ConvPass::kWeightGrad) gw[widx] += acc;
            }
          }
        }
      }
    }
  }
}

std::size_t attr_size(std::string_view prim, const AttrMap& attrs, const char* key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw Error(std::string(prim) + ": missing attribute '" + key + "'");
  double v = it->second;
  if (!(v >= 0.0) || v != std::floor(v)) {
    throw Error(std::string(prim) + ": attribute '" + key + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

void check_attr_keys(std::string_view prim, const AttrMap& attrs,
                     std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : attrs) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(std::string(prim) + ": unknown attribute '" + key + "'");
  }
}

Tensor pool_impl(Tape& tape, const Tensor& x, const PoolAttrs& a, bool is_max) {
  const char* name = is_max ? "max_pool2d" : "avg_pool2d";
  expect_rank(name, x, 4, "input");
  if (a.kernel == 0 || a.stride == 0) shape_fail(name, "kernel and stride must be positive");
  if (a.padding >= a.kernel) {
    shape_fail(name, "padding must be smaller than the kernel");
  }
  const auto& s = x.shape();
  const Index n = s[0], c = s[1], h = s[2], w = s[3];
  if (h + 2 * a.padding < a.kernel || w + 2 * a.padding < a.kernel) {
    shape_fail(name, "window larger than padded input " + shape_to_string(s));
  }
  const Index ho = window_output_size(h, a.kernel, a.stride, a.padding, 1);
  const Index wo = window_output_size(w, a.kernel, a.stride, a.padding, 1);
  Array out(Shape{s[0], s[1], std::size_t(ho), std::size_t(wo)});
  // For max: flat input index of the winner; for avg: window element count.
  auto aux = std::make_shared<std::vector<Index>>(out.numel());
  const double* xi = x.value().ptr();
  double* o = out.ptr();
  const Index k = a.kernel, st = a.stride, pad = a.padding;
  for (Index nc = 0; nc < n * c; ++nc) {
    for (Index oh = 0; oh < ho; ++oh) {
      const Index h0 = std::max<Index>(oh * st - pad, 0);
      const Index h1 = std::min<Index>(oh * st - pad + k, h);
      for (Index ow = 0; ow < wo; ++ow) {
        const Index w0 = std::max<Index>(ow * st - pad, 0);
        const Index w1 = std::min<Index>(ow * st - pad + k, w);
        const Index oidx = (nc * ho + oh) * wo + ow;
        if (is_max) {
          double best = -std::numeric_limits<double>::infinity();
          Index arg = -1;
          for (Index ih = h0; ih < h1; ++ih) {
            for (Index iw = w0; iw < w1; ++iw) {
              const Index idx = (nc * h + ih) * w + iw;
              if (xi[idx] > best || arg < 0) {
                best = xi[idx];
                arg = idx;
              }
            }
          }
          o[oidx] = best;
          (*aux)[oidx] = arg;
        } else {
          double acc = 0.0;
          for (Index ih = h0; ih < h1; ++ih) {
            for (Index iw = w0; iw < w1; ++iw) acc += xi[(nc * h + ih) * w + iw];
          }
          const Index count = (h1 - h0) * (w1 - w0);
          o[oidx] = acc / static_cast<double>(count);
          (*aux)[oidx] = count;
        }
      }
    }
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record(name, {x}, y,
                [x, aux, is_max, n, c, h, w, ho, wo, k, st, pad](const Array& g) mutable {
                  double* gx = x.grad_buffer().ptr();
                  const double* go = g.ptr();
                  if (is_max) {
                    for (std::size_t i = 0; i < aux->size(); ++i) gx[(*aux)[i]] += go[i];
                    return;
                  }
                  for (Index nc = 0; nc < n * c; ++nc) {
                    for (Index oh = 0; oh < ho; ++oh) {
                      const Index h0 = std::max<Index>(oh * st - pad, 0);
                      const Index h1 = std::min<Index>(oh * st - pad + k, h);
                      for (Index ow = 0; ow < wo; ++ow) {
                        const Index w0 = std::max<Index>(ow * st - pad, 0);
                        const Index w1 = std::min<Index>(ow * st - pad + k, w);
                        const Index oidx = (nc * ho + oh) * wo + ow;
                        const double share = go[oidx] / static_cast<double>((*aux)[oidx]);
                        for (Index ih = h0; ih < h1; ++ih) {
                          for (Index iw = w0; iw < w1; ++iw) gx[(nc * h + ih) * w + iw] += share;
                        }
                      }
                    }
                  }
                });
  }
  return y;
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary_impl(Tape& tape, const Tensor& a, const Tensor& b, Binary op) {
  const char* name = op == Binary::kAdd ? "add" : op == Binary::kSub ? "sub" : "mul";
  if (!a.defined() || !b.defined()) shape_fail(name, "undefined operand");
  expect_same_shape(name, a, b);
  Array out(a.shape());
  const double* pa = a.value().ptr();
  const double* pb = b.value().ptr();
  double* po = out.ptr();
  const std::size_t m = out.numel();
  for (std::size_t i = 0; i < m; ++i) {
    po[i] = op == Binary::kAdd ? pa[i] + pb[i] : op == Binary::kSub ? pa[i] - pb[i] : pa[i] * pb[i];
  }
  const bool rg = any_requires_grad({&a, &b});
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record(name, {a, b}, y, [a, b, op, m](const Array& g) mutable {
      const double* go = g.ptr();
      // Fan-out (a and b aliasing one tensor) accumulates both contributions.
      if (a.requires_grad()) {
        double* ga = a.grad_buffer().ptr();
        if (op == Binary::kMul) {
          const double* pb = b.value().ptr();
          for (std::size_t i = 0; i < m; ++i) ga[i] += go[i] * pb[i];
        } else {
          for (std::size_t i = 0; i < m; ++i) ga[i] += go[i];
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad_buffer().ptr();
        if (op == Binary::kMul) {
          const double* pa = a.value().ptr();
          for (std::size_t i = 0; i < m; ++i) gb[i] += go[i] * pa[i];
        } else if (op == Binary::kSub) {
          for (std::size_t i = 0; i < m; ++i) gb[i] -= go[i];
        } else {
          for (std::size_t i = 0; i < m; ++i) gb[i] += go[i];
        }
      }
    });
  }
  return y;
}

}  // namespace

std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * padding < span) return 0;
  return (in + 2 * padding - span) / stride + 1;
}

Tensor relu(Tape& tape, const Tensor& x) {
  if (!x.defined()) shape_fail("relu", "input is undefined");
  Array out(x.shape());
  const double* xi = x.value().ptr();
  double* o = out.ptr();
  const std::size_t m = out.numel();
  for (std::size_t i = 0; i < m; ++i) o[i] = xi[i] > 0.0 ? xi[i] : 0.0;
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("relu", {x}, y, [x, m](const Array& g) mutable {
      double* gx = x.grad_buffer().ptr();
      const double* xi = x.value().ptr();
      const double* go = g.ptr();
      for (std::size_t i = 0; i < m; ++i) {
        if (xi[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return y;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Conv2dAttrs& a) {
  expect_rank("conv2d", x, 4, "input");
  expect_rank("conv2d", w, 4, "weight");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (a.groups == 0 || a.stride == 0 || a.dilation == 0) {
    shape_fail("conv2d", "stride, dilation and groups must be positive");
  }
  if (ws[2] != ws[3]) shape_fail("conv2d", "kernel must be square, got " + shape_to_string(ws));
  if (xs[1] % a.groups != 0) {
    shape_fail("conv2d", "input channels " + std::to_string(xs[1]) + " not divisible by groups " +
                             std::to_string(a.groups));
  }
  if (ws[0] % a.groups != 0) {
    shape_fail("conv2d", "output channels " + std::to_string(ws[0]) +
                             " not divisible by groups " + std::to_string(a.groups));
  }
  if (ws[1] != xs[1] / a.groups) {
    shape_fail("conv2d", "weight expects " + std::to_string(ws[1] * a.groups) +
                             " input channels, input " + shape_to_string(xs) + " has " +
                             std::to_string(xs[1]));
  }
  const std::size_t ho = window_output_size(xs[2], ws[2], a.stride, a.padding, a.dilation);
  const std::size_t wo = window_output_size(xs[3], ws[3], a.stride, a.padding, a.dilation);
  if (ho == 0 || wo == 0) {
    shape_fail("conv2d", "kernel extent exceeds padded input " + shape_to_string(xs));
  }
  ConvGeom g{Index(xs[0]), Index(xs[1]),  Index(xs[2]),           Index(xs[3]),
             Index(ws[0]), Index(ws[1]),  Index(ws[0] / a.groups), Index(ws[2]),
             Index(ho),    Index(wo),     Index(a.stride),        Index(a.padding),
             Index(a.dilation), Index(a.groups)};
  Array out(Shape{xs[0], ws[0], ho, wo});
  conv_loops<ConvPass::kForward>(g, x.value().ptr(), w.value().ptr(), nullptr, out.ptr(),
                                 nullptr, nullptr);
  const bool rg = any_requires_grad({&x, &w});
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("conv2d", {x, w}, y, [x, w, g](const Array& grad) mutable {
      if (x.requires_grad()) {
        conv_loops<ConvPass::kInputGrad>(g, nullptr, w.value().ptr(), grad.ptr(), nullptr,
                                         x.grad_buffer().ptr(), nullptr);
      }
      if (w.requires_grad()) {
        conv_loops<ConvPass::kWeightGrad>(g, x.value().ptr(), nullptr, grad.ptr(), nullptr,
                                          nullptr, w.grad_buffer().ptr());
      }
    });
  }
  return y;
}

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  expect_rank("batch_norm", x, 4, "input");
  expect_rank("batch_norm", gamma, 1, "gamma");
  expect_rank("batch_norm", beta, 1, "beta");
  const auto& s = x.shape();
  if (gamma.shape()[0] != s[1] || beta.shape()[0] != s[1]) {
    shape_fail("batch_norm", "affine parameters " + shape_to_string(gamma.shape()) +
                                 " do not match channels of " + shape_to_string(s));
  }
  const Index n = s[0], c = s[1], plane = s[2] * s[3];
  const double m = static_cast<double>(n * plane);
  Array out(s);
  auto xhat = std::make_shared<Array>(s);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  const double* xi = x.value().ptr();
  const double* gm = gamma.value().ptr();
  const double* bt = beta.value().ptr();
  for (Index ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (Index b = 0; b < n; ++b) {
      const double* p = xi + (b * c + ch) * plane;
      for (Index i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= m;
    double var = 0.0;
    for (Index b = 0; b < n; ++b) {
      const double* p = xi + (b * c + ch) * plane;
      for (Index i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
    }
    var /= m;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ch] = is;
    for (Index b = 0; b < n; ++b) {
      const Index off = (b * c + ch) * plane;
      for (Index i = 0; i < plane; ++i) {
        const double xh = (xi[off + i] - mean) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = gm[ch] * xh + bt[ch];
      }
    }
  }
  const bool rg = any_requires_grad({&x, &gamma, &beta});
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("batch_norm", {x, gamma, beta}, y,
                [x, gamma, beta, xhat, inv_std, n, c, plane, m](const Array& g) mutable {
                  const double* go = g.ptr();
                  const double* xh = xhat->ptr();
                  for (Index ch = 0; ch < c; ++ch) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (Index b = 0; b < n; ++b) {
                      const Index off = (b * c + ch) * plane;
                      for (Index i = 0; i < plane; ++i) {
                        sum_g += go[off + i];
                        sum_gx += go[off + i] * xh[off + i];
                      }
                    }
                    if (gamma.requires_grad()) gamma.grad_buffer()[ch] += sum_gx;
                    if (beta.requires_grad()) beta.grad_buffer()[ch] += sum_g;
                    if (x.requires_grad()) {
                      double* gx = x.grad_buffer().ptr();
                      const double k = gamma.value()[ch] * (*inv_std)[ch] / m;
                      for (Index b = 0; b < n; ++b) {
                        const Index off = (b * c + ch) * plane;
                        for (Index i = 0; i < plane; ++i) {
                          gx[off + i] += k * (m * go[off + i] - sum_g - xh[off + i] * sum_gx);
                        }
                      }
                    }
                  }
                });
  }
  return y;
}

Tensor max_pool2d(Tape& tape, const Tensor& x, const PoolAttrs& attrs) {
  return pool_impl(tape, x, attrs, true);
}

Tensor avg_pool2d(Tape& tape, const Tensor& x, const PoolAttrs& attrs) {
  return pool_impl(tape, x, attrs, false);
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  expect_rank("global_avg_pool", x, 4, "input");
  const auto& s = x.shape();
  const std::size_t nc = s[0] * s[1], plane = s[2] * s[3];
  Array out(Shape{s[0], s[1]});
  const double* xi = x.value().ptr();
  for (std::size_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += xi[i * plane + p];
    out[i] = acc / static_cast<double>(plane);
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("global_avg_pool", {x}, y, [x, nc, plane](const Array& g) mutable {
      double* gx = x.grad_buffer().ptr();
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t i = 0; i < nc; ++i) {
        const double v = g[i] * inv;
        for (std::size_t p = 0; p < plane; ++p) gx[i * plane + p] += v;
      }
    });
  }
  return y;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> xs) {
  if (xs.empty()) shape_fail("concat", "no inputs");
  for (const Tensor& t : xs) expect_rank("concat", t, 4, "input");
  const auto& s0 = xs[0].shape();
  std::size_t channels = 0;
  for (const Tensor& t : xs) {
    const auto& s = t.shape();
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      shape_fail("concat", "incompatible inputs " + shape_to_string(s0) + " and " +
                               shape_to_string(s));
    }
    channels += s[1];
  }
  const std::size_t n = s0[0], plane = s0[2] * s0[3];
  Array out(Shape{n, channels, s0[2], s0[3]});
  std::size_t c_off = 0;
  for (const Tensor& t : xs) {
    const std::size_t c = t.shape()[1];
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(t.value().ptr() + b * c * plane, c * plane,
                  out.ptr() + (b * channels + c_off) * plane);
    }
    c_off += c;
  }
  bool rg = false;
  for (const Tensor& t : xs) rg = rg || t.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    tape.record("concat", inputs, y, [inputs, n, channels, plane](const Array& g) mutable {
      std::size_t c_off = 0;
      for (Tensor& t : inputs) {
        const std::size_t c = t.shape()[1];
        if (t.requires_grad()) {
          double* gx = t.grad_buffer().ptr();
          for (std::size_t b = 0; b < n; ++b) {
            const double* src = g.ptr() + (b * channels + c_off) * plane;
            double* dst = gx + b * c * plane;
            for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
        c_off += c;
      }
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_impl(tape, a, b, Binary::kAdd);
}
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_impl(tape, a, b, Binary::kSub);
}
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_impl(tape, a, b, Binary::kMul);
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  if (!x.defined()) shape_fail("scale", "input is undefined");
  Array out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("scale", {x}, y, [x, factor](const Array& g) mutable {
      Array& gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[i] * factor;
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  if (!x.defined()) shape_fail("sum", "input is undefined");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const bool rg = x.requires_grad();
  Tensor y(Array::scalar(acc), rg);
  if (rg) {
    tape.record("sum", {x}, y, [x](const Array& g) mutable {
      Array& gx = x.grad_buffer();
      const double v = g[0];
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += v;
    });
  }
  return y;
}

Tensor weighted_sum(Tape& tape, const Tensor& weights, std::span<const Tensor> xs) {
  expect_rank("weighted_sum", weights, 1, "weights");
  if (weights.shape()[0] != xs.size()) {
    shape_fail("weighted_sum", std::to_string(weights.shape()[0]) + " weights for " +
                                   std::to_string(xs.size()) + " terms");
  }
  const Tensor* first = nullptr;
  for (const Tensor& t : xs) {
    if (!t.defined()) continue;
    if (!first) {
      first = &t;
    } else if (t.shape() != first->shape()) {
      shape_fail("weighted_sum", "term shapes disagree: " + shape_to_string(first->shape()) +
                                     " vs " + shape_to_string(t.shape()));
    }
  }
  if (!first) shape_fail("weighted_sum", "all terms are zero-valued placeholders");
  Array out(first->shape());
  const std::size_t m = out.numel();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!xs[k].defined()) continue;
    const double wk = weights.value()[k];
    const double* xi = xs[k].value().ptr();
    double* o = out.ptr();
    for (std::size_t i = 0; i < m; ++i) o[i] += wk * xi[i];
  }
  bool rg = weights.requires_grad();
  for (const Tensor& t : xs) rg = rg || (t.defined() && t.requires_grad());
  Tensor y(std::move(out), rg);
  if (rg) {
    std::vector<Tensor> inputs;
    inputs.reserve(xs.size() + 1);
    inputs.push_back(weights);
    inputs.insert(inputs.end(), xs.begin(), xs.end());
    tape.record("weighted_sum", inputs, y, [inputs, m](const Array& g) mutable {
      Tensor& wts = inputs[0];
      const double* go = g.ptr();
      for (std::size_t k = 0; k + 1 < inputs.size(); ++k) {
        Tensor& t = inputs[k + 1];
        if (!t.defined()) continue;
        if (wts.requires_grad()) {
          const double* xi = t.value().ptr();
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += go[i] * xi[i];
          wts.grad_buffer()[k] += acc;
        }
        if (t.requires_grad()) {
          const double wk = wts.value()[k];
          double* gx = t.grad_buffer().ptr();
          for (std::size_t i = 0; i < m; ++i) gx[i] += wk * go[i];
        }
      }
    });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank("linear", x, 2, "input");
  expect_rank("linear", w, 2, "weight");
  expect_rank("linear", b, 1, "bias");
  const std::size_t n = x.shape()[0], f = x.shape()[1], o = w.shape()[0];
  if (w.shape()[1] != f || b.shape()[0] != o) {
    shape_fail("linear", "input " + shape_to_string(x.shape()) + ", weight " +
                             shape_to_string(w.shape()) + ", bias " + shape_to_string(b.shape()));
  }
  Array out(Shape{n, o});
  const double* xi = x.value().ptr();
  const double* wi = w.value().ptr();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < o; ++j) {
      double acc = b.value()[j];
      for (std::size_t k = 0; k < f; ++k) acc += xi[r * f + k] * wi[j * f + k];
      out[r * o + j] = acc;
    }
  }
  const bool rg = any_requires_grad({&x, &w, &b});
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("linear", {x, w, b}, y, [x, w, b, n, f, o](const Array& g) mutable {
      const double* go = g.ptr();
      if (x.requires_grad()) {
        double* gx = x.grad_buffer().ptr();
        const double* wi = w.value().ptr();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < o; ++j) {
            for (std::size_t k = 0; k < f; ++k) gx[r * f + k] += go[r * o + j] * wi[j * f + k];
          }
        }
      }
      if (w.requires_grad()) {
        double* gw = w.grad_buffer().ptr();
        const double* xi = x.value().ptr();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < o; ++j) {
            for (std::size_t k = 0; k < f; ++k) gw[j * f + k] += go[r * o + j] * xi[r * f + k];
          }
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad_buffer().ptr();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < o; ++j) gb[j] += go[r * o + j];
        }
      }
    });
  }
  return y;
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (!x.defined() || (x.shape().size() != 1 && x.shape().size() != 2)) {
    shape_fail("softmax", "expected rank 1 or 2 input");
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  Array out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.value().ptr() + r * cols;
    double* o = out.ptr() + r * cols;
    double mx = xi[0];
    for (std::size_t k = 1; k < cols; ++k) mx = std::max(mx, xi[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < cols; ++k) {
      o[k] = std::exp(xi[k] - mx);
      z += o[k];
    }
    for (std::size_t k = 0; k < cols; ++k) o[k] /= z;
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    Tensor yc = y;
    tape.record("softmax", {x}, y, [x, yc, rows, cols](const Array& g) mutable {
      double* gx = x.grad_buffer().ptr();
      const double* yi = yc.value().ptr();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t k = 0; k < cols; ++k) dot += g[r * cols + k] * yi[r * cols + k];
        for (std::size_t k = 0; k < cols; ++k) {
          gx[r * cols + k] += yi[r * cols + k] * (g[r * cols + k] - dot);
        }
      }
    });
  }
  return y;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const Tensor& labels) {
  expect_rank("cross_entropy", logits, 2, "logits");
  expect_rank("cross_entropy", labels, 1, "labels");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  if (labels.shape()[0] != n) {
    shape_fail("cross_entropy", std::to_string(labels.shape()[0]) + " labels for " +
                                    std::to_string(n) + " rows of logits");
  }
  auto probs = std::make_shared<Array>(logits.shape());
  auto targets = std::make_shared<std::vector<std::size_t>>(n);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double lv = labels.value()[r];
    if (!(lv >= 0.0) || lv != std::floor(lv) || lv >= static_cast<double>(k)) {
      shape_fail("cross_entropy", "label " + std::to_string(lv) + " outside [0, " +
                                      std::to_string(k) + ")");
    }
    const std::size_t t = static_cast<std::size_t>(lv);
    (*targets)[r] = t;
    const double* row = logits.value().ptr() + r * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[r * k + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < k; ++j) (*probs)[r * k + j] /= z;
    loss += std::log(z) + mx - row[t];
  }
  loss /= static_cast<double>(n);
  const bool rg = logits.requires_grad();
  Tensor y(Array::scalar(loss), rg);
  if (rg) {
    tape.record("cross_entropy", {logits, labels}, y,
                [logits, probs, targets, n, k](const Array& g) mutable {
                  double* gl = logits.grad_buffer().ptr();
                  const double s = g[0] / static_cast<double>(n);
                  for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t j = 0; j < k; ++j) {
                      const double onehot = j == (*targets)[r] ? 1.0 : 0.0;
                      gl[r * k + j] += s * ((*probs)[r * k + j] - onehot);
                    }
                  }
                });
  }
  return y;
}

Tensor channel_shuffle(Tape& tape, const Tensor& x, std::size_t groups) {
  expect_rank("channel_shuffle", x, 4, "input");
  const auto& s = x.shape();
  if (groups == 0 || s[1] % groups != 0) {
    shape_fail("channel_shuffle", "channels " + std::to_string(s[1]) +
                                      " not divisible by groups " + std::to_string(groups));
  }
  const std::size_t n = s[0], c = s[1], plane = s[2] * s[3], per = c / groups;
  // Output channel i * groups + j reads input channel j * per + i.
  auto src_of = [groups, per](std::size_t oc) { return (oc % groups) * per + oc / groups; };
  Array out(s);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < c; ++oc) {
      std::copy_n(x.value().ptr() + (b * c + src_of(oc)) * plane, plane,
                  out.ptr() + (b * c + oc) * plane);
    }
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("channel_shuffle", {x}, y, [x, n, c, plane, src_of](const Array& g) mutable {
      double* gx = x.grad_buffer().ptr();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < c; ++oc) {
          const double* src = g.ptr() + (b * c + oc) * plane;
          double* dst = gx + (b * c + src_of(oc)) * plane;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
        }
      }
    });
  }
  return y;
}

Tensor crop(Tape& tape, const Tensor& x, std::size_t top, std::size_t left) {
  expect_rank("crop", x, 4, "input");
  const auto& s = x.shape();
  if (top >= s[2] || left >= s[3]) {
    shape_fail("crop", "offset (" + std::to_string(top) + ", " + std::to_string(left) +
                           ") outside " + shape_to_string(s));
  }
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3], ho = h - top, wo = w - left;
  Array out(Shape{s[0], s[1], ho, wo});
  for (std::size_t i = 0; i < nc; ++i) {
    for (std::size_t r = 0; r < ho; ++r) {
      std::copy_n(x.value().ptr() + (i * h + r + top) * w + left, wo, out.ptr() + (i * ho + r) * wo);
    }
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(out), rg);
  if (rg) {
    tape.record("crop", {x}, y, [x, nc, h, w, ho, wo, top, left](const Array& g) mutable {
      double* gx = x.grad_buffer().ptr();
      for (std::size_t i = 0; i < nc; ++i) {
        for (std::size_t r = 0; r < ho; ++r) {
          for (std::size_t col = 0; col < wo; ++col) {
            gx[(i * h + r + top) * w + left + col] += g[(i * ho + r) * wo + col];
          }
        }
      }
    });
  }
  return y;
}

const std::vector<std::string>& primitive_names() {
  static const std::vector<std::string> names = {
      "relu",   "conv2d",  "batch_norm",   "max_pool2d", "avg_pool2d",      "global_avg_pool",
      "concat", "add",     "sub",          "mul",        "scale",           "sum",
      "weighted_sum", "linear", "softmax", "cross_entropy", "channel_shuffle", "crop"};
  return names;
}

Tensor apply_primitive(Tape& tape, std::string_view name, std::span<const Tensor> in,
                       const AttrMap& attrs) {
  auto need_inputs = [&](std::size_t count) {
    if (in.size() != count) {
      shape_fail(name, "expected " + std::to_string(count) + " inputs, got " +
                           std::to_string(in.size()));
    }
  };
  if (name == "relu") {
    need_inputs(1);
    check_attr_keys(name, attrs, {});
    return relu(tape, in[0]);
  }
  if (name == "conv2d") {
    need_inputs(2);
    check_attr_keys(name, attrs, {"stride", "padding", "dilation", "groups"});
    Conv2dAttrs a{attr_size(name, attrs, "stride"), attr_size(name, attrs, "padding"),
                  attr_size(name, attrs, "dilation"), attr_size(name, attrs, "groups")};
    return conv2d(tape, in[0], in[1], a);
  }
  if (name == "batch_norm") {
    need_inputs(3);
    check_attr_keys(name, attrs, {"eps"});
    auto it = attrs.find("eps");
    return batch_norm(tape, in[0], in[1], in[2], it == attrs.end() ? 1e-5 : it->second);
  }
  if (name == "max_pool2d" || name == "avg_pool2d") {
    need_inputs(1);
    check_attr_keys(name, attrs, {"kernel", "stride", "padding"});
    PoolAttrs a{attr_size(name, attrs, "kernel"), attr_size(name, attrs, "stride"),
                attr_size(name, attrs, "padding")};
    return name == "max_pool2d" ? max_pool2d(tape, in[0], a) : avg_pool2d(tape, in[0], a);
  }
  if (name == "global_avg_pool") {
    need_inputs(1);
    check_attr_keys(name, attrs, {});
    return global_avg_pool(tape, in[0]);
  }
  if (name == "concat") {
    check_attr_keys(name, attrs, {});
    return concat_channels(tape, in);
  }
  if (name == "add" || name == "sub" || name == "mul") {
    need_inputs(2);
    check_attr_keys(name, attrs, {});
    if (name == "add") return add(tape, in[0], in[1]);
    if (name == "sub") return sub(tape, in[0], in[1]);
    return mul(tape, in[0], in[1]);
  }
  if (name == "scale") {
    need_inputs(1);
    check_attr_keys(name, attrs, {"factor"});
    auto it = attrs.find("factor");
    if (it == attrs.end()) throw Error("scale: missing attribute 'factor'");
    return scale(tape, in[0], it->second);
  }
  if (name == "sum") {
    need_inputs(1);
    check_attr_keys(name, attrs, {});
    return sum(tape, in[0]);
  }
  if (name == "weighted_sum") {
    if (in.size() < 2) shape_fail(name, "expected weights and at least one term");
    check_attr_keys(name, attrs, {});
    return weighted_sum(tape, in[0], in.subspan(1));
  }
  if (name == "linear") {
    need_inputs(3);
    check_attr_keys(name, attrs, {});
    return linear(tape, in[0], in[1], in[2]);
  }
  if (name == "softmax") {
    need_inputs(1);
    check_attr_keys(name, attrs, {});
    return softmax(tape, in[0]);
  }
  if (name == "cross_entropy") {
    need_inputs(2);
    check_attr_keys(name, attrs, {});
    return cross_entropy(tape, in[0], in[1]);
  }
  if (name == "channel_shuffle") {
    need_inputs(1);
    check_attr_keys(name, attrs, {"groups"});
    return channel_shuffle(tape, in[0], attr_size(name, attrs, "groups"));
  }
  if (name == "crop") {
    need_inputs(1);
    check_attr_keys(name, attrs, {"top", "left"});
    return crop(tape, in[0], attr_size(name, attrs, "top"), attr_size(name, attrs, "left"));
  }
  throw Error("unknown primitive '" + std::string(name) + "'");
}

}  // namespace rcnas::prim
