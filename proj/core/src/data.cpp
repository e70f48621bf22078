// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "rcnas/error.hpp"

namespace rcnas {

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Shape shape = images.shape();
  shape[0] = indices.size();
  const std::size_t stride = images.numel() / images.dim(0);
  Dataset out;
  out.images = Array(shape);
  out.n_classes = n_classes;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= size()) throw ShapeError("subset index " + std::to_string(i) + " out of range");
    std::copy_n(images.ptr() + i * stride, stride, out.images.ptr() + r * stride);
    out.labels.push_back(labels[i]);
  }
  return out;
}

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"shapes", "stripes", "blobs"};
  return names;
}

namespace {

constexpr std::size_t kChannels = 3;

// Coverage in [0, 1] of shape `cls` at pixel (y, x); (cy, cx) centre, r scale.
double shape_mask(std::size_t cls, double y, double x, double cy, double cx, double r) {
  const double dy = y - cy, dx = x - cx;
  const double half = std::max(1.0, 0.35 * r);
  switch (cls) {
    case 0:  // horizontal bar
      return std::abs(dy) <= half * 0.6 && std::abs(dx) <= r ? 1.0 : 0.0;
    case 1:  // vertical bar
      return std::abs(dx) <= half * 0.6 && std::abs(dy) <= r ? 1.0 : 0.0;
    case 2:  // diagonal bar
      return std::abs(dy - dx) <= half * 0.85 && std::abs(dy + dx) <= 1.4 * r ? 1.0 : 0.0;
    case 3:  // disk
      return dy * dy + dx * dx <= r * r * 0.7 ? 1.0 : 0.0;
    case 4:  // anti-diagonal bar
      return std::abs(dy + dx) <= half * 0.85 && std::abs(dy - dx) <= 1.4 * r ? 1.0 : 0.0;
    case 5: {  // ring
      const double d = std::sqrt(dy * dy + dx * dx);
      return std::abs(d - 0.8 * r) <= 0.6 ? 1.0 : 0.0;
    }
    case 6:  // cross
      return (std::abs(dy) <= 0.6 && std::abs(dx) <= r) || (std::abs(dx) <= 0.6 && std::abs(dy) <= r) ? 1.0 : 0.0;
    default: {  // box outline
      const double m = std::max(std::abs(dy), std::abs(dx));
      return std::abs(m - 0.8 * r) <= 0.6 ? 1.0 : 0.0;
    }
  }
}

void draw_shapes(double* img, std::size_t size, std::size_t cls, Rng& rng) {
  const double s = static_cast<double>(size);
  const double r = uniform(rng, 0.25 * s, 0.4 * s);
  const double cy = uniform(rng, 0.3 * s, 0.7 * s - 1.0);
  const double cx = uniform(rng, 0.3 * s, 0.7 * s - 1.0);
  const bool dark_on_light = uniform01(rng) < 0.5;
  double fg[kChannels], bg[kChannels];
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double lo = uniform(rng, 0.05, 0.35), hi = uniform(rng, 0.65, 0.95);
    fg[c] = dark_on_light ? lo : hi;
    bg[c] = dark_on_light ? hi : lo;
  }
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double m = shape_mask(cls, static_cast<double>(y), static_cast<double>(x), cy, cx, r);
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double v = m * fg[c] + (1.0 - m) * bg[c] + 0.08 * normal(rng);
        img[(c * size + y) * size + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

void draw_stripes(double* img, std::size_t size, std::size_t cls, std::size_t classes, Rng& rng) {
  const double angle = std::numbers::pi * static_cast<double>(cls) / static_cast<double>(classes) +
                       uniform(rng, -0.1, 0.1);
  const double freq = uniform(rng, 0.6, 1.2);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double t = freq * (ca * static_cast<double>(x) + sa * static_cast<double>(y)) + phase;
      const double base = 0.5 + 0.35 * std::sin(t);
      for (std::size_t c = 0; c < kChannels; ++c) {
        img[(c * size + y) * size + x] = std::clamp(base + 0.1 * normal(rng), 0.0, 1.0);
      }
    }
  }
}

void draw_blobs(double* img, std::size_t size, std::size_t cls, std::size_t classes, Rng& rng) {
  const double s = static_cast<double>(size);
  const double a = 2.0 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(classes);
  const double cy = 0.5 * s + 0.28 * s * std::sin(a) + 0.05 * s * normal(rng);
  const double cx = 0.5 * s + 0.28 * s * std::cos(a) + 0.05 * s * normal(rng);
  const double sigma = uniform(rng, 0.08, 0.14) * s;
  double amp[kChannels];
  for (double& v : amp) v = uniform(rng, 0.5, 0.9);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      for (std::size_t c = 0; c < kChannels; ++c) {
        img[(c * size + y) * size + x] = std::clamp(0.1 + amp[c] * g + 0.05 * normal(rng), 0.0, 1.0);
      }
    }
  }
}

}  // namespace

Dataset gen_synthetic(std::string_view generator, std::size_t n, std::size_t size, std::size_t classes,
                      std::uint64_t seed) {
  if (n == 0) throw ConfigError("/data/n", "must be positive");
  if (size < 4) throw ConfigError("/data/image_size", "must be at least 4");
  if (classes < 2) throw ConfigError("/data/classes", "must be at least 2");
  const bool shapes = generator == "shapes";
  if (!shapes && generator != "stripes" && generator != "blobs") {
    throw ConfigError("/data/generator", "unknown generator '" + std::string(generator) + "'");
  }
  if (shapes && classes > 8) throw ConfigError("/data/classes", "shapes supports at most 8 classes");
  Dataset ds;
  ds.n_classes = classes;
  ds.images = Array({n, kChannels, size, size});
  const std::size_t stride = kChannels * size * size;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t cls = i % classes;
    double* img = ds.images.ptr() + i * stride;
    if (shapes) {
      draw_shapes(img, size, cls, rng);
    } else if (generator == "stripes") {
      draw_stripes(img, size, cls, classes, rng);
    } else {
      draw_blobs(img, size, cls, classes, rng);
    }
    ds.labels.push_back(cls);
  }
  return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                            std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("/data/split", "fraction must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (cut == 0 || cut == n) throw ConfigError("/data/split", "a part would be empty");
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end())};
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  auto [a, b] = split_indices(ds.size(), fraction, seed);
  return {ds.subset(a), ds.subset(b)};
}

Normalizer Normalizer::fit(const Dataset& ds) {
  const std::size_t n = ds.size(), c = ds.channels();
  const std::size_t hw = ds.images.numel() / (n * c);
  Normalizer norm;
  norm.mean.assign(c, 0.0);
  norm.stddev.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = ds.images.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        s += p[k];
        ss += p[k] * p[k];
      }
    }
    const double count = static_cast<double>(n * hw);
    norm.mean[ch] = s / count;
    norm.stddev[ch] = std::sqrt(std::max(ss / count - norm.mean[ch] * norm.mean[ch], 1e-12));
  }
  return norm;
}

void Normalizer::apply(Dataset& ds) const {
  const std::size_t n = ds.size(), c = ds.channels();
  if (c != mean.size()) throw ShapeError("normalizer fitted on a different channel count");
  const std::size_t hw = ds.images.numel() / (n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = ds.images.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) p[k] = (p[k] - mean[ch]) / stddev[ch];
    }
  }
}

BatchSampler::BatchSampler(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
    : ds_(&ds), batch_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ConfigError("/search/batch_size", "must be positive");
  if (ds.size() < batch_size) {
    throw ConfigError("/search/batch_size", "batch of " + std::to_string(batch_size) + " exceeds the " +
                                                std::to_string(ds.size()) + "-image split");
  }
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_.resize(ds_->size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  Rng rng(derive_seed(seed_, epoch_));
  shuffle(std::span<std::size_t>(order_), rng);
}

void BatchSampler::seek(std::size_t epoch, std::size_t position) {
  epoch_ = epoch;
  pos_ = position;
  reshuffle();
}

std::pair<Tensor, Tensor> BatchSampler::next() {
  if (pos_ + batch_ > order_.size()) {
    ++epoch_;
    pos_ = 0;
    reshuffle();
  }
  const std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
  pos_ += batch_;
  Dataset b = ds_->subset(idx);
  Array labels({batch_});
  for (std::size_t i = 0; i < batch_; ++i) labels[i] = static_cast<double>(b.labels[i]);
  return {Tensor(std::move(b.images)), Tensor(std::move(labels))};
}

Dataset parse_cifar10(const std::vector<unsigned char>& bytes, const std::string& source) {
  constexpr std::size_t kRecord = 3073, kSide = 32, kPixels = 3 * kSide * kSide;
  if (bytes.size() % kRecord != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kRecord;
    throw FormatError(source + ": truncated record at byte offset " + std::to_string(offset) + " (" +
                      std::to_string(bytes.size()) + " bytes is not a multiple of 3073)");
  }
  const std::size_t n = bytes.size() / kRecord;
  if (n == 0) throw FormatError(source + ": no records");
  Dataset ds;
  ds.n_classes = 10;
  ds.images = Array({n, 3, kSide, kSide});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t offset = i * kRecord;
    if (bytes[offset] > 9) {
      throw FormatError(source + ": label " + std::to_string(bytes[offset]) + " > 9 at byte offset " +
                        std::to_string(offset));
    }
    ds.labels[i] = bytes[offset];
    double* out = ds.images.ptr() + i * kPixels;
    for (std::size_t k = 0; k < kPixels; ++k) out[k] = bytes[offset + 1 + k] / 255.0;
  }
  return ds;
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths) {
  if (paths.empty()) throw IoError("no CIFAR-10 files given");
  Dataset all;
  for (const std::string& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Dataset part = parse_cifar10(bytes, path);
    if (all.labels.empty()) {
      all = std::move(part);
      continue;
    }
    Shape shape = all.images.shape();
    shape[0] += part.size();
    std::vector<double> data(all.images.data().begin(), all.images.data().end());
    data.insert(data.end(), part.images.data().begin(), part.images.data().end());
    all.images = Array(shape, std::move(data));
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  return all;
}

void cutout(Array& images, Rng& rng) {
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t side = std::max<std::size_t>(1, h / 4);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cy = uniform_index(rng, h), cx = uniform_index(rng, w);
    const std::size_t y0 = cy >= side / 2 ? cy - side / 2 : 0, x0 = cx >= side / 2 ? cx - side / 2 : 0;
    const std::size_t y1 = std::min(h, y0 + side), x1 = std::min(w, x0 + side);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) images[((i * c + ch) * h + y) * w + x] = 0.0;
      }
    }
  }
}

}  // namespace rcnas
