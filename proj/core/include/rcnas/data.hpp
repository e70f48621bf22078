// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rcnas/rng.hpp"
#include "rcnas/tensor.hpp"

namespace rcnas {

/// images: (N, C, H, W); labels[i] < n_classes.
struct Dataset {
  Array images;
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t image_size() const { return images.dim(2); }
  /// Rows `indices` of this dataset, in that order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

const std::vector<std::string>& generator_names();

/// Seeded three-channel synthetic images in [0, 1]; label i is i % classes.
///  shapes:  one primitive (bars, disk, ring, cross, box) per image on noise,
///           random position, size and polarity; up to 8 classes.
///  stripes: sinusoidal gratings whose orientation encodes the class.
///  blobs:   a Gaussian blob whose centre is drawn around a class anchor.
Dataset gen_synthetic(std::string_view generator, std::size_t n, std::size_t size, std::size_t classes,
                      std::uint64_t seed);

/// Seeded disjoint partition; the first part holds round(fraction * n) rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);
/// The index lists split() uses.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                            std::uint64_t seed);

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Per-channel statistics of `ds`.
  static Normalizer fit(const Dataset& ds);
  void apply(Dataset& ds) const;
};

/// Endless seeded batches. Epoch e visits a permutation drawn from
/// (seed, e); the trailing partial batch of an epoch is dropped.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

  /// Next (images, labels); labels hold class indices as doubles.
  std::pair<Tensor, Tensor> next();
  std::size_t epoch() const { return epoch_; }
  std::size_t position() const { return pos_; }
  std::size_t batches_per_epoch() const { return ds_->size() / batch_; }
  /// Restores the sampler to (epoch, position) of an earlier run.
  void seek(std::size_t epoch, std::size_t position);

 private:
  void reshuffle();

  const Dataset* ds_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

/// Parses concatenated CIFAR-10 binary records (1 label byte, then R, G, B
/// planes of 32x32 bytes). Throws FormatError naming the byte offset.
Dataset parse_cifar10(const std::vector<unsigned char>& bytes, const std::string& source = "buffer");
/// Reads and concatenates the given files. Throws IoError if unreadable.
Dataset load_cifar10_binary(const std::vector<std::string>& paths);

/// Zeroes one random square of side H/4 per image, in place.
void cutout(Array& images, Rng& rng);

}  // namespace rcnas
