// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rcnas/data.hpp"
#include "rcnas/error.hpp"
#include "rcnas/optim.hpp"
#include "rcnas/primitives.hpp"
#include "support/grad_cases.hpp"

namespace rcnas {
namespace {

TEST(Data, ShapesIsBalanced) {
  const Dataset ds = gen_synthetic("shapes", 1024, 16, 4, 7);
  EXPECT_EQ(ds.size(), 1024u);
  EXPECT_EQ(ds.images.shape(), (Shape{1024, 3, 16, 16}));
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t l : ds.labels) ++counts[l];
  for (std::size_t c : counts) EXPECT_EQ(c, 256u);
}

TEST(Data, GeneratorsAreDeterministicAndInRange) {
  for (const std::string& g : generator_names()) {
    const Dataset a = gen_synthetic(g, 103, 12, 5, 3);
    EXPECT_EQ(a, gen_synthetic(g, 103, 12, 5, 3)) << g;
    EXPECT_NE(a.images, gen_synthetic(g, 103, 12, 5, 4).images) << g;
    for (double v : a.images.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t l : a.labels) ++counts[l];
    EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1u);
  }
  EXPECT_THROW(gen_synthetic("spirals", 10, 8, 2, 1), ConfigError);
}

TEST(Data, SplitIsDisjointAndExhaustive) {
  const auto [a, b] = split_indices(1000, 0.5, 11);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(b.size(), 500u);
  std::vector<std::size_t> all = a;
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_NE(split_indices(1000, 0.5, 12).first, a);
  EXPECT_EQ(split_indices(1000, 0.5, 11).first, a);
  EXPECT_THROW(split_indices(10, 1.0, 1), ConfigError);
  EXPECT_THROW(split_indices(10, 0.0, 1), ConfigError);
}

TEST(Data, SplitPreservesRows) {
  const Dataset ds = gen_synthetic("blobs", 40, 8, 4, 2);
  const auto [a, b] = split(ds, 0.25, 5);
  EXPECT_EQ(a.size() + b.size(), ds.size());
  const auto idx = split_indices(40, 0.25, 5);
  EXPECT_EQ(a, ds.subset(idx.first));
  EXPECT_EQ(b, ds.subset(idx.second));
}

TEST(Data, NormalizerStandardizesFitSet) {
  Dataset ds = gen_synthetic("stripes", 64, 8, 2, 1);
  const Normalizer n = Normalizer::fit(ds);
  n.apply(ds);
  const Normalizer after = Normalizer::fit(ds);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(after.mean[c], 0.0, 1e-12);
    EXPECT_NEAR(after.stddev[c], 1.0, 1e-9);
  }
}

TEST(Data, SamplerOrderIsPureFunctionOfSeed) {
  const Dataset ds = gen_synthetic("shapes", 50, 8, 4, 1);
  BatchSampler a(ds, 8, 3), b(ds, 8, 3);
  EXPECT_EQ(a.batches_per_epoch(), 6u);
  std::vector<double> seen;
  for (int i = 0; i < 14; ++i) {
    auto [xa, ya] = a.next();
    auto [xb, yb] = b.next();
    EXPECT_EQ(xa.value(), xb.value());
    EXPECT_EQ(ya.value(), yb.value());
    EXPECT_EQ(xa.shape(), (Shape{8, 3, 8, 8}));
  }
  EXPECT_EQ(a.epoch(), 2u);
  BatchSampler c(ds, 8, 3);
  c.seek(a.epoch(), a.position());
  EXPECT_EQ(c.next().second.value(), a.next().second.value());
}

TEST(Data, CifarZeroRecord) {
  const Dataset ds = parse_cifar10(std::vector<unsigned char>(3073, 0));
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels[0], 0u);
  EXPECT_EQ(ds.images.shape(), (Shape{1, 3, 32, 32}));
  for (double v : ds.images.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(ds.n_classes, 10u);
}

TEST(Data, CifarPlanesAndScaling) {
  std::vector<unsigned char> bytes(2 * 3073, 0);
  bytes[3073] = 9;
  bytes[3073 + 1 + 1024 + 33] = 255;  // G plane, row 1, col 1 of record 1
  const Dataset ds = parse_cifar10(bytes);
  EXPECT_EQ(ds.labels[1], 9u);
  EXPECT_EQ(ds.images[((1 * 3 + 1) * 32 + 1) * 32 + 1], 1.0);
}

TEST(Data, CifarFormatErrors) {
  try {
    parse_cifar10(std::vector<unsigned char>(3073 + 100, 0), "batch.bin");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("3073"), std::string::npos);
  }
  std::vector<unsigned char> bad(3073, 0);
  bad[0] = 10;
  EXPECT_THROW(parse_cifar10(bad), FormatError);
  EXPECT_THROW(load_cifar10_binary({"/nonexistent/data_batch_1.bin"}), IoError);
}

TEST(Data, CifarLoaderConcatenatesFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "rcnas_cifar_test";
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (int f = 0; f < 2; ++f) {
    paths.push_back((dir / ("b" + std::to_string(f) + ".bin")).string());
    std::ofstream out(paths.back(), std::ios::binary);
    std::vector<char> rec(3 * 3073, 0);
    for (int r = 0; r < 3; ++r) rec[r * 3073] = char(f * 3 + r);
    out.write(rec.data(), std::streamsize(rec.size()));
  }
  const Dataset ds = load_cifar10_binary(paths);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  std::filesystem::remove_all(dir);
}

TEST(Data, CutoutZeroesOneSquare) {
  Array images({2, 3, 16, 16}, 1.0);
  Rng rng(4);
  cutout(images, rng);
  std::size_t zeros = 0;
  for (double v : images.data()) zeros += v == 0.0;
  // Each square is at most 4x4 per channel, clipped at borders.
  EXPECT_GT(zeros, 0u);
  EXPECT_LE(zeros, 2u * 3 * 16);
}

// Trains a model on the shapes train half and reports val accuracy.
using Model = std::function<Tensor(Tape&, const Tensor&, const std::vector<Tensor>&)>;

double train_reference(const Model& model, std::vector<Tensor> params, std::size_t epochs, double lr) {
  auto [train, val] = split(gen_synthetic("shapes", 1024, 16, 4, 7), 0.5, 11);
  const Normalizer norm = Normalizer::fit(train);
  norm.apply(train);
  norm.apply(val);
  MomentumSgd opt({lr, 0.9, 3e-4});
  BatchSampler sampler(train, 32, 1);
  for (std::size_t step = 0; step < epochs * sampler.batches_per_epoch(); ++step) {
    auto [x, y] = sampler.next();
    Tape tape;
    for (Tensor& p : params) p.zero_grad();
    tape.backward(prim::cross_entropy(tape, model(tape, x, params), y));
    std::vector<std::span<double>> ps;
    std::vector<std::span<const double>> gs;
    for (Tensor& p : params) {
      ps.push_back(p.mutable_value().data());
      gs.push_back(p.grad().data());
    }
    opt.step(ps, gs);
  }
  std::size_t correct = 0;
  BatchSampler vs(val, 64, 2);
  for (std::size_t b = 0; b < vs.batches_per_epoch(); ++b) {
    auto [x, y] = vs.next();
    Tape tape;
    const Array logits = model(tape, x, params).value();
    for (std::size_t i = 0; i < y.numel(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 4; ++k)
        if (logits[i * 4 + k] > logits[i * 4 + best]) best = k;
      correct += best == std::size_t(y.value()[i]);
    }
  }
  return double(correct) / double(vs.batches_per_epoch() * 64);
}

TEST(Data, ShapesNeedConvolution) {
  Rng rng(3);
  auto init = [&](Shape s, double scale) { return Tensor(testing::random_array(std::move(s), rng, -scale, scale), true); };
  const Model conv = [](Tape& tape, const Tensor& x, const std::vector<Tensor>& p) {
    Tensor h = prim::relu(tape, prim::conv2d(tape, x, p[0], {1, 1, 1, 1}));
    h = prim::max_pool2d(tape, h, {3, 2, 1});
    h = prim::relu(tape, prim::conv2d(tape, h, p[1], {1, 1, 1, 1}));
    return prim::linear(tape, prim::global_avg_pool(tape, h), p[2], p[3]);
  };
  const double conv_acc =
      train_reference(conv, {init({8, 3, 3, 3}, 0.3), init({16, 8, 3, 3}, 0.2), init({4, 16}, 0.25), init({4}, 0.0)}, 20, 0.05);
  const Model linear = [](Tape& tape, const Tensor& x, const std::vector<Tensor>& p) {
    const Tensor flat(Array({x.shape()[0], 768}, std::vector<double>(x.data().begin(), x.data().end())));
    return prim::linear(tape, flat, p[0], p[1]);
  };
  const double linear_acc = train_reference(linear, {init({4, 768}, 0.01), init({4}, 0.0)}, 20, 0.01);
  RecordProperty("conv_accuracy", std::to_string(conv_acc));
  RecordProperty("linear_accuracy", std::to_string(linear_acc));
  EXPECT_GE(conv_acc, 0.80);
  EXPECT_LT(linear_acc, 0.60);
}

}  // namespace
}  // namespace rcnas
