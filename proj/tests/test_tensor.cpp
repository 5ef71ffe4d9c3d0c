// Copyright 2026 The sparse-zo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <vector>

#include "szo/checkpoint.hpp"
#include "szo/tensor.hpp"
#include "test_util.hpp"

namespace szo {
namespace {

using testing::single_layer;
using testing::temp_dir;

ParameterSet<double> two_layers() {
  ParameterSet<double> p;
  p.add_layer("a", {2}, {1.0, 2.0});
  p.add_layer("b", {1}, {3.0});
  return p;
}

TEST(LayerTensor, RejectsShapeValueMismatch) {
  EXPECT_THROW(LayerTensor<float>(0, "w", {2, 3}, std::vector<float>(5)), StructuralError);
  EXPECT_THROW(LayerTensor<float>(0, "w", {}, std::vector<float>{}), StructuralError);
  EXPECT_THROW(LayerTensor<float>(0, "w", {0}, std::vector<float>{}), StructuralError);
  EXPECT_NO_THROW(LayerTensor<float>(0, "w", {2, 3}, std::vector<float>(6)));
}

TEST(ParameterSet, DenseIdsAndTotals) {
  ParameterSet<float> p;
  p.add_layer("x", {3, 4});
  p.add_layer("y", {5});
  p.add_layer("z", {2, 2, 2});
  ASSERT_EQ(p.num_layers(), 3u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(p.layer(l).layer_id(), l);
  EXPECT_EQ(p.total_params(), 12u + 5u + 8u);
  EXPECT_EQ(p.max_layer_size(), 12u);
  EXPECT_EQ(p.find("y"), 1u);
}

TEST(FlatView, OrderIsLayerThenElement) {
  const auto p = two_layers();
  std::vector<FlatEntry> seen(flat_view(p).begin(), flat_view(p).end());
  const std::vector<FlatEntry> want{{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}};
  EXPECT_EQ(seen, want);
}

TEST(FlatView, EmptyAndSingleton) {
  ParameterSet<double> empty;
  EXPECT_EQ(flat_view(empty).begin(), flat_view(empty).end());

  const auto one = single_layer<double>({0.5});
  std::vector<FlatEntry> seen(flat_view(one).begin(), flat_view(one).end());
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], (FlatEntry{0, 0, 0.5}));
}

TEST(FlatView, StableAcrossCallsAndCheckpoint) {
  ParameterSet<float> p;
  p.add_layer("a", {2, 3}, {1, 2, 3, 4, 5, 6});
  p.add_layer("b", {4}, {7, 8, 9, 10});
  const auto path = temp_dir("flat") / "p.ckpt";
  save_checkpoint(p, path);
  const auto q = load_checkpoint<float>(path);
  const std::vector<FlatEntry> a(flat_view(p).begin(), flat_view(p).end());
  const std::vector<FlatEntry> b(flat_view(p).begin(), flat_view(p).end());
  const std::vector<FlatEntry> c(flat_view(q).begin(), flat_view(q).end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Axpy, Arithmetic) {
  auto p = single_layer<double>({1.0, 2.0});
  axpy_into(p, 0.001, std::vector<double>{1.0, -1.0});
  EXPECT_DOUBLE_EQ(p.layer(0)[0], 1.001);
  EXPECT_DOUBLE_EQ(p.layer(0)[1], 1.999);
}

TEST(Axpy, ZeroScaleIsBitExact) {
  auto p = single_layer<double>({1.0 / 3.0, -0.0, 7e-300});
  const auto before = p;
  axpy_into(p, 0.0, std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_TRUE(bitwise_equal(p, before));
}

TEST(Axpy, PlusMinusTwoPlusCycleRestores) {
  auto p = single_layer<double>({1.0, 2.0});
  const std::vector<double> z{1.0, -1.0};
  const double eps = 1e-3;
  axpy_into(p, eps, z);
  axpy_into(p, -2.0 * eps, z);
  axpy_into(p, eps, z);
  EXPECT_NEAR(p.layer(0)[0], 1.0, 1e-12);
  EXPECT_NEAR(p.layer(0)[1], 2.0, 1e-12);
}

TEST(Axpy, SizeMismatchAndNonFinite) {
  auto p = single_layer<double>({1.0, 2.0});
  EXPECT_THROW(axpy_into(p, 1.0, std::vector<double>{1.0}), StructuralError);
  const auto before = p;
  const double big = std::numeric_limits<double>::max();
  EXPECT_THROW(axpy_into(p, big, std::vector<double>{0.0, big}), NumericError);
  EXPECT_TRUE(bitwise_equal(p, before));
}

TEST(BitwiseEqual, DistinguishesSignedZero) {
  const auto a = single_layer<double>({0.0});
  const auto b = single_layer<double>({-0.0});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(bitwise_equal(a, b));
  EXPECT_FALSE(bitwise_equal(a, single_layer<double>({0.0}, "other")));
}

TEST(Checkpoint, RoundTripBitExact) {
  ParameterSet<double> p;
  p.add_layer("w", {2, 2}, {1.0 / 3.0, -0.0, 1e-310, -2.5});
  p.add_layer("b", {3}, {std::nextafter(1.0, 2.0), 0.1, 1e300});
  const auto path = temp_dir("ckpt") / "p.ckpt";
  save_checkpoint(p, path);
  EXPECT_TRUE(bitwise_equal(load_checkpoint<double>(path), p));

  ParameterSet<float> f;
  f.add_layer("w", {3}, {0.1f, -7.25f, 3e-40f});
  save_checkpoint(f, path);
  EXPECT_TRUE(bitwise_equal(load_checkpoint<float>(path), f));
}

TEST(Checkpoint, WrongElementTypeIsRejected) {
  const auto path = temp_dir("ckpt") / "p.ckpt";
  save_checkpoint(single_layer<float>({1.0f}), path);
  EXPECT_THROW(load_checkpoint<double>(path), IoError);
}

TEST(Checkpoint, TruncatedFileIsAnError) {
  const auto dir = temp_dir("ckpt");
  ParameterSet<double> p;
  p.add_layer("w", {4}, {1, 2, 3, 4});
  save_checkpoint(p, dir / "full.ckpt");
  const auto size = std::filesystem::file_size(dir / "full.ckpt");
  for (std::uintmax_t cut : {std::uintmax_t{4}, size / 2, size - 1}) {
    std::filesystem::copy_file(dir / "full.ckpt", dir / "cut.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir / "cut.ckpt", cut);
    EXPECT_THROW(load_checkpoint<double>(dir / "cut.ckpt"), IoError) << "cut at " << cut;
  }
}

TEST(Checkpoint, ManifestMismatchNamesTheLayer) {
  const auto dir = temp_dir("ckpt");
  ParameterSet<double> p;
  p.add_layer("encoder.weight", {2}, {1, 2});
  save_checkpoint(p, dir / "p.ckpt");
  // Grow the stored shape without touching the payload.
  std::fstream f(dir / "p.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto at = bytes.find("encoder.weight");
  ASSERT_NE(at, std::string::npos);
  std::size_t pos = at + std::string("encoder.weight").size();
  // After the name: rank (4 bytes), then one 8-byte extent.
  f.seekp(static_cast<std::streamoff>(pos + 4));
  const char three[8] = {3, 0, 0, 0, 0, 0, 0, 0};
  f.write(three, 8);
  f.close();
  try {
    load_checkpoint<double>(dir / "p.ckpt");
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint<double>(temp_dir("ckpt") / "nope.ckpt"), IoError);
}

}  // namespace
}  // namespace szo
