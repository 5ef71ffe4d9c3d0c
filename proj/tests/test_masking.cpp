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
#include <limits>
#include <vector>

#include "szo/masking.hpp"
#include "szo/noise.hpp"
#include "test_util.hpp"

namespace szo {
namespace {

using testing::single_layer;
using testing::temp_dir;

std::vector<std::uint8_t> bits(std::initializer_list<int> xs) {
  return std::vector<std::uint8_t>(xs.begin(), xs.end());
}

TEST(Calibrate, MedianOfMagnitudes) {
  const auto p = single_layer<double>({0.1, 0.2, 0.4, 0.9});
  const auto t = calibrate_thresholds(p, 0.5, MaskPolicy::magnitude(0.5));
  EXPECT_DOUBLE_EQ(t.at(0), 0.2);
  EXPECT_EQ(get_mask(p.layer(0), t.at(0)), bits({1, 1, 0, 0}));
}

TEST(Calibrate, SignedValuesUseMagnitudes) {
  const auto p = single_layer<double>({0.5, -0.2, 1.3, -0.8});
  const auto t = calibrate_thresholds(p, 0.5, MaskPolicy::magnitude(0.5));
  EXPECT_DOUBLE_EQ(t.at(0), 0.5);
  EXPECT_EQ(get_mask(p.layer(0), t.at(0)), bits({1, 1, 0, 0}));
}

TEST(Calibrate, ZeroSparsitySelectsAll) {
  const auto p = single_layer<double>({0.5, -0.2, 1.3, -0.8});
  const auto t = calibrate_thresholds(p, 0.0, MaskPolicy::magnitude(0.0));
  EXPECT_DOUBLE_EQ(t.at(0), 1.3);
  EXPECT_EQ(get_mask(p.layer(0), t.at(0)), bits({1, 1, 1, 1}));
}

TEST(Calibrate, SelectLargeUsesUpperTail) {
  const auto p = single_layer<double>({0.1, 0.2, 0.4, 0.9, -0.3, 0.05, 0.7, 0.6});
  auto policy = MaskPolicy::magnitude(0.75);
  policy.select_large = true;
  const auto t = calibrate_thresholds(p, 0.75, policy);
  const auto m = get_mask(p.layer(0), t.at(0), true);
  EXPECT_EQ(m, bits({0, 0, 0, 1, 0, 0, 1, 0}));
}

TEST(Calibrate, BiasAndNormLayersStayDense) {
  ParameterSet<double> p;
  p.add_layer("fc.weight", {4}, {1, 2, 3, 4});
  p.add_layer("fc.bias", {2}, {5, 6});
  p.add_layer("ln.norm_gain", {2}, {1, 1});
  const auto t = calibrate_thresholds(p, 0.5, MaskPolicy::magnitude(0.5));
  EXPECT_TRUE(t.per_layer[0].maskable);
  EXPECT_FALSE(t.per_layer[1].maskable);
  EXPECT_FALSE(t.per_layer[2].maskable);
  EXPECT_TRUE(std::isinf(t.at(1)));
  const Masker<double> m(p, MaskPolicy::magnitude(0.5));
  EXPECT_EQ(m.materialize(p, 0).d_hat(), 2u + 2u + 2u);
}

TEST(Calibrate, RejectsBadSparsity) {
  const auto p = single_layer<double>({1.0});
  EXPECT_THROW(calibrate_thresholds(p, 1.0, MaskPolicy::magnitude(0.5)), DomainError);
  EXPECT_THROW(calibrate_thresholds(p, -0.1, MaskPolicy::magnitude(0.5)), DomainError);
}

TEST(GetMask, Examples) {
  const auto p = single_layer<double>({0.5, -0.2, 1.3});
  EXPECT_EQ(get_mask(p.layer(0), 0.6), bits({1, 1, 0}));
  const auto z = single_layer<double>({0.0, 0.3, -0.0, -1.0});
  EXPECT_EQ(get_mask(z.layer(0), 0.0), bits({1, 0, 1, 0}));
  const auto tie = single_layer<double>({0.6});
  EXPECT_EQ(get_mask(tie.layer(0), 0.6), bits({1}));
  EXPECT_THROW(get_mask(tie.layer(0), -1.0), DomainError);
}

TEST(GetMask, MonotoneInThreshold) {
  auto s = derive_substream(3, 0);
  const auto v = s.gaussian_fill(500);
  const auto p = single_layer<double>(v);
  for (double h1 : {0.0, 0.1, 0.5, 1.0}) {
    for (double h2 : {h1, h1 + 0.05, h1 + 1.0}) {
      const auto a = get_mask(p.layer(0), h1);
      const auto b = get_mask(p.layer(0), h2);
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LE(a[i], b[i]);
      EXPECT_EQ(a, get_mask(p.layer(0), h1));
    }
  }
}

TEST(RandomMask, Examples) {
  NoiseStream s(123);
  const auto all = random_mask(100, 0.0, s);
  EXPECT_EQ(std::count(all.begin(), all.end(), 1), 100);
  EXPECT_EQ(random_mask(1000, 0.5, s), random_mask(1000, 0.5, s));
  EXPECT_THROW(random_mask(10, 1.0, s), DomainError);
}

TEST(RandomMask, BinomialBound) {
  const std::size_t n = 1'000'000;
  const auto m = random_mask(n, 0.75, NoiseStream(77));
  const double ones = static_cast<double>(std::count(m.begin(), m.end(), 1));
  EXPECT_LE(std::abs(ones - 250000.0), 3.0 * std::sqrt(n * 0.25 * 0.75));
}

TEST(CountSelected, Examples) {
  SparseMask m;
  m.per_layer = {bits({1, 1, 0, 0})};
  EXPECT_EQ(count_selected(m), 2u);
  m.per_layer = {bits({0, 0, 0})};
  EXPECT_EQ(count_selected(m), 0u);
  m.per_layer = {std::vector<std::uint8_t>(17, 1), std::vector<std::uint8_t>(3, 1)};
  EXPECT_EQ(count_selected(m), 20u);
}

TEST(Masker, CalibrationFractionPerLayer) {
  ParameterSet<double> p;
  for (std::size_t l = 0; l < 3; ++l) {
    p.add_layer("w" + std::to_string(l), {4 + 37 * l},
                derive_substream(5, l).gaussian_fill(4 + 37 * l));
  }
  for (double r : {0.25, 0.5, 0.75, 0.9}) {
    const Masker<double> m(p, MaskPolicy::magnitude(r));
    const auto mask = m.materialize(p, 0);
    for (std::size_t l = 0; l < 3; ++l) {
      const double n = static_cast<double>(p.layer(l).size());
      const double frac =
          static_cast<double>(std::count(mask.per_layer[l].begin(), mask.per_layer[l].end(), 1)) / n;
      EXPECT_GE(frac, 1.0 - r - 2.0 / n) << "r=" << r << " layer " << l;
      EXPECT_LE(frac, 1.0 - r + 2.0 / n) << "r=" << r << " layer " << l;
    }
  }
}

TEST(Masker, DenseSelectsEverything) {
  const auto p = single_layer<double>({0.1, 5.0, -3.0});
  const Masker<double> m(p, MaskPolicy::dense());
  EXPECT_EQ(m.materialize(p, 9).d_hat(), 3u);
  EXPECT_EQ(m.policy().effective_sparsity(), 0.0);
}

TEST(Masker, DynamicFollowsValuesConstantDoesNot) {
  auto p = single_layer<double>({0.1, 0.2, 0.4, 0.9});
  const Masker<double> dyn(p, MaskPolicy::magnitude(0.5));
  const Masker<double> con(p, {MaskKind::kMagnitudeConstant, 0.5});
  p.layer(0)[0] = 5.0;
  p.layer(0)[3] = 0.0;
  EXPECT_EQ(dyn.materialize(p, 0).per_layer[0], bits({0, 1, 0, 1}));
  EXPECT_EQ(con.materialize(p, 0).per_layer[0], bits({1, 1, 0, 0}));
}

TEST(Masker, RandomResamplesPerStepAndReplays) {
  ParameterSet<double> p;
  p.add_layer("w", {4000});
  const Masker<double> m(p, MaskPolicy::random(0.75));
  const auto a = m.materialize(p, step_seed_for(1, 0));
  const auto b = m.materialize(p, step_seed_for(1, 1));
  EXPECT_EQ(a.per_layer, m.materialize(p, step_seed_for(1, 0)).per_layer);
  EXPECT_NE(a.per_layer, b.per_layer);
  EXPECT_NEAR(static_cast<double>(a.d_hat()) / 4000.0, 0.25, 0.03);
}

TEST(Masker, FixMaskOverridesPolicy) {
  const auto p = single_layer<double>({1, 2, 3, 4});
  Masker<double> m(p, MaskPolicy::random(0.5));
  SparseMask fixed;
  fixed.per_layer = {bits({0, 1, 1, 0})};
  m.fix_mask(fixed);
  for (std::uint64_t s : {1u, 2u, 3u}) EXPECT_EQ(m.materialize(p, s).per_layer, fixed.per_layer);
}

TEST(Masker, RecalibrateMovesThresholds) {
  auto p = single_layer<double>({0.1, 0.2, 0.4, 0.9});
  Masker<double> m(p, MaskPolicy::magnitude(0.5));
  for (auto& v : p.layer(0).values()) v *= 10.0;
  m.recalibrate(p);
  EXPECT_DOUBLE_EQ(m.thresholds().at(0), 2.0);
}

TEST(Thresholds, FileRoundTrip) {
  ParameterSet<double> p;
  p.add_layer("fc.weight", {5}, {0.3, -1.0 / 3.0, 2.0, 0.7, 1e-9});
  p.add_layer("fc.bias", {2}, {1, 2});
  const auto t = calibrate_thresholds(p, 0.6, MaskPolicy::magnitude(0.6));
  const auto path = temp_dir("thr") / "t.txt";
  write_thresholds(t, path);
  const auto back = read_thresholds(path);
  ASSERT_EQ(back.per_layer.size(), 2u);
  EXPECT_EQ(back.sparsity, 0.6);
  EXPECT_EQ(back.per_layer[0].name, "fc.weight");
  EXPECT_EQ(back.per_layer[0].h, t.per_layer[0].h);
  EXPECT_TRUE(std::isinf(back.per_layer[1].h));

  Masker<double> m(p, MaskPolicy::magnitude(0.1));
  m.set_thresholds(back, p);
  EXPECT_EQ(m.thresholds().at(0), t.at(0));
  EXPECT_FALSE(m.thresholds().per_layer[1].maskable);
}

TEST(Thresholds, NameOrCountMismatch) {
  const auto p = single_layer<double>({1, 2}, "a");
  Masker<double> m(p, MaskPolicy::magnitude(0.5));
  ThresholdVector t;
  t.per_layer.push_back({0, "b", 1.0, true});
  EXPECT_THROW(m.set_thresholds(t, p), StructuralError);
  t.per_layer.push_back({1, "c", 1.0, true});
  EXPECT_THROW(m.set_thresholds(t, p), StructuralError);
}

TEST(Thresholds, MalformedFile) {
  const auto path = temp_dir("thr") / "bad.txt";
  std::ofstream(path) << "w = banana\n";
  EXPECT_THROW(read_thresholds(path), IoError);
  std::ofstream(path) << "no separator\n";
  EXPECT_THROW(read_thresholds(path), IoError);
}

TEST(MaskPolicy, ParseAndValidate) {
  EXPECT_EQ(parse_mask_kind("magnitude-dynamic"), MaskKind::kMagnitudeDynamic);
  EXPECT_THROW(parse_mask_kind("bogus"), ConfigError);
  EXPECT_THROW((MaskPolicy{MaskKind::kRandom, 1.5}).validate(), DomainError);
}

}  // namespace
}  // namespace szo
