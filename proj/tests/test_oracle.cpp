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
#include <memory>
#include <vector>

#include "szo/models/logistic.hpp"
#include "szo/models/mlp.hpp"
#include "szo/models/quadratic.hpp"
#include "szo/oracle.hpp"
#include "szo/zo.hpp"
#include "test_util.hpp"

namespace szo {
namespace {

using testing::single_layer;

// Wraps a task and negates its loss.
template <Real T>
class NegatedTask final : public Task<T> {
 public:
  explicit NegatedTask(const Task<T>& inner) : inner_(inner) {}
  std::string name() const override { return "negated-" + inner_.name(); }
  std::string describe() const override { return inner_.describe(); }
  const ParameterSet<T>& initial() const override { return inner_.initial(); }
  std::size_t split_size(Split s) const override { return inner_.split_size(s); }
  double loss(LayerSource<T>& src, const Batch& b) const override {
    return -inner_.loss(src, b);
  }

 private:
  const Task<T>& inner_;
};

TEST(FdGradient, QuadraticIsExact) {
  const QuadraticTask<double> task(1, 1.0, {3.0});
  const auto g = fd_gradient(bind_loss<double>(task, task.full(Split::kTrain)), task.initial());
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g[0], 3.0, 1e-9);
  for (double delta : {1e-2, 1e-4, 1e-6}) {
    const auto h = fd_gradient(bind_loss<double>(task, task.full(Split::kTrain)),
                               task.initial(), FdSpec{delta});
    EXPECT_NEAR(h[0], 3.0, 1e-8) << delta;
  }
}

TEST(FdGradient, ConstantLossAndGuards) {
  const auto p = single_layer<double>({1.0, 2.0, 3.0});
  const LossFn<double> c = [](const ParameterSet<double>&) { return 2.0; };
  EXPECT_EQ(fd_gradient(c, p), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_THROW(fd_gradient(c, p, FdSpec{0.0}), DomainError);
  ParameterSet<double> big;
  big.add_layer("w", {kFdCostGuard + 1});
  EXPECT_THROW(fd_gradient(c, big), DomainError);
}

LossFn<double> quad_loss(const QuadraticTask<double>& t) {
  return bind_loss<double>(t, t.full(Split::kTrain));
}

TEST(McMean, DenseExpectationIsTheta) {
  const QuadraticTask<double> task(2, 1.0, {1.0, 2.0});
  const Masker<double> m(task.initial(), MaskPolicy::dense());
  const auto mc = mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 100000, 1);
  EXPECT_EQ(mc.samples, 100000u);
  EXPECT_LT(std::abs(mc.mean[0] - 1.0), 4.0 * mc.standard_error[0]);
  EXPECT_LT(std::abs(mc.mean[1] - 2.0), 4.0 * mc.standard_error[1]);
}

TEST(McMean, MaskedCoordinateIsExactlyZero) {
  const QuadraticTask<double> task(2, 1.0, {1.0, 2.0});
  Masker<double> m(task.initial(), MaskPolicy::random(0.5));
  SparseMask fixed;
  fixed.per_layer = {{1, 0}};
  m.fix_mask(fixed);
  const auto mc = mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 100000, 2);
  EXPECT_LT(std::abs(mc.mean[0] - 1.0), 4.0 * mc.standard_error[0]);
  EXPECT_EQ(mc.mean[1], 0.0);
  EXPECT_EQ(mc.standard_error[1], 0.0);
}

TEST(McMean, SixteenDimsWithinFourStandardErrors) {
  std::vector<double> theta(16);
  for (std::size_t i = 0; i < 16; ++i) theta[i] = 0.25 * static_cast<double>(i) - 1.5;
  const QuadraticTask<double> task(16, 1.0, theta);
  const Masker<double> m(task.initial(), MaskPolicy::magnitude(0.5));
  const auto mask = m.materialize(task.initial(), 0);
  const auto mc = mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 200000, 3);
  for (std::size_t i = 0; i < 16; ++i) {
    const double want = mask.per_layer[0][i] ? theta[i] : 0.0;
    EXPECT_LE(std::abs(mc.mean[i] - want), 4.0 * mc.standard_error[i] + 1e-300) << i;
  }
}

TEST(McMean, StandardErrorShrinksAsInverseRoot) {
  const QuadraticTask<double> task(4, 1.0, {1.0, -1.0, 0.5, 2.0});
  const Masker<double> m(task.initial(), MaskPolicy::dense());
  const auto a = mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 20000, 4);
  const auto b = mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 40000, 5);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(a.standard_error[i] / b.standard_error[i], std::sqrt(2.0), 0.1) << i;
  }
}

TEST(McMean, RejectsTinySampleCounts) {
  const QuadraticTask<double> task(2, 1.0);
  const Masker<double> m(task.initial(), MaskPolicy::dense());
  EXPECT_THROW(mc_zo_mean<double>(quad_loss(task), task.initial(), 1e-3, m, 10, 0), DomainError);
}

TEST(Reference, MatchesStepperForEveryPolicy) {
  const QuadraticTask<double> task(8, 3.0);
  const auto mlp = mlp_task<float>({6, 10, 3}, Activation::kTanh, 32, 8, 4);
  for (const auto& policy : {MaskPolicy::dense(), MaskPolicy::magnitude(0.5),
                             MaskPolicy::random(0.5),
                             MaskPolicy{MaskKind::kMagnitudeConstant, 0.5}}) {
    ZoConfig cfg;
    cfg.policy = policy;
    cfg.lr = 1e-2;
    cfg.steps = 20;
    cfg.base_seed = 12;
    {
      ZoStepper<double> st(cfg, task.initial());
      auto p = task.initial();
      const auto b = task.full(Split::kTrain);
      for (std::size_t t = 0; t < cfg.steps; ++t) {
        const auto ref = reference_spsa_step(task, b, p, cfg, st.masker(), t);
        const auto rec = st.step(task, p, b, t);
        ASSERT_TRUE(rec.same_numerics(ref.record)) << to_string(policy.kind) << " t=" << t;
        ASSERT_TRUE(bitwise_equal(p, ref.params)) << to_string(policy.kind) << " t=" << t;
      }
    }
    {
      ZoStepper<float> st(cfg, mlp.initial());
      auto p = mlp.initial();
      for (std::size_t t = 0; t < cfg.steps; ++t) {
        const auto b = sample_minibatch(32, 8, 1, t);
        const auto ref = reference_spsa_step(mlp, b, p, cfg, st.masker(), t);
        const auto rec = st.step(mlp, p, b, t);
        ASSERT_TRUE(rec.same_numerics(ref.record)) << to_string(policy.kind) << " t=" << t;
        ASSERT_TRUE(bitwise_equal(p, ref.params)) << to_string(policy.kind) << " t=" << t;
      }
    }
  }
}

TEST(Reference, DenseEqualsZeroSparsity) {
  const QuadraticTask<double> task(8, 2.0);
  ZoConfig cfg;
  cfg.lr = 0.05;
  const auto b = task.full(Split::kTrain);
  const Masker<double> dense(task.initial(), MaskPolicy::dense());
  const Masker<double> zero(task.initial(), MaskPolicy::magnitude(0.0));
  for (std::size_t t = 0; t < 5; ++t) {
    const auto a = reference_spsa_step(task, b, task.initial(), cfg, dense, t);
    const auto c = reference_spsa_step(task, b, task.initial(), cfg, zero, t);
    EXPECT_TRUE(a.record.same_numerics(c.record));
    EXPECT_TRUE(bitwise_equal(a.params, c.params));
  }
}

TEST(Reference, NegatedLossFlipsProjectedGradient) {
  const QuadraticTask<double> task(8, 2.0);
  const NegatedTask<double> neg(task);
  ZoConfig cfg;
  const Masker<double> m(task.initial(), MaskPolicy::dense());
  const auto b = task.full(Split::kTrain);
  for (std::size_t t = 0; t < 5; ++t) {
    const auto a = reference_spsa_step<double>(task, b, task.initial(), cfg, m, t);
    const auto c = reference_spsa_step<double>(neg, b, task.initial(), cfg, m, t);
    EXPECT_EQ(a.record.proj_grad, -c.record.proj_grad);
  }
}

TEST(Baseline, QuadraticMonotoneBelowTwoOverL) {
  const auto task = quadratic_task<double>(16, 10.0);
  const auto r = first_order_baseline<double>(task, task.initial(), 1.9 / 10.0, 200);
  ASSERT_EQ(r.losses.size(), 201u);
  for (std::size_t k = 1; k < r.losses.size(); ++k) EXPECT_LE(r.losses[k], r.losses[k - 1]);
}

TEST(Baseline, DivergesAboveTwoOverL) {
  const auto task = quadratic_task<double>(16, 10.0);
  EXPECT_THROW(first_order_baseline<double>(task, task.initial(), 2.1 / 10.0, 500),
               NumericError);
  EXPECT_THROW(first_order_baseline<double>(task, task.initial(), 0.0, 5), DomainError);
}

}  // namespace
}  // namespace szo
