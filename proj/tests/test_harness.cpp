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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "szo/harness.hpp"
#include "test_util.hpp"

namespace szo {
namespace {

using testing::temp_dir;

std::string slurp_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(Config, DefaultsFollowTheSearchGrid) {
  const ExperimentConfig c;
  EXPECT_EQ(c.sparsity, 0.75);
  EXPECT_EQ(c.epsilon, 1e-3);
  EXPECT_EQ(c.lr, 1e-6);
  EXPECT_EQ(c.steps, 20000u);
  EXPECT_EQ(c.eval_every, 100u);
  EXPECT_EQ(c.batch, 16u);
  EXPECT_EQ(c.label(), "smezo-r0.75");
}

TEST(Config, PrecedenceDefaultsFileOverrides) {
  const auto path = temp_dir("cfg") / "run.cfg";
  std::ofstream(path) << "# comment\nlr = 0.01\nsteps = 30  # trailing\noptimizer = mezo\n";
  const auto c = load_config(path, {{"steps", "40"}});
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.steps, 40u);
  EXPECT_EQ(c.optimizer, Optimizer::kMezo);
  EXPECT_EQ(c.epsilon, 1e-3);
  EXPECT_EQ(c.label(), "mezo");
}

TEST(Config, UnknownKeyIsAnError) {
  ExperimentConfig c;
  EXPECT_THROW(apply_entries(c, {{"learning_rate", "1"}}), ConfigError);
  EXPECT_THROW(apply_entries(c, {{"steps", "ten"}}), ConfigError);
  EXPECT_THROW(parse_config_text("just a line\n"), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {{"task", "imagenet"}}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {{"dtype", "f16"}}), ConfigError);
  EXPECT_THROW(load_config(temp_dir("cfg") / "missing.cfg", {}), IoError);
}

TEST(Config, EchoRoundTrips) {
  ExperimentConfig c;
  apply_entries(c, {{"task", "mlp"}, {"task.widths", "4,8,3"}, {"optimizer", "rmezo"},
                    {"sparsity", "0.9"}, {"seeds", "3,1,2"}, {"mode", "inplace"},
                    {"lr_schedule", "theory"}, {"mask.exclude", "bias"},
                    {"thresholds", "t.txt"}, {"dtype", "f64"}});
  const std::string echo = echo_config(c);
  ExperimentConfig d;
  apply_entries(d, parse_config_text(echo));
  EXPECT_EQ(echo_config(d), echo);
  EXPECT_EQ(d.label(), "rmezo-r0.9");
  EXPECT_EQ(d.seeds, (std::vector<std::uint64_t>{3, 1, 2}));
}

TEST(Config, Labels) {
  ExperimentConfig c;
  c.mask_variant = "constant";
  EXPECT_EQ(c.label(), "smezo-r0.75-const");
  c.mask_variant = "dynamic";
  c.select_large = true;
  EXPECT_EQ(c.label(), "smezo-r0.75-large");
  c.optimizer = Optimizer::kFoBaseline;
  EXPECT_EQ(c.label(), "fo-baseline");
  EXPECT_EQ(c.policy().kind, MaskKind::kDense);
}

ExperimentConfig small_mlp() {
  ExperimentConfig c;
  apply_entries(c, {{"task", "mlp"}, {"task.widths", "8,16,16,4"}, {"task.n_train", "128"},
                    {"task.n_eval", "64"}, {"lr", "0.001"}, {"steps", "40"},
                    {"eval_every", "10"}, {"seeds", "5,6"}});
  return c;
}

TEST(Run, ZeroStepsYieldsOnlyTheInitialRow) {
  auto c = small_mlp();
  c.steps = 0;
  const auto task = make_task<float>(c.task);
  const auto m = run_single<float>(c, *task, 0, temp_dir("run"));
  ASSERT_EQ(m.rows.size(), 1u);
  EXPECT_EQ(m.rows[0].step, 0u);
  EXPECT_TRUE(m.records.empty());
  EXPECT_FALSE(m.failed);
}

TEST(Run, EvaluationScheduleAndCsv) {
  auto c = small_mlp();
  c.steps = 25;
  const auto task = make_task<float>(c.task);
  const auto dir = temp_dir("run");
  const auto m = run_single<float>(c, *task, 5, dir);
  std::vector<std::size_t> steps;
  for (const auto& r : m.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 10, 20, 25}));
  EXPECT_EQ(m.records.size(), 25u);
  ASSERT_TRUE(m.peak_aux_bytes.has_value());

  std::ifstream f(dir / "metrics.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, kMetricsHeader);
  std::ifstream s(dir / "steps.csv");
  std::getline(s, header);
  EXPECT_EQ(header, kStepsHeader);
  std::size_t lines = 0;
  for (std::string l; std::getline(s, l);) ++lines;
  EXPECT_EQ(lines, 25u);
}

TEST(Run, ExperimentIsByteDeterministic) {
  auto c = small_mlp();
  std::vector<std::string> a, b;
  for (auto* sink : {&a, &b}) {
    c.out = temp_dir(sink == &a ? "det_a" : "det_b");
    run_experiment(c);
    for (std::uint64_t s : c.seeds) {
      sink->push_back(slurp_file(seed_dir(c.out, s) / "metrics.csv"));
      sink->push_back(slurp_file(seed_dir(c.out, s) / "steps.csv"));
    }
    sink->push_back(slurp_file(c.out / "config.echo"));
  }
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0].empty(), false);
  // config.echo differs only through `out`.
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]) << i;
  EXPECT_NE(a[0], a[2]);  // seeds differ
}

TEST(Run, FirstOrderBaselineOnLogistic) {
  ExperimentConfig c;
  apply_entries(c, {{"task", "logistic"}, {"task.dim", "8"}, {"task.n_train", "200"},
                    {"task.n_eval", "200"}, {"optimizer", "fo-baseline"},
                    {"lr_schedule", "theory"}, {"steps", "200"}, {"eval_every", "50"},
                    {"dtype", "f64"}});
  const auto task = make_task<double>(c.task);
  const auto m = run_single<double>(c, *task, 0);
  EXPECT_FALSE(m.failed);
  EXPECT_FALSE(m.peak_aux_bytes.has_value());
  EXPECT_LT(m.rows.back().train_loss, m.rows.front().train_loss);
}

// Returns NaN for every perturbed evaluation.
class PoisonedTask final : public Task<double> {
 public:
  PoisonedTask() { p_.add_layer("w", {4}, {1, 2, 3, 4}); }
  std::string name() const override { return "poisoned"; }
  std::string describe() const override { return "poisoned"; }
  const ParameterSet<double>& initial() const override { return p_; }
  std::size_t split_size(Split) const override { return 1; }
  double loss(LayerSource<double>& src, const Batch&) const override {
    const auto w = src.fetch(0);
    return w[0] == 1.0 ? 0.0 : NAN;
  }

 private:
  ParameterSet<double> p_;
};

TEST(Run, NonFiniteLossesAbortStepsThenFail) {
  ExperimentConfig c;
  c.optimizer = Optimizer::kMezo;
  c.steps = 100;
  c.eval_every = 100;
  const PoisonedTask task;
  const auto m = run_single<double>(c, task, 0);
  EXPECT_TRUE(m.failed);
  EXPECT_EQ(m.aborted_steps, 6u);
  EXPECT_TRUE(m.records.empty());
  EXPECT_NE(m.failure.find("aborted"), std::string::npos);
}

RunMetrics synthetic(const std::string& label, std::uint64_t seed,
                     std::vector<std::pair<std::size_t, double>> curve, double clock = 1.0) {
  RunMetrics m;
  m.label = label;
  m.seed = seed;
  m.wallclock_s = clock;
  for (auto [s, v] : curve) m.rows.push_back({s, v, v, std::nullopt, std::nullopt});
  return m;
}

TEST(Compare, SpeedupRatio) {
  const std::vector<RunMetrics> runs{
      synthetic("mezo", 0, {{0, 1.0}, {17500, 0.1}}),
      synthetic("smezo-r0.75", 0, {{0, 1.0}, {5000, 0.1}}),
  };
  CompareOptions o;
  o.target = 0.2;
  const auto rep = compare_runs(runs, o);
  EXPECT_EQ(rep.methods.front().label, "smezo-r0.75");
  EXPECT_DOUBLE_EQ(*rep.speedup("smezo-r0.75", "mezo"), 3.5);
}

TEST(Compare, IdenticalRunsGiveUnitSpeedup) {
  const std::vector<RunMetrics> runs{
      synthetic("a", 0, {{0, 1.0}, {100, 0.1}}),
      synthetic("b", 0, {{0, 1.0}, {100, 0.1}}),
  };
  CompareOptions o;
  o.target = 0.5;
  const auto rep = compare_runs(runs, o);
  EXPECT_DOUBLE_EQ(*rep.speedup("a", "b"), 1.0);
}

TEST(Compare, TargetNeverReached) {
  const std::vector<RunMetrics> runs{
      synthetic("a", 0, {{0, 1.0}, {100, 0.9}}),
      synthetic("b", 0, {{0, 1.0}, {100, 0.1}}),
  };
  CompareOptions o;
  o.target = 0.5;
  const auto rep = compare_runs(runs, o);
  EXPECT_FALSE(rep.method("a").median_steps.has_value());
  EXPECT_FALSE(rep.speedup("b", "a").has_value());
  EXPECT_NE(rep.text().find("not reached"), std::string::npos);
}

TEST(Compare, DefaultTargetFromBaseline) {
  const std::vector<RunMetrics> runs{
      synthetic("fo-baseline", 0, {{0, 1.0}, {10, 0.2}}),
      synthetic("fo-baseline", 1, {{0, 1.0}, {10, 0.4}}),
      synthetic("fo-baseline", 2, {{0, 1.0}, {10, 0.3}}),
      synthetic("mezo", 0, {{0, 1.0}, {50, 0.32}}),
  };
  const auto rep = compare_runs(runs);
  EXPECT_DOUBLE_EQ(rep.target, 1.1 * 0.3);
  EXPECT_EQ(*rep.method("mezo").median_steps, 50.0);
  EXPECT_THROW(compare_runs({synthetic("mezo", 0, {{0, 1.0}})}), ConfigError);
}

TEST(Compare, PermutationInvariant) {
  std::vector<RunMetrics> runs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    runs.push_back(synthetic("a", s, {{0, 1.0}, {10 * (s + 1), 0.1}}));
    runs.push_back(synthetic("b", s, {{0, 1.0}, {30 + 7 * s, 0.1}}));
    runs.push_back(synthetic("c", s, {{0, 1.0}, {1000, s % 2 ? 0.1 : 0.9}}));
  }
  CompareOptions o;
  o.target = 0.5;
  const auto base = compare_runs(runs, o);
  std::mt19937 rng(1);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(runs.begin(), runs.end(), rng);
    const auto rep = compare_runs(runs, o);
    EXPECT_EQ(rep.text(), base.text());
    EXPECT_EQ(rep.csv(), base.csv());
  }
}

TEST(Compare, LoadExperimentRoundTrip) {
  auto c = small_mlp();
  c.out = temp_dir("load");
  const auto runs = run_experiment(c);
  const auto back = load_experiment(c.out);
  ASSERT_EQ(back.size(), runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EXPECT_EQ(back[i].label, runs[i].label);
    ASSERT_EQ(back[i].rows.size(), runs[i].rows.size());
    for (std::size_t k = 0; k < runs[i].rows.size(); ++k) {
      EXPECT_EQ(back[i].rows[k].eval_loss, runs[i].rows[k].eval_loss);
    }
  }
}

TEST(Allocation, SingleLayerRatioNearOne) {
  ExperimentConfig c;
  c.optimizer = Optimizer::kMezo;
  c.lr = 1e-3;
  const QuadraticTask<float> task(256, 1.0);
  const auto rep = measure_allocation<float>(task, c);
  // Fused needs the noise and the perturbed layer; a copy is no smaller.
  EXPECT_GT(rep.ratio, 0.5);
  EXPECT_LE(rep.ratio, 2.0);
}

TEST(Allocation, EightLayerMlpRatio) {
  ExperimentConfig c;
  c.lr = 1e-3;
  const auto task = mlp_task<float>(std::vector<std::size_t>(9, 32), Activation::kTanh, 16, 16, 0);
  const auto rep = measure_allocation<float>(task, c);
  EXPECT_LE(rep.ratio, 0.2);
  EXPECT_LE(rep.fused_peak, 2 * rep.max_layer_bytes);
  EXPECT_GE(rep.naive_peak, rep.total_param_bytes);
}

TEST(Allocation, MissingInstrumentationIsAnError) {
  RunMetrics fused, naive;
  fused.label = "fused";
  naive.label = "naive";
  naive.peak_aux_bytes = 100;
  EXPECT_THROW(allocation_report(fused, naive), StateError);
  fused.peak_aux_bytes = 10;
  naive.peak_aux_bytes = 0;
  EXPECT_THROW(allocation_report(fused, naive), StateError);
  naive.peak_aux_bytes = 100;
  EXPECT_DOUBLE_EQ(allocation_report(fused, naive).ratio, 0.1);
}

TEST(Verify, VerdictLineFormat) {
  CheckResult r;
  r.id = 3;
  r.name = "dual_path";
  r.passed = true;
  r.add("k", std::size_t{7});
  EXPECT_EQ(verdict_line(r), "check=3 name=dual_path status=PASS seconds=0 k=7");
}

TEST(Verify, UnfrozenMaskBreaksRestore) {
  VerifyOptions o;
  o.quick = true;
  EXPECT_TRUE(check_restore(o).passed);
  o.faults.unfrozen_mask = true;
  EXPECT_FALSE(check_restore(o).passed);
}

TEST(Verify, WrongDenominatorBreaksUnbiasedness) {
  VerifyOptions o;
  o.quick = true;
  const auto ok = check_unbiasedness(o);
  EXPECT_EQ(ok.detail("dense.within_4se"), "yes");
  o.faults.wrong_denominator = true;
  const auto bad = check_unbiasedness(o);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.detail("dense.within_4se"), "no");
}

TEST(Verify, QuickStructuralChecksPass) {
  VerifyOptions o;
  o.quick = true;
  EXPECT_TRUE(check_dual_path(o).passed);
  EXPECT_TRUE(check_two_copy(o).passed);
  EXPECT_TRUE(check_memory(o).passed);
}

}  // namespace
}  // namespace szo
