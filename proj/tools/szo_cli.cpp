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

// Command-line front end: calibrate, train, compare, verify, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "szo/harness.hpp"
#include "szo/szo.hpp"

namespace {

// Flags shared by the subcommands that take an experiment config.
struct ConfigFlags {
  std::string config;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
    const auto flag = [&](const char* name, const char* key, const char* help) {
      options.emplace_back(key, app->add_option(name, values[key], help));
    };
    flag("--task", "task", "quadratic | logistic | mlp | transformer | shifted");
    flag("--optimizer", "optimizer", "mezo | smezo | rmezo | fo-baseline");
    flag("--sparsity", "sparsity", "fraction of weights left unperturbed (default 0.75)");
    flag("--epsilon", "epsilon", "perturbation scale (default 1e-3)");
    flag("--lr", "lr", "learning rate (default 1e-6)");
    flag("--steps", "steps", "optimizer steps (default 20000)");
    flag("--eval-every", "eval_every", "evaluation interval in steps (default 100)");
    flag("--seed", "seeds", "run seed, or a comma-separated list");
    flag("--out", "out", "output directory");
    app->add_option("--set", sets, "extra config entry key=value (repeatable)");
  }

  szo::ExperimentConfig load() const {
    szo::ConfigEntries overrides;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) overrides[key] = values.at(key);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw szo::ConfigError("--set expects key=value, got '" + s + "'");
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    std::optional<std::filesystem::path> file;
    if (!config.empty()) file = config;
    return szo::load_config(file, overrides);
  }
};

template <szo::Real T>
int calibrate(const szo::ExperimentConfig& cfg) {
  const auto task = szo::make_task<T>(cfg.task);
  const auto policy = cfg.policy();
  const auto thresholds =
      szo::calibrate_thresholds(task->initial(), policy.effective_sparsity(), policy);
  std::filesystem::create_directories(cfg.out);
  const auto path = cfg.out / "thresholds.txt";
  szo::write_thresholds(thresholds, path);
  const szo::Masker<T> masker(task->initial(), policy);
  const auto mask = masker.materialize(task->initial(), 0);
  std::cout << "task " << task->describe() << "\n";
  for (const auto& e : thresholds.per_layer) {
    std::cout << "  " << e.name << " h=" << szo::format_real(e.h)
              << (e.maskable ? "" : " (never masked)") << "\n";
  }
  std::cout << "selected " << mask.d_hat() << " of " << task->initial().total_params()
            << " parameters\nwrote " << path.string() << "\n";
  return 0;
}

template <szo::Real T>
int report(const szo::ExperimentConfig& cfg, std::size_t steps) {
  const auto task = szo::make_task<T>(cfg.task);
  const auto a = szo::measure_allocation<T>(*task, cfg, steps);
  std::filesystem::create_directories(cfg.out);
  std::ofstream f(cfg.out / "allocation.txt", std::ios::trunc);
  const std::string line = "task " + task->describe() + "\n" + a.text() + "\n";
  f << line;
  std::cout << line;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse zeroth-order fine-tuning experiments"};
  app.require_subcommand(1);

  ConfigFlags cal_flags, train_flags, report_flags;
  auto* cal = app.add_subcommand("calibrate", "compute per-layer magnitude thresholds");
  cal_flags.attach(cal);
  auto* train = app.add_subcommand("train", "run an experiment");
  train_flags.attach(train);
  auto* rep = app.add_subcommand("report", "allocation report: fused against materialized path");
  report_flags.attach(rep);
  std::size_t report_steps = 3;
  rep->add_option("--probe-steps", report_steps, "steps per path (default 3)");

  auto* cmp = app.add_subcommand("compare", "steps-to-target and speedup across experiments");
  std::vector<std::string> dirs;
  std::optional<double> target;
  std::string metric = "eval_loss";
  std::string cmp_out;
  cmp->add_option("dirs", dirs, "experiment output directories")->required();
  cmp->add_option("--target", target, "target value (default: 1.1 x fo-baseline final loss)");
  cmp->add_option("--metric", metric, "eval_loss | grad_norm_sq")
      ->check(CLI::IsMember({"eval_loss", "grad_norm_sq"}));
  cmp->add_option("--out", cmp_out, "directory for compare.txt and compare.csv");

  auto* ver = app.add_subcommand("verify", "run the verification suite");
  bool quick = false;
  std::vector<int> only;
  std::string inject;
  std::string ver_out;
  ver->add_flag("--quick", quick, "reduced sample counts and step budgets");
  ver->add_option("--only", only, "check ids to run")->delimiter(',');
  ver->add_option("--inject", inject, "deliberate defect: unfrozen-mask | wrong-denominator")
      ->check(CLI::IsMember({"unfrozen-mask", "wrong-denominator"}));
  ver->add_option("--out", ver_out, "directory for verdict.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cal->parsed()) {
      const auto cfg = cal_flags.load();
      return cfg.dtype == "f64" ? calibrate<double>(cfg) : calibrate<float>(cfg);
    }
    if (rep->parsed()) {
      const auto cfg = report_flags.load();
      return cfg.dtype == "f64" ? report<double>(cfg, report_steps)
                                : report<float>(cfg, report_steps);
    }
    if (train->parsed()) {
      const auto cfg = train_flags.load();
      const auto runs = szo::run_experiment(cfg);
      bool failed = false;
      for (const auto& m : runs) {
        std::cout << szo::run_summary(m) << "\n";
        failed = failed || m.failed;
      }
      std::cout << "wrote " << cfg.out.string() << "\n";
      return failed ? 1 : 0;
    }
    if (cmp->parsed()) {
      std::vector<szo::RunMetrics> runs;
      for (const auto& d : dirs) {
        auto r = szo::load_experiment(d);
        std::move(r.begin(), r.end(), std::back_inserter(runs));
      }
      szo::CompareOptions opts;
      opts.target = target;
      opts.metric = metric == "grad_norm_sq" ? szo::TargetMetric::kGradNormSq
                                             : szo::TargetMetric::kEvalLoss;
      const auto r = szo::compare_runs(runs, opts);
      std::cout << r.text();
      if (!cmp_out.empty()) {
        std::filesystem::create_directories(cmp_out);
        std::ofstream(std::filesystem::path(cmp_out) / "compare.txt") << r.text();
        std::ofstream(std::filesystem::path(cmp_out) / "compare.csv") << r.csv();
      }
      return 0;
    }
    if (ver->parsed()) {
      szo::VerifyOptions opts;
      opts.quick = quick;
      opts.only = only;
      opts.faults.unfrozen_mask = inject == "unfrozen-mask";
      opts.faults.wrong_denominator = inject == "wrong-denominator";
      const auto results = szo::verify_suite(opts);
      std::ofstream verdict;
      if (!ver_out.empty()) {
        std::filesystem::create_directories(ver_out);
        verdict.open(std::filesystem::path(ver_out) / "verdict.txt", std::ios::trunc);
      }
      bool all = true;
      for (const auto& r : results) {
        const std::string line = szo::verdict_line(r);
        std::cout << line << "\n";
        if (verdict.is_open()) verdict << line << "\n";
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const szo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
