// Copyright 2026 The SDZE Authors.
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

// sdze command-line tool: training runs, verification suites and sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdze/harness/suites.hpp"
#include "sdze/harness/tuning.hpp"

namespace {

using namespace sdze;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) {
    std::size_t used = 0;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        out.push_back(static_cast<T>(std::stoll(item, &used)));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError(std::string("bad value '") + item + "' in --" + what);
  }
  if (out.empty()) throw ConfigError(std::string("--") + what + " is empty");
  return out;
}

std::vector<std::pair<Index, Index>> parse_pairs(const std::string& s) {
  std::vector<std::pair<Index, Index>> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, 'x');
    if (parts.size() != 2) throw ConfigError("bad pair '" + item + "' in --pairs (expected BxB_dims)");
    out.emplace_back(parse_list<Index>(parts[0], "pairs").front(), parse_list<Index>(parts[1], "pairs").front());
  }
  if (out.empty()) throw ConfigError("--pairs is empty");
  return out;
}

RunConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                              const std::optional<std::uint64_t>& steps) {
  RunConfig c = load_run_config(path);
  if (seed) c.seed = *seed;
  if (steps) c.steps = *steps;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Backprop-free PINN training with subspace zeroth-order estimates"};
  app.set_version_flag("--version", std::string(SDZE_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, suite, ranks, freqs, pairs, eps_list, checkpoint;
  std::optional<std::uint64_t> seed, steps;
  std::uint64_t reps = 500, short_steps = 200;
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "Train a network from a JSON config");
  train_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "Override the master seed");
  train_cmd->add_option("--steps", steps, "Override the step count");
  train_cmd->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  train_cmd->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_flag("--quiet", quiet, "No progress output");

  auto* verify_cmd = app.add_subcommand("verify", "Run a verification suite");
  verify_cmd->add_option("--suite", suite, "quadratic, mean-bias, variance-law, unbiasedness, crns, jets, implicit or all")
      ->required();
  verify_cmd->add_option("--seed", seed, "Master seed (default 1)");
  verify_cmd->add_option("--out", out_dir, "Output directory")->default_val("verify");
  verify_cmd->add_option("--config", config_path, "Run configuration for the crns suite")->check(CLI::ExistingFile);
  verify_cmd->add_option("--reps", reps, "Replicates for the crns suite")->default_val(500);

  auto* rf_cmd = app.add_subcommand("sweep-rank-freq", "Final L2 over a rank x refresh-frequency grid");
  rf_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  rf_cmd->add_option("--ranks", ranks, "Comma-separated ranks")->required();
  rf_cmd->add_option("--freqs", freqs, "Comma-separated refresh frequencies")->required();
  rf_cmd->add_option("--seed", seed);
  rf_cmd->add_option("--steps", steps);
  rf_cmd->add_option("--out", out_dir)->default_val("sweep_rank_freq");

  auto* batch_cmd = app.add_subcommand("sweep-batch", "Estimator variance and short-run L2 over (B, b) pairs");
  batch_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  batch_cmd->add_option("--pairs", pairs, "Comma-separated BxB_dims pairs with a common product")->required();
  batch_cmd->add_option("--reps", reps, "Replicates for the variance estimate")->default_val(200);
  batch_cmd->add_option("--short-steps", short_steps, "Training steps per pair")->default_val(200);
  batch_cmd->add_option("--seed", seed);
  batch_cmd->add_option("--out", out_dir)->default_val("sweep_batch");

  auto* crns_cmd = app.add_subcommand("ablate-crns", "Variance of the estimate vs eps with and without CRNS");
  crns_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  crns_cmd->add_option("--eps", eps_list, "Comma-separated eps values")->default_val("1e-1,1e-2,1e-3,1e-4");
  crns_cmd->add_option("--reps", reps, "Replicates per eps")->default_val(500);
  crns_cmd->add_option("--checkpoint", checkpoint, "Freeze these weights instead of the initial ones")
      ->check(CLI::ExistingFile);
  crns_cmd->add_option("--seed", seed);
  crns_cmd->add_option("--out", out_dir)->default_val("ablate_crns");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      RunConfig c = load_with_overrides(config_path, seed, steps);
      if (!out_dir.empty()) c.output_dir = out_dir;
      const std::uint64_t every = std::max<std::uint64_t>(1, c.steps / 20);
      const TrainOutcome t = run_train(c, c.output_dir, resume, [&](const StepRecord& r) {
        if (!quiet && (r.step % every == 0 || r.step == c.steps))
          std::fprintf(stderr, "step %llu  loss %.6g  alpha %.3g%s\n", static_cast<unsigned long long>(r.step),
                       0.5 * (r.loss_plus + r.loss_minus), r.alpha,
                       std::isnan(r.rel_l2) ? "" : ("  rel_l2 " + csv_number(r.rel_l2)).c_str());
      });
      std::printf("relative L2: %.6g -> %.6g (%s)\n", t.initial_rel_l2, t.final_rel_l2, c.output_dir.c_str());
      return 0;
    }
    if (*verify_cmd) {
      const std::uint64_t s = seed.value_or(1);
      std::optional<RunConfig> cfg;
      if (!config_path.empty()) cfg = load_with_overrides(config_path, seed, std::nullopt);
      std::vector<std::string> suites = suite == "all" ? suite_names() : std::vector<std::string>{suite};
      bool all_pass = true;
      for (const auto& name : suites) {
        if (name == "crns" && !cfg) {
          if (suite == "all") continue;
          throw ConfigError("the crns suite needs --config");
        }
        for (const auto& r : run_verify_suite(name, s, out_dir, cfg ? &*cfg : nullptr, reps)) {
          std::printf("%s %s/%s empirical=%.6g theoretical=%.6g deviation=%.3g tol=%.3g\n", r.pass ? "PASS" : "FAIL",
                      name.c_str(), r.quantity.c_str(), r.empirical, r.theoretical, r.deviation, r.tolerance);
          all_pass = all_pass && r.pass;
        }
      }
      return all_pass ? 0 : 1;
    }
    if (*rf_cmd) {
      const RunConfig c = load_with_overrides(config_path, seed, steps);
      const auto sw = run_sweep_rank_freq(c, parse_list<Index>(ranks, "ranks"), parse_list<std::uint64_t>(freqs, "freqs"),
                                          out_dir);
      for (const auto& cell : sw.cells)
        std::printf("rank=%lld F=%llu final_rel_l2=%.6g\n", static_cast<long long>(cell.rank),
                    static_cast<unsigned long long>(cell.freq_F), cell.final_rel_l2);
      std::printf("rank spread %.4g, frequency spread %.4g: %s\n", sw.rank_spread, sw.freq_spread,
                  sw.robust_to_rank() ? "robust to rank" : "rank matters more than frequency");
      return 0;
    }
    if (*batch_cmd) {
      const RunConfig c = load_with_overrides(config_path, seed, std::nullopt);
      for (const auto& r : run_sweep_batch(c, parse_pairs(pairs), reps, short_steps, out_dir))
        std::printf("B=%lld b=%lld var=%.6g final_rel_l2=%.6g\n", static_cast<long long>(r.B),
                    static_cast<long long>(r.b), r.delta_variance, r.final_rel_l2);
      return 0;
    }
    if (*crns_cmd) {
      const RunConfig c = load_with_overrides(config_path, seed, std::nullopt);
      const CrnsSweep sw = run_ablate_crns(c, parse_list<double>(eps_list, "eps"), reps, out_dir, checkpoint);
      for (const auto& r : sw.rows)
        std::printf("eps=%g %s var=%.6g non_finite=%llu\n", r.eps, r.crns ? "crns " : "naive", r.variance,
                    static_cast<unsigned long long>(r.non_finite));
      std::printf("slopes: crns %.3f, naive %.3f\n", sw.slope_crns, sw.slope_naive);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
