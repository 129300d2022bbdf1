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

#pragma once

// Experiment drivers behind the CLI: training runs, rank x frequency grids,
// batch-shape sweeps, CRNS ablations and the verification suites.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sdze/harness/io.hpp"
#include "sdze/parallel.hpp"
#include "sdze/verify.hpp"

namespace sdze {

namespace fs = std::filesystem;

inline StreamKey test_key(const RunConfig& c) { return {c.seed, Role::test_points, 0, 0}; }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

struct TrainOutcome {
  std::vector<StepRecord> history;
  double initial_rel_l2 = 0.0;
  double final_rel_l2 = 0.0;
  std::uint64_t start_step = 0;
  MlpParams params;
};

// Per-step observer, e.g. for progress output.
using StepObserver = std::function<void(const StepRecord&)>;

// Trains without touching the filesystem.
inline TrainOutcome train_in_memory(const RunConfig& c, const StepObserver& observe = {}) {
  const PdeProblem problem = c.problem();
  const SdzeConfig sc = c.sdze();
  TrainState state = make_train_state(c.initial_params(), sc);
  const PinnObjective obj{&problem, c.seed, c.batch_points_B, c.batch_dims_b};
  TrainOutcome out;
  out.initial_rel_l2 = relative_l2(state.params, problem, test_key(c), c.test_points);
  out.history = train(state, obj, sc, [&](const TrainState&, StepRecord& r) {
    if (observe) observe(r);
  });
  out.final_rel_l2 = relative_l2(state.params, problem, test_key(c), c.test_points);
  out.params = std::move(state.params);
  return out;
}

// Full run with files in `out_dir`: config.json, seed.txt, metrics.csv,
// ckpt_<step>.bin at the checkpoint cadence, final.bin and summary.json.
// With `resume_from`, training continues from that checkpoint's step.
inline TrainOutcome run_train(const RunConfig& c, const fs::path& out_dir, const std::string& resume_from = "",
                              const StepObserver& observe = {}) {
  fs::create_directories(out_dir);
  const std::string hash = config_hash(c);
  write_text(out_dir / "config.json", to_json(c).dump(2) + "\n");
  write_text(out_dir / "seed.txt", "seed=" + std::to_string(c.seed) + "\nconfig-hash=" + hash + "\n");

  const PdeProblem problem = c.problem();
  const SdzeConfig sc = c.sdze();
  MlpParams params;
  std::uint64_t start = 0;
  if (resume_from.empty()) {
    params = c.initial_params();
  } else {
    Checkpoint ck = load_checkpoint(resume_from, c.bias, c.activation);
    if (ck.seed != c.seed)
      throw ConfigError("checkpoint " + resume_from + " was written with seed " + std::to_string(ck.seed) +
                        ", config has " + std::to_string(c.seed));
    for (std::size_t l = 0; l < ck.params.depth(); ++l)
      if (l + 1 >= c.widths.size() || ck.params.layers[l].W.rows() != c.widths[l] ||
          ck.params.layers[l].W.cols() != c.widths[l + 1])
        throw ConfigError("checkpoint " + resume_from + " does not match net.widths");
    params = std::move(ck.params);
    start = ck.step;
  }
  TrainState state = make_train_state(std::move(params), sc, start);
  const PinnObjective obj{&problem, c.seed, c.batch_points_B, c.batch_dims_b};

  TrainOutcome out;
  out.start_step = start;
  out.initial_rel_l2 = relative_l2(state.params, problem, test_key(c), c.test_points);
  if (start == 0 && c.checkpoint_every > 0) save_checkpoint((out_dir / "ckpt_0.bin").string(), state.params, 0, c.seed);

  CsvWriter csv((out_dir / "metrics.csv").string(), c.seed, hash, metrics_columns());
  const auto t0 = std::chrono::steady_clock::now();
  out.history = train(state, obj, sc, [&](const TrainState& s, StepRecord& r) {
    const bool eval = r.step == c.steps || (c.eval_every > 0 && r.step % c.eval_every == 0);
    if (eval) r.rel_l2 = relative_l2(s.params, problem, test_key(c), c.test_points);
    csv.row(metrics_row(r));
    if (c.checkpoint_every > 0 && r.step % c.checkpoint_every == 0)
      save_checkpoint((out_dir / ("ckpt_" + std::to_string(r.step) + ".bin")).string(), s.params, r.step, c.seed);
    if (observe) observe(r);
  });
  csv.flush();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint((out_dir / "final.bin").string(), state.params, state.step, c.seed);
  out.final_rel_l2 = relative_l2(state.params, problem, test_key(c), c.test_points);

  Json summary = {{"seed", c.seed},
                  {"config_hash", hash},
                  {"start_step", start},
                  {"end_step", state.step},
                  {"initial_rel_l2", out.initial_rel_l2},
                  {"final_rel_l2", out.final_rel_l2},
                  {"wall_seconds", seconds}};
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  out.params = std::move(state.params);
  return out;
}

struct GridCell {
  Index rank = 0;
  std::uint64_t freq_F = 0;
  double initial_rel_l2 = 0.0;
  double final_rel_l2 = 0.0;
};

struct RankFreqSweep {
  std::vector<GridCell> cells;
  double rank_spread = 0.0;  // max over F of (max_r - min_r) final L2
  double freq_spread = 0.0;  // max over r of (max_F - min_F) final L2
  bool robust_to_rank() const { return rank_spread <= freq_spread; }
};

inline RankFreqSweep run_sweep_rank_freq(const RunConfig& base, const std::vector<Index>& ranks,
                                         const std::vector<std::uint64_t>& freqs, const fs::path& out_dir) {
  if (ranks.empty() || freqs.empty()) throw InvalidArgument("sweep-rank-freq: empty grid");
  RankFreqSweep out;
  out.cells.resize(ranks.size() * freqs.size());
  parallel_for(out.cells.size(), [&](std::size_t i) {
    RunConfig c = base;
    c.rank = ranks[i / freqs.size()];
    c.rank_per_layer.clear();
    c.freq_F = freqs[i % freqs.size()];
    const TrainOutcome t = train_in_memory(c);
    out.cells[i] = {c.rank, c.freq_F, t.initial_rel_l2, t.final_rel_l2};
  });
  std::map<std::uint64_t, std::pair<double, double>> by_f;
  std::map<Index, std::pair<double, double>> by_r;
  for (const auto& cell : out.cells) {
    auto widen = [&](auto& m, auto key) {
      auto [it, fresh] = m.try_emplace(key, cell.final_rel_l2, cell.final_rel_l2);
      if (!fresh) {
        it->second.first = std::min(it->second.first, cell.final_rel_l2);
        it->second.second = std::max(it->second.second, cell.final_rel_l2);
      }
    };
    widen(by_f, cell.freq_F);
    widen(by_r, cell.rank);
  }
  for (const auto& [f, mm] : by_f) out.rank_spread = std::max(out.rank_spread, mm.second - mm.first);
  for (const auto& [r, mm] : by_r) out.freq_spread = std::max(out.freq_spread, mm.second - mm.first);

  fs::create_directories(out_dir);
  CsvWriter csv((out_dir / "sweep_rank_freq.csv").string(), base.seed, config_hash(base),
                {"rank", "freq_F", "initial_rel_l2", "final_rel_l2"});
  for (const auto& cell : out.cells)
    csv.row({std::to_string(cell.rank), std::to_string(cell.freq_F), csv_number(cell.initial_rel_l2),
             csv_number(cell.final_rel_l2)});
  Json s = {{"rank_spread", out.rank_spread}, {"freq_spread", out.freq_spread}, {"robust_to_rank", out.robust_to_rank()}};
  write_text(out_dir / "sweep_rank_freq.json", s.dump(2) + "\n");
  return out;
}

struct BatchRow {
  Index B = 0;
  Index b = 0;
  double delta_variance = 0.0;
  double delta_mean = 0.0;
  double final_rel_l2 = 0.0;
};

// Variance of delta at the initial parameters (replicates t = 1..reps) and
// the final L2 after `short_steps` of training, per (B, b) pair.
inline std::vector<BatchRow> sweep_batch(const RunConfig& base, const std::vector<std::pair<Index, Index>>& pairs,
                                         std::uint64_t reps, std::uint64_t short_steps) {
  if (pairs.empty()) throw InvalidArgument("sweep-batch: no pairs");
  for (const auto& [B, b] : pairs) {
    if (B < 1 || b < 1 || b > base.dim) throw InvalidArgument("sweep-batch: pair out of range");
    if (B * b != pairs.front().first * pairs.front().second)
      throw InvalidArgument("sweep-batch: pairs must share B*b (" + std::to_string(B) + "x" + std::to_string(b) +
                            " vs " + std::to_string(pairs.front().first) + "x" + std::to_string(pairs.front().second) + ")");
  }
  if (reps < 2) throw InvalidArgument("sweep-batch: need at least 2 replicates");
  const PdeProblem problem = base.problem();
  const SdzeConfig sc = base.sdze();
  const TrainState state = make_train_state(base.initial_params(), sc);
  std::vector<BatchRow> rows(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [B, b] = pairs[i];
    const PinnObjective obj{&problem, base.seed, B, b};
    std::vector<double> deltas(reps);
    parallel_for(reps, [&](std::size_t k) {
      Perturbation z;
      deltas[k] = estimate_delta(state, obj, sc, k + 1, true, z).delta_hat;
    });
    RunningMoments m;
    for (double d : deltas) m.add(d);
    rows[i] = {B, b, m.variance(), m.mean(), 0.0};
  }
  parallel_for(pairs.size(), [&](std::size_t i) {
    RunConfig c = base;
    c.batch_points_B = pairs[i].first;
    c.batch_dims_b = pairs[i].second;
    c.steps = short_steps;
    rows[i].final_rel_l2 = train_in_memory(c).final_rel_l2;
  });
  return rows;
}

inline std::vector<BatchRow> run_sweep_batch(const RunConfig& base, const std::vector<std::pair<Index, Index>>& pairs,
                                             std::uint64_t reps, std::uint64_t short_steps, const fs::path& out_dir) {
  const auto rows = sweep_batch(base, pairs, reps, short_steps);
  fs::create_directories(out_dir);
  CsvWriter csv((out_dir / "sweep_batch.csv").string(), base.seed, config_hash(base),
                {"B", "b", "delta_variance", "delta_mean", "final_rel_l2"});
  for (const auto& r : rows)
    csv.row({std::to_string(r.B), std::to_string(r.b), csv_number(r.delta_variance), csv_number(r.delta_mean),
             csv_number(r.final_rel_l2)});
  return rows;
}

// CRNS ablation at frozen parameters: the config's initial network, or the
// weights of `checkpoint` when given.
inline CrnsSweep run_ablate_crns(const RunConfig& base, const std::vector<double>& eps, std::uint64_t reps,
                                 const fs::path& out_dir, const std::string& checkpoint = "") {
  if (eps.size() < 2) throw InvalidArgument("ablate-crns: need at least two eps values");
  const PdeProblem problem = base.problem();
  const SdzeConfig sc = base.sdze();
  MlpParams params =
      checkpoint.empty() ? base.initial_params() : load_checkpoint(checkpoint, base.bias, base.activation).params;
  const TrainState state = make_train_state(std::move(params), sc);
  const PinnObjective obj{&problem, base.seed, base.batch_points_B, base.batch_dims_b};
  const CrnsSweep sw = crns_variance_sweep(state, obj, sc, eps, reps);
  fs::create_directories(out_dir);
  CsvWriter csv((out_dir / "ablate_crns.csv").string(), base.seed, config_hash(base),
                {"eps", "mode", "variance", "mean", "non_finite"});
  for (const auto& r : sw.rows)
    csv.row({csv_number(r.eps), r.crns ? "crns" : "naive", csv_number(r.variance), csv_number(r.mean),
             std::to_string(r.non_finite)});
  Json s = {{"slope_crns", sw.slope_crns}, {"slope_naive", sw.slope_naive}};
  write_text(out_dir / "ablate_crns.json", s.dump(2) + "\n");
  return sw;
}

}  // namespace sdze
