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

// Acceptance run: one PASS/FAIL line per criterion, then a summary.
//
//   sdze_acceptance --config configs/poisson100.json --workdir <dir> [--steps N]
//
// --steps only exists to shorten local runs; the training criteria are
// evaluated against whatever step count was used and say so in their line.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "sdze/harness/suites.hpp"
#include "sdze/harness/tuning.hpp"

namespace {

using namespace sdze;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool all_pass(const std::vector<IdentityReport>& rs, std::string& detail) {
  bool ok = true;
  for (const auto& r : rs) {
    detail += fmt(" %s=%.3g(tol %.3g)", r.quantity.c_str(), r.deviation, r.tolerance);
    ok = ok && r.pass;
  }
  return ok;
}

// Block means of the per-step loss (average of the two probes) and their
// standard errors from the within-block spread.
struct Blocks {
  std::vector<double> mean, se;
};

Blocks block_means(const std::vector<StepRecord>& h, std::size_t width) {
  Blocks b;
  for (std::size_t start = 0; start + width <= h.size(); start += width) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = start; i < start + width; ++i) {
      const double l = 0.5 * (h[i].loss_plus + h[i].loss_minus);
      s += l;
      s2 += l * l;
    }
    const double n = static_cast<double>(width), m = s / n;
    b.mean.push_back(m);
    b.se.push_back(std::sqrt(std::max(0.0, (s2 / n - m * m) * n / (n - 1.0)) / n));
  }
  return b;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    out.push_back(text.substr(pos, nl - pos));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"sdze acceptance run"};
  std::string config_path, workdir = "acceptance_work";
  std::uint64_t steps_override = 0, seed = 1;
  app.add_option("--config", config_path, "Benchmark configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--workdir", workdir, "Scratch directory for runs");
  app.add_option("--steps", steps_override, "Shorten the training runs (development only)");
  app.add_option("--seed", seed, "Seed for the verification criteria")->default_val(1);
  CLI11_PARSE(app, argc, argv);

  RunConfig bench;
  try {
    bench = load_run_config(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  }
  if (steps_override > 0) bench.steps = steps_override;
  bench.record_timing = false;
  const fs::path root = workdir;
  fs::remove_all(root);
  fs::create_directories(root);

  // Shared between the training and determinism criteria.
  TrainOutcome run_a;
  double run_a_seconds = 0.0;

  std::vector<Criterion> criteria;

  criteria.push_back({1, "implicit_vs_explicit", 60.0, [&] {
    const EquivalenceCheck c = implicit_equivalence_check(24, seed, 1e-10);
    std::size_t split = 0;
    for (const auto& ec : c.cases) split += ec.max_split > 1;
    return Outcome{c.report.pass && c.cases.size() >= 20 && split > 0,
                   fmt("cases=%zu split_cases=%zu max_rel=%.3g tol=1e-10", c.cases.size(), split, c.report.empirical)};
  }});

  criteria.push_back({2, "subspace_orthogonality", 0.0, [&] {
    // The benchmark layers (refreshed 5 times each) plus desk-scale layers
    // small enough for the Kronecker Gram matrix.
    std::vector<std::pair<Index, Index>> shapes;
    for (std::size_t l = 0; l + 1 < bench.widths.size(); ++l) shapes.emplace_back(bench.widths[l], bench.widths[l + 1]);
    const IdentityReport big = orthogonality_check(shapes, bench.rank, seed, 5, 1e-10);
    const IdentityReport small = orthogonality_check({{12, 3}, {8, 8}, {20, 6}, {5, 1}}, 3, seed, 5, 1e-10);
    return Outcome{big.pass && small.pass,
                   fmt("benchmark_layers=%.3g kron_layers=%.3g tol=1e-10", big.empirical, small.empirical)};
  }});

  criteria.push_back({3, "quadratic_identities", 120.0, [&] {
    std::string d;
    const bool ok = all_pass(run_suite_reports("quadratic", seed), d);
    return Outcome{ok, "n=1e5" + d};
  }});

  criteria.push_back({4, "spatial_unbiasedness_variance_law", 60.0, [&] {
    std::string d;
    bool ok = all_pass(run_suite_reports("unbiasedness", seed), d);
    ok = all_pass(run_suite_reports("variance-law", seed), d) && ok;
    return Outcome{ok, "N_r=3 N_L=4" + d};
  }});

  criteria.push_back({5, "crns_ablation", 300.0, [&] {
    RunConfig c = bench;
    c.batch_dims_b = 5;
    const PdeProblem problem = c.problem();
    const SdzeConfig sc = c.sdze();
    const TrainState state = make_train_state(c.initial_params(), sc);
    const PinnObjective obj{&problem, c.seed, c.batch_points_B, c.batch_dims_b};
    const CrnsSweep sw = crns_variance_sweep(state, obj, sc, {1e-1, 1e-2, 1e-3, 1e-4}, 500);
    double lo = INFINITY, hi = 0.0, crns3 = 0.0, naive3 = 0.0;
    std::string vars;
    for (const auto& r : sw.rows) {
      vars += fmt(" %s(%g)=%.4g", r.crns ? "crns" : "naive", r.eps, r.variance);
      if (r.crns) lo = std::min(lo, r.variance), hi = std::max(hi, r.variance);
      if (r.eps == 1e-3) (r.crns ? crns3 : naive3) = r.variance;
    }
    const bool slope_ok = sw.slope_naive >= -2.2 && sw.slope_naive <= -1.8;
    const bool flat_ok = hi / lo <= 2.0;
    const bool ratio_ok = naive3 / crns3 >= 1e4;
    return Outcome{slope_ok && flat_ok && ratio_ok,
                   fmt("d=%lld b=5 reps=500 naive_slope=%.3f[%s] crns_max/min=%.3f[%s] ratio@1e-3=%.4g[%s]",
                       static_cast<long long>(c.dim), sw.slope_naive, slope_ok ? "ok" : "out of [-2.2,-1.8]", hi / lo,
                       flat_ok ? "ok" : ">2", naive3 / crns3, ratio_ok ? "ok" : "<1e4") +
                       vars};
  }});

  criteria.push_back({6, "jet_correctness", 60.0, [&] {
    const IdentityReport fd = jet_fd_check(seed, 10, 1e-6);
    const IdentityReport mf = manufactured_residual_check(seed, bench.dim, 200, 1e-10);
    return Outcome{fd.pass && mf.pass,
                   fmt("jet_vs_fd=%.3g(tol 1e-6) residual@200pts=%.3g(tol 1e-10)", fd.empirical, mf.empirical)};
  }});

  criteria.push_back({7, "end_to_end_training", 900.0, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    run_a = run_train(bench, root / "run_a");
    run_a_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool l2_ok = run_a.final_rel_l2 <= 0.2 * run_a.initial_rel_l2;
    // A 500-step block mean may only rise by more than its sampling noise
    // (3 combined standard errors) if the loss actually went up.
    const Blocks b = block_means(run_a.history, 500);
    std::size_t strict_rises = 0, significant_rises = 0;
    for (std::size_t k = 0; k + 1 < b.mean.size(); ++k) {
      const double rise = b.mean[k + 1] - b.mean[k];
      strict_rises += rise > 0.0;
      significant_rises += rise > 3.0 * std::hypot(b.se[k], b.se[k + 1]);
    }
    const bool mono_ok = b.mean.size() >= 2 && significant_rises == 0 && b.mean.back() < b.mean.front();
    return Outcome{l2_ok && mono_ok,
                   fmt("steps=%llu rel_l2 %.4g -> %.4g (ratio %.4f, need <=0.2) blocks=%zu first=%.5g last=%.5g "
                       "significant_rises=%zu strict_rises=%zu",
                       static_cast<unsigned long long>(bench.steps), run_a.initial_rel_l2, run_a.final_rel_l2,
                       run_a.final_rel_l2 / run_a.initial_rel_l2, b.mean.size(), b.mean.empty() ? NAN : b.mean.front(),
                       b.mean.empty() ? NAN : b.mean.back(), significant_rises, strict_rises)};
  }});

  criteria.push_back({8, "memory_independent_of_dim", 300.0, [&] {
    std::vector<double> excess;
    std::string d;
    for (Index dim : {Index{100}, Index{1000}, Index{10000}}) {
      RunConfig c = bench;
      c.dim = dim;
      c.widths.front() = dim;
      const PdeProblem problem = c.problem();
      const SdzeConfig sc = c.sdze();
      TrainState state = make_train_state(c.initial_params(), sc);
      const PinnObjective obj{&problem, c.seed, c.batch_points_B, c.batch_dims_b};
      std::size_t peak = 0;
      for (std::uint64_t t = 1; t <= 3; ++t) peak = std::max(peak, sdze_step(state, obj, sc, t).peak_tmp_elems);
      const double layer1 = static_cast<double>(c.batch_points_B * dim);
      excess.push_back(static_cast<double>(peak) - layer1);
      d += fmt(" d=%lld:peak=%zu,B*d=%.0f,excess=%.0f", static_cast<long long>(dim), peak, layer1, excess.back());
    }
    const double growth = std::max(excess[1], excess[2]) / excess[0];
    return Outcome{growth <= 1.2, fmt("excess_growth=%.4f(need <=1.2)", growth) + d};
  }});

  criteria.push_back({9, "determinism", 0.0, [&] {
    if (run_a.history.empty()) return Outcome{false, "training run missing"};
    run_train(bench, root / "run_b");
    const std::string a = read_file((root / "run_a" / "metrics.csv").string());
    const bool same_csv = a == read_file((root / "run_b" / "metrics.csv").string());

    // Resume from the mid-run checkpoint closest to half way.
    std::uint64_t mid = 0;
    if (bench.checkpoint_every > 0)
      mid = (bench.steps / 2) / bench.checkpoint_every * bench.checkpoint_every;
    if (mid == 0) return Outcome{false, fmt("byte_identical_csv=%d; no mid-run checkpoint to resume from", same_csv)};
    const fs::path ck = root / "run_a" / ("ckpt_" + std::to_string(mid) + ".bin");
    run_train(bench, root / "run_resumed", ck.string());
    const bool same_final =
        read_file((root / "run_a" / "final.bin").string()) == read_file((root / "run_resumed" / "final.bin").string());
    const auto full = split_lines(a);
    const auto rest = split_lines(read_file((root / "run_resumed" / "metrics.csv").string()));
    bool same_rows = rest.size() == 2 + (bench.steps - mid) && full.size() == 2 + bench.steps;
    for (std::size_t i = 2; same_rows && i < rest.size(); ++i) same_rows = rest[i] == full[mid + i];
    return Outcome{same_csv && same_final && same_rows,
                   fmt("byte_identical_csv=%d resume_from=%llu final_weights_bitwise=%d resumed_rows_bitwise=%d",
                       same_csv, static_cast<unsigned long long>(mid), same_final, same_rows)};
  }});

  std::size_t passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.id == 7) secs = run_a_seconds;
    const bool in_budget = c.budget_s == 0.0 || secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    passed += pass;
    std::printf("%s %d %s runtime=%.1fs%s %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                in_budget ? "" : fmt("(budget %.0fs exceeded)", c.budget_s).c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, criteria.size());
  return passed == criteria.size() ? 0 : 1;
}
