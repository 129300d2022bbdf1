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

// Named verification suites. Each writes <suite>.csv (one row per report)
// and <suite>.json into the output directory.

#include <string>
#include <vector>

#include "sdze/harness/experiments.hpp"

namespace sdze {

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"quadratic", "mean-bias", "variance-law", "unbiasedness",
                                              "crns",      "jets",      "implicit"};
  return names;
}

inline Vec suite_vector(Index n, std::uint64_t seed, std::uint64_t tag) {
  RngStream s = derive_stream({seed, Role::init_weights, tag, 0});
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = s.normal();
  return v;
}

inline Mat suite_spd(Index n, std::uint64_t seed) {
  RngStream s = derive_stream({seed, Role::init_weights, 2000, 0});
  Mat A(n, n);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = s.normal();
  return A * A.transpose() / static_cast<double>(n) + Mat::Identity(n, n);
}

inline std::vector<IdentityReport> run_suite_reports(const std::string& suite, std::uint64_t seed,
                                                     const RunConfig* crns_cfg = nullptr, std::uint64_t reps = 500) {
  std::vector<IdentityReport> out;
  auto tag = [](IdentityReport r, const std::string& prefix) {
    r.quantity = prefix + "/" + r.quantity;
    return r;
  };
  if (suite == "quadratic") {
    const SubspaceFixture one = SubspaceFixture::make({{2, 4}}, 2, seed);
    for (const auto& r : quadratic_identity_check(Mat::Identity(8, 8), suite_vector(8, seed, 2001), one, 100000, seed).reports)
      out.push_back(tag(r, "q4"));
    const SubspaceFixture four = SubspaceFixture::make({{4, 4}, {4, 4}, {4, 4}, {4, 4}}, 2, seed);
    for (const auto& r : quadratic_identity_check(suite_spd(64, seed), suite_vector(64, seed, 2002), four, 100000, seed).reports)
      out.push_back(tag(r, "q16"));
  } else if (suite == "mean-bias") {
    const SubspaceFixture f = SubspaceFixture::make({{4, 4}, {4, 4}}, 2, seed);
    const MeanBiasCheck c = mean_bias_check(suite_vector(32, seed, 2003), f, {2e-2, 1e-2, 5e-3}, 20000, seed);
    out = c.reports;
  } else if (suite == "variance-law") {
    out.push_back(tag(variance_law_check(term_table(TinyPinn::make(seed, 4, 3, 4))).report, "distinct_terms"));
    out.push_back(tag(variance_law_check(term_table(TinyPinn::make(seed, 4, 3, 4, true))).report, "aliased_terms"));
  } else if (suite == "unbiasedness") {
    out.push_back(unbiasedness_check(term_table(TinyPinn::make(seed, 4, 3, 4))));
  } else if (suite == "jets") {
    out.push_back(jet_fd_check(seed, 10));
    out.push_back(manufactured_residual_check(seed, 100, 200));
  } else if (suite == "implicit") {
    out.push_back(implicit_equivalence_check(24, seed).report);
    out.push_back(orthogonality_check({{100, 128}, {128, 128}, {128, 1}, {12, 3}}, 16, seed, 5));
  } else if (suite == "crns") {
    if (crns_cfg == nullptr) throw InvalidArgument("crns suite needs a run configuration");
    const PdeProblem problem = crns_cfg->problem();
    const SdzeConfig sc = crns_cfg->sdze();
    const TrainState state = make_train_state(crns_cfg->initial_params(), sc);
    const PinnObjective obj{&problem, crns_cfg->seed, crns_cfg->batch_points_B, crns_cfg->batch_dims_b};
    const CrnsSweep sw = crns_variance_sweep(state, obj, sc, {1e-1, 1e-2, 1e-3, 1e-4}, reps);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, naive3 = 0.0, crns3 = 0.0;
    for (const auto& r : sw.rows) {
      if (r.crns) {
        lo = std::min(lo, r.variance);
        hi = std::max(hi, r.variance);
      }
      if (r.eps == 1e-3) (r.crns ? crns3 : naive3) = r.variance;
    }
    IdentityReport slope{"naive_variance_slope", -2.0, sw.slope_naive, reps, std::abs(sw.slope_naive + 2.0), 0.2, false};
    slope.pass = slope.deviation <= slope.tolerance;
    out.push_back(slope);
    IdentityReport flat{"crns_variance_max_over_min", 1.0, hi / lo, reps, hi / lo, 2.0, hi / lo <= 2.0};
    out.push_back(flat);
    IdentityReport ratio{"variance_ratio_at_eps_1e-3", 1e4, naive3 / crns3, reps, naive3 / crns3, 1e4, naive3 / crns3 >= 1e4};
    out.push_back(ratio);
  } else {
    throw InvalidArgument("unknown suite '" + suite + "'");
  }
  return out;
}

inline std::vector<IdentityReport> run_verify_suite(const std::string& suite, std::uint64_t seed, const fs::path& out_dir,
                                                    const RunConfig* crns_cfg = nullptr, std::uint64_t reps = 500) {
  const std::vector<IdentityReport> reports = run_suite_reports(suite, seed, crns_cfg, reps);
  fs::create_directories(out_dir);
  const std::string hash = crns_cfg ? config_hash(*crns_cfg) : std::string(16, '0');
  CsvWriter csv((out_dir / (suite + ".csv")).string(), seed, hash,
                {"quantity", "theoretical", "empirical", "samples", "deviation", "tolerance", "pass"});
  Json arr = Json::array();
  for (const auto& r : reports) {
    csv.row({r.quantity, csv_number(r.theoretical), csv_number(r.empirical), std::to_string(r.samples),
             csv_number(r.deviation), csv_number(r.tolerance), r.pass ? "true" : "false"});
    arr.push_back({{"quantity", r.quantity},
                   {"theoretical", r.theoretical},
                   {"empirical", r.empirical},
                   {"samples", r.samples},
                   {"deviation", r.deviation},
                   {"tolerance", r.tolerance},
                   {"pass", r.pass}});
  }
  write_text(out_dir / (suite + ".json"), Json{{"suite", suite}, {"seed", seed}, {"reports", arr}}.dump(2) + "\n");
  return reports;
}

}  // namespace sdze
