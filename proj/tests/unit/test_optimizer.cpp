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

#include <gtest/gtest.h>

#include "sdze/optimizer.hpp"
#include "sdze/oracle.hpp"
#include "sdze/verify.hpp"

using namespace sdze;

namespace {

struct Pinn {
  PdeProblem problem;
  PinnObjective obj;
  SdzeConfig cfg;
  MlpParams params;

  explicit Pinn(Index d = 6, Index b = 2, std::uint64_t seed = 41) {
    problem = make_problem(seed, PdeKind::poisson, d, SolutionKind::two_body, Normalization::dim_normalized);
    obj = PinnObjective{&problem, seed, 4, b};
    cfg.master = seed;
    cfg.eps = 1e-3;
    cfg.lr.mode = LrMode::constant;
    cfg.lr.alpha = 1e-3;
    cfg.ranks = {2};
    cfg.freq_F = 10;
    const std::vector<Index> w{d, 8, 8, 1};
    params = init_params(seed, w, {Activation::sin, 1.0}, true);
  }
};

// Quadratic bowl on the explicitly perturbed parameters.
struct Bowl {
  struct Sample {};
  Sample draw(std::uint64_t, std::uint64_t) const { return {}; }
  double operator()(const PerturbView& v, const Sample&) const {
    return flatten(oracle::perturbed_params(v)).squaredNorm();
  }
};

struct NanLoss {
  struct Sample {};
  Sample draw(std::uint64_t, std::uint64_t) const { return {}; }
  double operator()(const PerturbView&, const Sample&) const { return std::nan(""); }
};

}  // namespace

TEST(LrSchedule, Modes) {
  LrSchedule s;
  s.alpha = 0.1;
  EXPECT_EQ(lr_schedule(s, 5, 10), 0.1);
  s.mode = LrMode::annealed;
  s.gamma = 2.0;
  s.m = 3.0;
  s.p = 1.0;
  EXPECT_DOUBLE_EQ(lr_schedule(s, 1, 10), 0.5);
  s.p = 0.75;
  EXPECT_DOUBLE_EQ(lr_schedule(s, 13, 10), 2.0 / std::pow(16.0, 0.75));
  s.p = 0.5;
  EXPECT_THROW(lr_schedule(s, 1, 10), ConfigError);
  s.mode = LrMode::sqrt_tq;
  s.c = 3.0;
  EXPECT_DOUBLE_EQ(lr_schedule(s, 4, 9), 0.5);
  EXPECT_THROW(lr_schedule(s, 0, 9), InvalidArgument);
  EXPECT_THROW(parse_lr_mode("cosine"), ConfigError);
}

TEST(Optimizer, ZeroCoreLeavesParameters) {
  Pinn P;
  TrainState s = make_train_state(P.params, P.cfg);
  const Vec before = flatten(s.params);
  apply_update(s, Perturbation::zeros(s.params, s.subspaces), 1.0);
  EXPECT_EQ(flatten(s.params), before);
}

TEST(Optimizer, QuadraticDeltaIsDirectionalDerivative) {
  Pinn P;
  const TrainState s = make_train_state(P.params, P.cfg);
  Perturbation z;
  const StepRecord rec = estimate_delta(s, Bowl{}, P.cfg, 3, true, z);
  const Mat Pm = explicit_projection(s.params, s.subspaces);
  const double exact = 2.0 * flatten(s.params).dot(Pm * flatten_perturbation(z));
  EXPECT_NEAR(rec.delta_hat, exact, 1e-8 * std::abs(exact));
}

TEST(Optimizer, DeltaMatchesExplicitOracle) {
  Pinn P;
  const TrainState s = make_train_state(P.params, P.cfg);
  Perturbation z;
  const StepRecord rec = estimate_delta(s, P.obj, P.cfg, 5, true, z);
  const auto omega = P.obj.draw(5, 0);
  const MlpParams plus = oracle::perturbed_params({&s.params, &s.subspaces, &z, +1, P.cfg.eps});
  const MlpParams minus = oracle::perturbed_params({&s.params, &s.subspaces, &z, -1, P.cfg.eps});
  const double lp = P.obj(PerturbView::plain(plus), omega);
  const double lm = P.obj(PerturbView::plain(minus), omega);
  EXPECT_NEAR(rec.loss_plus, lp, 1e-12 * std::abs(lp));
  EXPECT_NEAR(rec.loss_minus, lm, 1e-12 * std::abs(lm));
  const double explicit_delta = (lp - lm) / (2.0 * P.cfg.eps);
  EXPECT_NEAR(rec.delta_hat, explicit_delta, 1e-6 * std::abs(explicit_delta));
}

TEST(Optimizer, FullDimensionSetMakesModesAgree) {
  Pinn P(6, 6);
  P.obj.naive_shares_points = true;
  const TrainState s = make_train_state(P.params, P.cfg);
  Perturbation z;
  const double locked = estimate_delta(s, P.obj, P.cfg, 2, true, z).delta_hat;
  const double naive = estimate_delta(s, P.obj, P.cfg, 2, false, z).delta_hat;
  EXPECT_EQ(locked, naive);
}

TEST(Optimizer, NaiveRedrawChangesDelta) {
  Pinn P(6, 2);
  const TrainState s = make_train_state(P.params, P.cfg);
  Perturbation z;
  EXPECT_NE(estimate_delta(s, P.obj, P.cfg, 2, true, z).delta_hat,
            estimate_delta(s, P.obj, P.cfg, 2, false, z).delta_hat);
}

TEST(Optimizer, StepAppliesScaledUpdate) {
  Pinn P;
  TrainState s = make_train_state(P.params, P.cfg);
  const Mat Pm = explicit_projection(s.params, s.subspaces);
  const Vec before = flatten(s.params);
  const StepRecord rec = sdze_step(s, P.obj, P.cfg, 1);
  const Perturbation z = sample_perturbation(P.cfg.master, 1, s.params, s.subspaces);
  const Vec expected = before - rec.alpha * rec.delta_hat * (Pm * flatten_perturbation(z));
  EXPECT_LT((flatten(s.params) - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(s.step, 1u);
  EXPECT_GT(rec.peak_tmp_elems, 0u);
}

TEST(Optimizer, ModeGuards) {
  Pinn P;
  TrainState s = make_train_state(P.params, P.cfg);
  EXPECT_THROW(sdze_step_naive(s, P.obj, P.cfg, 1), InvalidArgument);
  P.cfg.crns = false;
  EXPECT_THROW(sdze_step(s, P.obj, P.cfg, 1), InvalidArgument);
}

TEST(Optimizer, NonFiniteLossHandling) {
  Pinn P;
  TrainState s = make_train_state(P.params, P.cfg);
  const Vec before = flatten(s.params);
  EXPECT_THROW(sdze_step(s, NanLoss{}, P.cfg, 1), NonFiniteLoss);
  P.cfg.crns = false;
  const StepRecord rec = sdze_step_naive(s, NanLoss{}, P.cfg, 1);
  EXPECT_FALSE(rec.finite);
  EXPECT_EQ(flatten(s.params), before);
}

TEST(Optimizer, FullspaceStepRegeneratesDirection) {
  Pinn P;
  MlpParams p = P.params;
  const Vec before = flatten(p);
  const StepRecord rec = fullspace_zo_step(p, P.obj, P.cfg, 4);
  MlpParams z = P.params;
  for (auto& L : z.layers) {
    L.W.setZero();
    L.bias.setZero();
  }
  detail::add_fullspace_direction(z, P.cfg.master, 4, 1.0);
  const Vec expected = before - rec.alpha * rec.delta_hat * flatten(z);
  EXPECT_LT((flatten(p) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Optimizer, ResumeIsBitwise) {
  Pinn P;
  P.cfg.steps = 27;
  TrainState full = make_train_state(P.params, P.cfg);
  const auto h_full = train(full, P.obj, P.cfg);

  SdzeConfig first = P.cfg;
  first.steps = 13;
  TrainState part = make_train_state(P.params, first);
  train(part, P.obj, first);
  TrainState resumed = make_train_state(part.params, P.cfg, part.step);
  const auto h_rest = train(resumed, P.obj, P.cfg);

  EXPECT_EQ(flatten(resumed.params), flatten(full.params));
  ASSERT_EQ(h_rest.size(), 14u);
  EXPECT_EQ(h_rest.back().delta_hat, h_full.back().delta_hat);
}

TEST(Optimizer, TrainingReducesLoss) {
  Pinn P(6, 2);
  P.cfg.lr.alpha = 5e-3;
  P.cfg.steps = 400;
  TrainState s = make_train_state(P.params, P.cfg);
  const auto h = train(s, P.obj, P.cfg);
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    early += h[i].loss_plus;
    late += h[h.size() - 1 - i].loss_plus;
  }
  EXPECT_LT(late, early);
}

TEST(Optimizer, NaiveDrawsIndependentPoints) {
  Pinn P(6, 6);
  const auto a = P.obj.draw(3, 0);
  const auto b = P.obj.draw(3, 1);
  EXPECT_EQ(a.omega.I1, b.omega.I1);
  EXPECT_NE(*a.omega.points(), *b.omega.points());
  P.obj.naive_shares_points = true;
  EXPECT_EQ(*P.obj.draw(3, 1).omega.points(), *a.omega.points());
}

TEST(CrnsSweep, LockedFlatNaiveGrowsLikeInverseEpsSquared) {
  Pinn P(20, 2, 43);
  const TrainState s = make_train_state(P.params, P.cfg);
  const CrnsSweep sw = crns_variance_sweep(s, P.obj, P.cfg, {1e-2, 1e-3, 1e-4, 1e-5}, 200);
  ASSERT_EQ(sw.rows.size(), 8u);
  EXPECT_GT(sw.slope_crns, -0.3);
  EXPECT_LT(sw.slope_crns, 0.3);
  EXPECT_GE(sw.slope_naive, -2.2);
  EXPECT_LE(sw.slope_naive, -1.8);
  EXPECT_GE(sw.rows[5].variance / sw.rows[1].variance, 1e3);  // eps = 1e-3
}
