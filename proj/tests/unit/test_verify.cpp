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

#include "sdze/verify.hpp"

using namespace sdze;

namespace {

Mat random_spd(Index n, std::uint64_t seed) {
  RngStream s = derive_stream({seed, Role::init_weights, 900, 0});
  Mat A(n, n);
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = s.normal();
  return A * A.transpose() / static_cast<double>(n) + Mat::Identity(n, n);
}

Vec random_vec(Index n, std::uint64_t seed) {
  RngStream s = derive_stream({seed, Role::init_weights, 901, 0});
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = s.normal();
  return v;
}

}  // namespace

TEST(BruteForce, Examples) {
  const Vec g = brute_force_gradient([](const Vec& x) { return x.squaredNorm(); }, Vec{{1.0, 2.0}});
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
  const Vec h = brute_force_gradient([](const Vec& x) { return x[0] * x[1]; }, Vec{{3.0, -5.0}});
  EXPECT_NEAR(h[0], -5.0, 1e-8);
  EXPECT_NEAR(h[1], 3.0, 1e-8);
}

TEST(BruteForce, NonFiniteNamesCoordinate) {
  try {
    brute_force_gradient([](const Vec& x) { return x[1] > 0.5 ? std::log(-1.0) : 0.0; }, Vec{{0.0, 0.5, 0.0}});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
  EXPECT_THROW(brute_force_gradient([](const Vec&) { return 0.0; }, Vec::Zero(10001)), InvalidArgument);
}

TEST(Flatten, RoundTrip) {
  const std::vector<Index> w{3, 4, 1};
  MlpParams p = init_params(5, w, {Activation::sin, 1.0}, true);
  p.layers[0].bias[2] = 0.25;
  const Vec v = flatten(p);
  EXPECT_EQ(v.size(), 3 * 4 + 4 + 4 + 1);
  EXPECT_EQ(v[12 + 2], 0.25);
  MlpParams q = p;
  for (auto& L : q.layers) L.W.setZero();
  unflatten(v, q);
  EXPECT_EQ(flatten(q), v);
}

TEST(Projection, OrthonormalAndMatchesUpdate) {
  const SubspaceFixture f = SubspaceFixture::make({{12, 3}, {4, 4}, {2, 8}}, 2, 31);
  EXPECT_LT((f.P.transpose() * f.P - Mat::Identity(f.q(), f.q())).cwiseAbs().maxCoeff(), 1e-12);
  const Perturbation z = sample_perturbation(31, 3, f.params, f.subs);
  MlpParams moved = f.params;
  for (std::size_t l = 0; l < moved.depth(); ++l) apply_rank_r_update(moved.layers[l].W, f.subs[l], z.cores[l], 1.0);
  EXPECT_LT((flatten(moved) - f.P * flatten_perturbation(z)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Quadratic, IdentitySingleLayer) {
  const SubspaceFixture f = SubspaceFixture::make({{2, 4}}, 2, 7);
  ASSERT_EQ(f.q(), 4);
  const Vec theta = random_vec(8, 7);
  const QuadraticCheck c = quadratic_identity_check(Mat::Identity(8, 8), theta, f, 100000, 7);
  for (const auto& r : c.reports) EXPECT_TRUE(r.pass) << r.quantity << " deviation " << r.deviation;
  EXPECT_GE(c.reports[2].empirical, 0.225);
  EXPECT_LE(c.reports[2].empirical, 0.275);
}

TEST(Quadratic, IdentityFourLayers) {
  const SubspaceFixture f = SubspaceFixture::make({{4, 4}, {4, 4}, {4, 4}, {4, 4}}, 2, 8);
  ASSERT_EQ(f.q(), 16);
  const QuadraticCheck c = quadratic_identity_check(random_spd(64, 8), random_vec(64, 8), f, 100000, 8);
  for (const auto& r : c.reports) EXPECT_TRUE(r.pass) << r.quantity << " deviation " << r.deviation;
}

TEST(Quadratic, OrthogonalGradientGivesZeroMean) {
  const SubspaceFixture f = SubspaceFixture::make({{2, 4}}, 2, 9);
  const Mat H = random_spd(8, 9);
  const Vec w = random_vec(8, 9);
  const Vec g_perp = w - f.P * (f.P.transpose() * w);
  const Vec theta = H.ldlt().solve(g_perp) / 2.0;  // grad = 2 H theta = g_perp
  const QuadraticCheck c = quadratic_identity_check(H, theta, f, 2000, 9);
  EXPECT_LT(c.reports[0].empirical, 1e-8 * g_perp.norm());
}

TEST(Quadratic, RejectsOversizedSubspace) {
  SubspaceFixture f = SubspaceFixture::make({{2, 4}}, 2, 10);
  f.P = Mat::Zero(8, 9);
  EXPECT_THROW(quadratic_identity_check(Mat::Identity(8, 8), Vec::Zero(8), f, 10, 10), InvalidArgument);
}

TEST(MeanBias, QuadraticHasNoBias) {
  const SubspaceFixture f = SubspaceFixture::make({{4, 4}}, 2, 11);
  const MeanBiasCheck c = mean_bias_check(random_vec(16, 11), f, {1e-1, 1e-2}, 2000, 11, true);
  for (const auto& row : c.rows) EXPECT_LT(row.deviation_mc, 1e-9);
}

TEST(MeanBias, QuarticShrinksLikeEpsSquared) {
  const SubspaceFixture f = SubspaceFixture::make({{4, 4}, {4, 4}}, 2, 12);
  const MeanBiasCheck c = mean_bias_check(random_vec(32, 12), f, {2e-2, 1e-2, 5e-3}, 20000, 12);
  for (const auto& r : c.reports) EXPECT_TRUE(r.pass) << r.quantity << " " << r.empirical;
  for (const auto& row : c.rows) EXPECT_NEAR(row.deviation_mc / row.deviation_exact, 1.0, 0.1);

  const MeanBiasCheck decade = mean_bias_check(random_vec(32, 12), f, {1e-2, 1e-3}, 20000, 12);
  EXPECT_NEAR(decade.rows[0].deviation_mc / decade.rows[1].deviation_mc, 100.0, 10.0);
}

TEST(VarianceLaw, FourthPointMatches) {
  const TermTable tab = term_table(TinyPinn::make(21, 4, 3, 4));
  const VarianceLawFit fit = variance_law_check(tab);
  EXPECT_GT(fit.v11, 0.0);
  EXPECT_TRUE(fit.report.pass) << fit.report.deviation;
}

TEST(VarianceLaw, SingleTermIgnoresTermBatch) {
  const TermTable tab = term_table(TinyPinn::make(22, 4, 3, 1));
  const VarianceLawFit fit = variance_law_check(tab);
  EXPECT_NEAR(fit.v12, fit.v11, 1e-12 * fit.v11);
  EXPECT_NEAR(fit.v22, fit.v21, 1e-12 * fit.v21);
}

TEST(VarianceLaw, AliasedTermsRemoveTermVariance) {
  const TermTable tab = term_table(TinyPinn::make(23, 4, 3, 4, true));
  const VarianceLawFit fit = variance_law_check(tab);
  EXPECT_LT(std::abs(fit.C2), 1e-10 * fit.C1);
  EXPECT_TRUE(fit.report.pass);
}

TEST(VarianceLaw, EnumerationTooLarge) {
  const TermTable tab = term_table(TinyPinn::make(24, 4, 3, 4));
  EXPECT_THROW(enumerate_moments(tab, 8, 8), InvalidArgument);
}

TEST(Unbiasedness, EnumeratedMeanIsFullBatch) {
  const TermTable tab = term_table(TinyPinn::make(25, 4, 3, 4));
  const IdentityReport r = unbiasedness_check(tab);
  EXPECT_TRUE(r.pass) << r.deviation;
}

TEST(Unbiasedness, FullBatchSetsGiveFullGradient) {
  const TermTable tab = term_table(TinyPinn::make(26, 4, 3, 4));
  const Vec g = sampled_gradient(tab, {0, 1, 2}, {0, 1, 2, 3});
  EXPECT_LT((g - full_batch_gradient(tab)).cwiseAbs().maxCoeff(), 1e-15 * g.cwiseAbs().maxCoeff() + 1e-300);
}

TEST(Unbiasedness, TwoTermsAverage) {
  const TermTable tab = term_table(TinyPinn::make(27, 3, 3, 2));
  const Vec g0 = sampled_gradient(tab, {0, 1, 2}, {0});
  const Vec g1 = sampled_gradient(tab, {0, 1, 2}, {1});
  const Vec g = full_batch_gradient(tab);
  EXPECT_LT(((g0 + g1) / 2.0 - g).cwiseAbs().maxCoeff(), 1e-14 * g.cwiseAbs().maxCoeff());
}

TEST(Slope, LogLogFit) {
  EXPECT_NEAR(loglog_slope({1e-1, 1e-2, 1e-3}, {1e2, 1e4, 1e6}), -2.0, 1e-12);
}

TEST(Equivalence, RandomCasesIncludeSplits) {
  const EquivalenceCheck c = implicit_equivalence_check(24, 300);
  EXPECT_TRUE(c.report.pass) << c.report.deviation;
  std::size_t split = 0;
  for (const auto& ec : c.cases) split += ec.max_split > 1;
  EXPECT_GE(split, 5u);
}

TEST(Orthogonality, AfterEveryRefresh) {
  const IdentityReport r = orthogonality_check({{100, 128}, {128, 128}, {128, 1}, {12, 3}}, 16, 5, 4);
  EXPECT_TRUE(r.pass) << r.deviation;
}

TEST(JetCheck, CentralDifferences) {
  const IdentityReport r = jet_fd_check(77, 6);
  EXPECT_TRUE(r.pass) << r.deviation;
}

TEST(Manufactured, ResidualVanishes) {
  const IdentityReport r = manufactured_residual_check(78, 6, 50);
  EXPECT_TRUE(r.pass) << r.deviation;
}
