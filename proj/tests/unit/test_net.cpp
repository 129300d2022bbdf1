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

#include "sdze/net.hpp"
#include "sdze/oracle.hpp"

using namespace sdze;

namespace {

struct NetCase {
  MlpParams params;
  std::vector<LayerSubspace> subs;
  Perturbation pert;
};

NetCase make_setup(std::vector<Index> widths, Index r, std::uint64_t seed, bool bias = false,
                 ActivationSpec act = {Activation::sin, 1.0}) {
  NetCase s;
  s.params = init_params(seed, widths, act, bias);
  if (bias) {
    RngStream b = derive_stream({seed, Role::init_weights, 99, 0});
    for (auto& L : s.params.layers)
      for (Index j = 0; j < L.bias.size(); ++j) L.bias[j] = 0.3 * b.normal();
  }
  s.subs = make_subspaces(s.params, r);
  for (std::size_t l = 0; l < s.subs.size(); ++l) refresh_layer(s.subs[l], seed, 0, l);
  s.pert = sample_perturbation(seed, 1, s.params, s.subs);
  return s;
}

Mat ball_points(std::uint64_t seed, Index B, Index d) {
  RngStream s = derive_stream({seed, Role::test_points, 0, 0});
  Mat X = gaussian_matrix(s, B, d);
  for (Index b = 0; b < B; ++b) X.row(b) *= 0.9 * s.uniform() / X.row(b).norm();
  return X;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Net, UnperturbedViewsMatchPlainForwardExactly) {
  NetCase s = make_setup({6, 5, 1}, 2, 31, true);
  const Mat X = ball_points(31, 7, 6);
  const Vec plain = forward(PerturbView::plain(s.params), X);
  const Vec zero_sign = forward({&s.params, &s.subs, &s.pert, 0, 1e-3}, X);
  EXPECT_EQ(plain, zero_sign);
  const Perturbation none = Perturbation::zeros(s.params, s.subs);
  const Vec zero_core = forward({&s.params, &s.subs, &none, +1, 1e-3}, X);
  EXPECT_EQ(plain, zero_core);
  EXPECT_THROW(forward(PerturbView::plain(s.params), Mat::Zero(2, 5)), InvalidArgument);
}

TEST(Net, ImplicitForwardAndJetsMatchExplicitDelta) {
  const std::vector<std::vector<Index>> shapes = {{6, 5, 1}, {12, 3, 1}, {3, 12, 4, 1}, {20, 8, 8, 1}, {6, 8, 1}};
  for (std::size_t c = 0; c < shapes.size(); ++c) {
    for (bool bias : {false, true}) {
      NetCase s = make_setup(shapes[c], 2, 40 + c, bias);
      const Index d = shapes[c].front();
      const Mat X = ball_points(40 + c, 4, d);
      for (int sign : {+1, -1}) {
        const PerturbView v{&s.params, &s.subs, &s.pert, sign, 0.05};
        const MlpParams dense = oracle::perturbed_params(v);
        const Vec g = forward(v, X);
        for (Index b = 0; b < X.rows(); ++b) EXPECT_LE(rel(g[b], oracle::net_value(dense, X.row(b))), 1e-12);
        std::vector<Index> dims{0, d - 1, d / 2};
        const AnsatzJets j = ansatz_jets(v, X, dims);
        for (Index b = 0; b < X.rows(); ++b)
          for (Index q = 0; q < 3; ++q) {
            const Jet2 o = oracle::ansatz_jet(dense, X.row(b), dims[static_cast<std::size_t>(q)]);
            EXPECT_LE(rel(j.u[b], o.value), 1e-10);
            EXPECT_LE(rel(j.d1[b * 3 + q], o.d1), 1e-10);
            EXPECT_LE(rel(j.d2[b * 3 + q], o.d2), 1e-10);
          }
      }
    }
  }
}

TEST(Net, AnsatzHardensTheBoundary) {
  NetCase s = make_setup({3, 4, 1}, 1, 50);
  Mat X(3, 3);
  X << 1, 0, 0, 0, 0, 0, 0.2, -0.1, 0.3;
  const PerturbView v = PerturbView::plain(s.params);
  const Vec u = ansatz(v, X);
  const Vec g = forward(v, X);
  EXPECT_EQ(u[0], 0.0);
  EXPECT_EQ(u[1], g[1]);
  EXPECT_EQ(u[2], (1.0 - X.row(2).squaredNorm()) * g[2]);
}

TEST(Net, ConstantNetworkCurvatureIsMinusTwoC) {
  NetCase s = make_setup({4, 3, 1}, 1, 51, true);
  s.params.layers[1].W.setZero();
  s.params.layers[1].bias[0] = 1.75;
  const Mat X = Mat::Zero(1, 4);
  const Index dims[] = {0, 1, 2, 3};
  const AnsatzJets j = ansatz_jets(PerturbView::plain(s.params), X, dims);
  for (Index q = 0; q < 4; ++q) EXPECT_EQ(j.d2[q], -3.5);
}

TEST(Net, AnsatzJetsMatchCentralDifferences) {
  for (ActivationSpec act : {ActivationSpec{Activation::sin, 1.0}, ActivationSpec{Activation::tanh_scaled, 1.0}}) {
    NetCase s = make_setup({5, 7, 6, 1}, 2, 52, true, act);
    const PerturbView v = PerturbView::plain(s.params);
    const Mat X = ball_points(52, 3, 5);
    const double h = 1e-4;
    for (Index b = 0; b < 3; ++b)
      for (Index i = 0; i < 5; ++i) {
        const Index dims[] = {i};
        const AnsatzJets j = ansatz_jets(v, X.row(b), dims);
        Mat P(3, 5);
        P.row(0) = X.row(b);
        P.row(1) = X.row(b);
        P.row(2) = X.row(b);
        P(1, i) += h;
        P(2, i) -= h;
        const Vec u = ansatz(v, P);
        const double fd1 = (u[1] - u[2]) / (2 * h);
        const double fd2 = (u[1] - 2 * u[0] + u[2]) / (h * h);
        EXPECT_LE(std::abs(j.d1[0] - fd1), 1e-6 * std::max(1.0, std::abs(fd1)));
        EXPECT_LE(std::abs(j.d2[0] - fd2), 1e-6 * std::max(1.0, std::abs(fd2)));
      }
    const Index bad[] = {5};
    EXPECT_THROW(ansatz_jets(v, X, bad), InvalidArgument);
  }
}

TEST(Net, SharedPrimalAndTemporaryBound) {
  NetCase s = make_setup({60, 16, 16, 1}, 4, 53);
  const Index B = 8, b = 5;
  const Mat X = ball_points(53, B, 60);
  const std::vector<Index> dims{1, 7, 22, 40, 59};
  AllocationLedger ledger;
  LedgerScope scope(ledger);
  const PerturbView v{&s.params, &s.subs, &s.pert, +1, 1e-3};
  ansatz_jets(v, X, dims);
  EXPECT_EQ(ledger.primal_layer_evals(), s.params.depth());
  Index k_max = 1, r_max = 1;
  for (const auto& sub : s.subs) {
    k_max = std::max(k_max, sub.plan.k);
    r_max = std::max(r_max, sub.rank);
  }
  const auto bound = static_cast<std::size_t>(std::max(B * (1 + b) * 16, B * k_max * r_max));
  EXPECT_LE(ledger.largest_buffer(), bound);
  ledger.reset();
  forward(v, X);
  EXPECT_LE(ledger.largest_buffer(), bound);
}

TEST(Net, DerivativeBoundMonitor) {
  MlpParams lin;
  lin.act = {Activation::sin, 1.0};
  lin.layers.push_back({Mat(3, 1), {}});
  lin.layers[0].W << 0.5, -2.0, 1.0;
  const RowVec x = RowVec::Constant(3, 0.1);
  const DerivativeBound b1 = derivative_bound_monitor(lin, x, 1);
  EXPECT_NEAR(b1.observed, std::sqrt(5.25), 1e-14);
  EXPECT_NEAR(b1.bound, std::sqrt(5.25), 1e-12);
  EXPECT_TRUE(b1.holds());

  NetCase s = make_setup({8, 6, 5, 1}, 1, 54);
  for (auto& L : s.params.layers) L.W *= 3.0;  // every spectral norm above 1
  RngStream g = derive_stream({54, Role::test_points, 0, 0});
  const RowVec p = gaussian_matrix(g, 1, 8).row(0) * 0.2;
  for (int n : {1, 2}) {
    const DerivativeBound a = derivative_bound_monitor(s.params, p, n);
    EXPECT_TRUE(a.holds()) << "order " << n;
    MlpParams big = s.params;
    for (auto& L : big.layers) L.W *= 10.0;
    const DerivativeBound c = derivative_bound_monitor(big, p, n);
    EXPECT_TRUE(c.holds());
    // M(L) * prod_{l<L} M(l)^n picks up 10^{1 + (L-1) n}
    EXPECT_NEAR(c.bound / a.bound, std::pow(10.0, 1 + 2 * n), 1e-6 * std::pow(10.0, 1 + 2 * n));
  }
}
