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

// PDE problems on the unit ball, the subsampled spatial operator and the
// doubly-sampled scalar loss.
//
// The operator is L u = sum_i d^2u/dx_i^2 + N(u); only the Laplacian terms
// are subsampled. The manufactured solutions are
//   two_body:   (1 - |x|^2) sum_{i<d-1} c_i exp(x_i x_{i+1})
//   three_body: (1 - |x|^2) sum_{i<d-2} c_i exp(x_i x_{i+1} x_{i+2})
// and f = L u_exact is evaluated in closed form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdze/alloc.hpp"
#include "sdze/jets.hpp"
#include "sdze/net.hpp"
#include "sdze/rng.hpp"

namespace sdze {

enum class PdeKind { poisson, allen_cahn, sine_gordon };
enum class SolutionKind { two_body, three_body };
enum class Normalization { raw, dim_normalized };

inline PdeKind parse_pde_kind(std::string_view s) {
  if (s == "poisson") return PdeKind::poisson;
  if (s == "allen_cahn") return PdeKind::allen_cahn;
  if (s == "sine_gordon") return PdeKind::sine_gordon;
  throw ConfigError("unknown pde.kind '" + std::string(s) + "' (expected poisson, allen_cahn or sine_gordon)");
}

inline SolutionKind parse_solution(std::string_view s) {
  if (s == "two_body") return SolutionKind::two_body;
  if (s == "three_body") return SolutionKind::three_body;
  throw ConfigError("unknown pde.solution '" + std::string(s) + "' (expected two_body or three_body)");
}

inline Normalization parse_normalization(std::string_view s) {
  if (s == "raw") return Normalization::raw;
  if (s == "dim_normalized") return Normalization::dim_normalized;
  throw ConfigError("unknown pde.normalization '" + std::string(s) + "' (expected raw or dim_normalized)");
}

struct PdeProblem {
  Index dim = 2;
  PdeKind kind = PdeKind::poisson;
  SolutionKind solution = SolutionKind::two_body;
  Normalization normalization = Normalization::raw;
  std::vector<double> coeffs;  // c_i, one per interaction term

  Index terms() const { return dim; }  // N_L
  Index span() const { return solution == SolutionKind::two_body ? 2 : 3; }

  double nonlinearity(double u) const {
    switch (kind) {
      case PdeKind::poisson: return 0.0;
      case PdeKind::allen_cahn: return u - u * u * u;
      case PdeKind::sine_gordon: return std::sin(u);
    }
    return 0.0;
  }

  double kappa() const {
    const auto nl = static_cast<double>(terms());
    return normalization == Normalization::raw ? 1.0 : nl * nl;
  }
};

inline PdeProblem make_problem(std::uint64_t master, PdeKind kind, Index dim, SolutionKind solution,
                               Normalization norm = Normalization::raw) {
  PdeProblem p;
  p.dim = dim;
  p.kind = kind;
  p.solution = solution;
  p.normalization = norm;
  if (dim < p.span())
    throw InvalidArgument(std::string(solution == SolutionKind::two_body ? "two_body" : "three_body") +
                          " solution requires d >= " + std::to_string(p.span()));
  RngStream s = derive_stream({master, Role::solution_coeffs, 0, 0});
  p.coeffs.resize(static_cast<std::size_t>(dim - p.span() + 1));
  for (double& c : p.coeffs) c = s.normal();
  return p;
}

// x = U^{1/d} g / |g|.
inline TrackedMat sample_unit_ball(RngStream& stream, Index B, Index d) {
  if (B < 1 || d < 1) throw InvalidArgument("sample_unit_ball: B and d must be >= 1");
  TrackedMat X(B, d);
  for (Index p = 0; p < B; ++p) {
    double n2 = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double g = stream.normal();
      (*X)(p, i) = g;
      n2 += g * g;
    }
    const double rho = std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
    X->row(p) *= rho / std::sqrt(n2);
  }
  return X;
}

namespace detail {

inline double interaction(const PdeProblem& p, const double* x, Index i) {
  double prod = x[i] * x[i + 1];
  if (p.solution == SolutionKind::three_body) prod *= x[i + 2];
  return prod;
}

// Sum of c_i exp(...) as a jet along e_j, given the full-sum value S.
inline Jet2 interaction_jet(const PdeProblem& p, const double* x, Index j, double S) {
  const Index w = p.span();
  const Index n_terms = static_cast<Index>(p.coeffs.size());
  Jet2 local{};
  double local_value = 0.0;
  for (Index i = std::max<Index>(0, j - w + 1); i <= std::min(j, n_terms - 1); ++i) {
    Jet2 prod = Jet2::constant(1.0);
    for (Index a = i; a < i + w; ++a) prod = prod * (a == j ? Jet2::variable(x[a]) : Jet2::constant(x[a]));
    const Jet2 term = p.coeffs[static_cast<std::size_t>(i)] * exp(prod);
    local = local + term;
    local_value += term.value;
  }
  return {S - local_value + local.value, local.d1, local.d2};
}

inline double interaction_sum(const PdeProblem& p, const double* x) {
  double S = 0.0;
  for (std::size_t i = 0; i < p.coeffs.size(); ++i) S += p.coeffs[i] * std::exp(interaction(p, x, static_cast<Index>(i)));
  return S;
}

}  // namespace detail

inline double exact_solution(const PdeProblem& p, const Eigen::Ref<const RowVec>& x) {
  if (x.size() != p.dim) throw InvalidArgument("exact_solution: point dimension mismatch");
  const RowVec xc = x;
  return boundary_factor(xc) * detail::interaction_sum(p, xc.data());
}

// Jet of u_exact along e_j.
inline Jet2 exact_jet(const PdeProblem& p, const RowVec& x, Index j) {
  const double S = detail::interaction_sum(p, x.data());
  const Jet2 s = detail::interaction_jet(p, x.data(), j, S);
  const Jet2 phi{boundary_factor(x), -2.0 * x[j], -2.0};
  return phi * s;
}

inline double rhs_eval(const PdeProblem& p, const Eigen::Ref<const RowVec>& x) {
  if (x.size() != p.dim) throw InvalidArgument("rhs_eval: point dimension mismatch");
  const RowVec xc = x;
  const double S = detail::interaction_sum(p, xc.data());
  const double phi = boundary_factor(xc);
  double lap = 0.0;
  for (Index j = 0; j < p.dim; ++j) {
    const Jet2 s = detail::interaction_jet(p, xc.data(), j, S);
    const Jet2 phij{phi, -2.0 * xc[j], -2.0};
    lap += (phij * s).d2;
  }
  return lap + p.nonlinearity(phi * S);
}

// Values u and pure second derivatives d2 (B * k, row p * k + j) of a field
// at a batch of points along the listed coordinates.
struct FieldJets {
  Vec u;
  Vec d2;
  Index directions = 0;
};

struct NetworkField {
  PerturbView view;
  FieldJets operator()(const Mat& X, std::span<const Index> dims) const {
    AnsatzJets j = ansatz_jets(view, X, dims);
    return {std::move(j.u), std::move(j.d2), j.directions};
  }
};

struct ExactField {
  const PdeProblem* problem;
  FieldJets operator()(const Mat& X, std::span<const Index> dims) const {
    const auto k = static_cast<Index>(dims.size());
    FieldJets out{Vec(X.rows()), Vec(X.rows() * k), k};
    for (Index b = 0; b < X.rows(); ++b) {
      const RowVec x = X.row(b);
      out.u[b] = exact_solution(*problem, x);
      for (Index j = 0; j < k; ++j) out.d2[b * k + j] = exact_jet(*problem, x, dims[static_cast<std::size_t>(j)]).d2;
    }
    return out;
  }
};

template <class F>
concept Field = requires(const F& f, const Mat& X, std::span<const Index> dims) {
  { f(X, dims) } -> std::same_as<FieldJets>;
};

// (N_L / |I|) sum_{i in I} d2u/dx_i^2 + N(u) at one point. I may repeat
// indices (with-replacement draws count each occurrence).
template <Field F>
double sampled_operator(const F& field, const PdeProblem& problem, const RowVec& x, std::span<const Index> I) {
  if (I.empty()) throw InvalidArgument("sampled_operator: empty index set");
  const Mat X = x;
  const FieldJets j = field(X, I);
  double lap = 0.0;
  for (Index q = 0; q < j.directions; ++q) lap += j.d2[q];
  return static_cast<double>(problem.terms()) / static_cast<double>(I.size()) * lap + problem.nonlinearity(j.u[0]);
}

inline double sampled_operator(const PerturbView& view, const PdeProblem& problem, const RowVec& x,
                               std::span<const Index> I) {
  return sampled_operator(NetworkField{view}, problem, x, I);
}

// One draw of omega = (points, I1, I2). Points are regenerated from
// (master, collocation, step, point_variant) on every use; the index sets
// are keyed by (step, variant).
struct SpatialSample {
  std::uint64_t master = 0;
  std::uint64_t step = 0;
  std::uint64_t variant = 0;
  Index B = 1;
  Index d = 1;
  std::vector<Index> I1;
  std::vector<Index> I2;
  std::uint64_t point_variant = 0;

  StreamKey collocation_key() const { return {master, Role::collocation, step, point_variant}; }
  StreamKey dim_set_key(int which) const {
    return {master, which == 1 ? Role::dim_set_1 : Role::dim_set_2, step, variant};
  }

  TrackedMat points() const {
    PhaseScope phase(Phase::sampling);
    RngStream s = derive_stream(collocation_key());
    return sample_unit_ball(s, B, d);
  }

  friend bool operator==(const SpatialSample&, const SpatialSample&) = default;
};

inline SpatialSample draw_spatial_sample(std::uint64_t master, std::uint64_t step, std::uint64_t variant, Index B,
                                         Index d, Index b, bool with_replacement = false,
                                         std::uint64_t point_variant = 0) {
  SpatialSample s{master, step, variant, B, d, {}, {}, point_variant};
  RngStream s1 = derive_stream(s.dim_set_key(1));
  RngStream s2 = derive_stream(s.dim_set_key(2));
  s.I1 = sample_index_set(s1, d, b, with_replacement);
  s.I2 = sample_index_set(s2, d, b, with_replacement);
  std::sort(s.I1.begin(), s.I1.end());
  std::sort(s.I2.begin(), s.I2.end());
  return s;
}

inline Vec rhs_batch(const PdeProblem& p, const Mat& X) {
  Vec f(X.rows());
  for (Index b = 0; b < X.rows(); ++b) f[b] = rhs_eval(p, X.row(b));
  return f;
}

namespace detail {

inline std::vector<Index> merged_dims(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> u(a);
  u.insert(u.end(), b.begin(), b.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

inline double subsampled_laplacian(const FieldJets& j, Index point, const std::vector<Index>& I,
                                   const std::vector<Index>& uni) {
  double lap = 0.0;
  for (Index i : I) {
    const auto pos = std::lower_bound(uni.begin(), uni.end(), i) - uni.begin();
    lap += j.d2[point * j.directions + pos];
  }
  return lap;
}

}  // namespace detail

// l = 1/(2 B kappa) sum_n (L_I1 u(x_n) - f_n)(L_I2 u(x_n) - f_n). `rhs`
// holds f at the sample's points (pass an empty vector to compute it).
template <Field F>
double stochastic_loss(const F& field, const PdeProblem& problem, const SpatialSample& sample, const Vec& rhs = {}) {
  if (sample.d != problem.dim) throw InvalidArgument("stochastic_loss: sample dimension mismatch");
  if (sample.I1.empty() || sample.I2.empty()) throw InvalidArgument("stochastic_loss: empty index set");
  const TrackedMat X = sample.points();
  const Vec f = rhs.size() == sample.B ? rhs : rhs_batch(problem, *X);
  const std::vector<Index> uni = detail::merged_dims(sample.I1, sample.I2);
  const FieldJets j = field(*X, uni);
  const double nl = static_cast<double>(problem.terms());
  const double s1 = nl / static_cast<double>(sample.I1.size());
  const double s2 = nl / static_cast<double>(sample.I2.size());
  double acc = 0.0;
  for (Index n = 0; n < sample.B; ++n) {
    const double nonlin = problem.nonlinearity(j.u[n]);
    const double r1 = s1 * detail::subsampled_laplacian(j, n, sample.I1, uni) + nonlin - f[n];
    const double r2 = s2 * detail::subsampled_laplacian(j, n, sample.I2, uni) + nonlin - f[n];
    acc += r1 * r2;
  }
  return acc / (2.0 * static_cast<double>(sample.B) * problem.kappa());
}

inline double stochastic_loss(const PerturbView& view, const PdeProblem& problem, const SpatialSample& sample,
                              const Vec& rhs = {}) {
  return stochastic_loss(NetworkField{view}, problem, sample, rhs);
}

inline double relative_l2(std::span<const double> approx, std::span<const double> exact) {
  if (approx.size() != exact.size()) throw InvalidArgument("relative_l2: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    num += (approx[i] - exact[i]) * (approx[i] - exact[i]);
    den += exact[i] * exact[i];
  }
  if (den == 0.0) throw DegenerateMetric("relative_l2: exact solution is zero on every test point");
  return std::sqrt(num / den);
}

// sqrt(sum (u_theta - u_exact)^2 / sum u_exact^2) over N_test ball points
// regenerated from test_key, evaluated in chunks.
inline double relative_l2(const MlpParams& params, const PdeProblem& problem, const StreamKey& test_key, Index N_test) {
  if (N_test < 1) throw InvalidArgument("relative_l2: N_test must be >= 1");
  RngStream s = derive_stream(test_key);
  constexpr Index kChunk = 1024;
  double num = 0.0, den = 0.0;
  const PerturbView view = PerturbView::plain(params);
  for (Index start = 0; start < N_test; start += kChunk) {
    const Index n = std::min(kChunk, N_test - start);
    const TrackedMat X = sample_unit_ball(s, n, problem.dim);
    const Vec u = ansatz(view, *X);
    for (Index b = 0; b < n; ++b) {
      const double ue = exact_solution(problem, X->row(b));
      num += (u[b] - ue) * (u[b] - ue);
      den += ue * ue;
    }
  }
  if (den == 0.0) throw DegenerateMetric("relative_l2: exact solution is zero on every test point");
  return std::sqrt(num / den);
}

// Welford accumulator; merge() combines partial results.
class RunningMoments {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  void merge(const RunningMoments& o) {
    if (o.n_ == 0) return;
    const auto n = n_ + o.n_;
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / static_cast<double>(n);
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / static_cast<double>(n);
    n_ = n;
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? std::max(0.0, m2_ / static_cast<double>(n_ - 1)) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct NoiseDiagnostics {
  RunningMoments loss;
  RunningMoments delta_hat;
};

}  // namespace sdze
