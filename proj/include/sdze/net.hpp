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

// The ansatz network: x -> (1 - |x|^2) g(x), with g a plain MLP in the
// row-vector convention H_l = sigma(H_{l-1} W_l + b_l) and a linear scalar
// output layer. Optional per-layer biases live beside the weights.
//
// Perturbed evaluation adds sign * eps * T^{-1}(U Z V^T) to each weight (and
// sign * eps * z_b to each bias) without materializing anything weight-sized.

#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdze/alloc.hpp"
#include "sdze/jets.hpp"
#include "sdze/rng.hpp"
#include "sdze/subspace.hpp"

namespace sdze {

struct Layer {
  Mat W;         // m_{l-1} x m_l
  RowVec bias;   // m_l, or empty when biases are off
};

struct MlpParams {
  std::vector<Layer> layers;
  ActivationSpec act;

  Index input_dim() const { return layers.front().W.rows(); }
  std::size_t depth() const { return layers.size(); }
  bool has_bias() const { return !layers.empty() && layers.front().bias.size() > 0; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.bias.size());
    return n;
  }

  void validate() const {
    if (layers.empty()) throw InvalidArgument("MlpParams: no layers");
    const bool bias = has_bias();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.W.rows() < 1 || L.W.cols() < 1) throw InvalidArgument("MlpParams: empty layer " + std::to_string(l));
      if (bias != (L.bias.size() > 0)) throw InvalidArgument("MlpParams: biases must be on for all layers or none");
      if (bias && L.bias.size() != L.W.cols())
        throw InvalidArgument("MlpParams: bias size mismatch at layer " + std::to_string(l));
      if (l + 1 < layers.size() && L.W.cols() != layers[l + 1].W.rows())
        throw InvalidArgument("MlpParams: layer " + std::to_string(l) + " does not chain into the next");
    }
    if (layers.back().W.cols() != 1) throw InvalidArgument("MlpParams: output width must be 1");
  }
};

// widths = {d, h_1, ..., 1}. W_l ~ N(0, 1/m_{l-1}); biases start at zero.
inline MlpParams init_params(std::uint64_t master, std::span<const Index> widths, ActivationSpec act,
                             bool bias = false) {
  if (widths.size() < 2) throw InvalidArgument("init_params: need at least input and output widths");
  MlpParams p;
  p.act = act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    RngStream s = derive_stream({master, Role::init_weights, 0, l});
    Layer L;
    L.W = gaussian_matrix(s, widths[l], widths[l + 1]) / std::sqrt(static_cast<double>(widths[l]));
    if (bias) L.bias = RowVec::Zero(widths[l + 1]);
    p.layers.push_back(std::move(L));
  }
  p.validate();
  return p;
}

inline std::vector<LayerSubspace> make_subspaces(const MlpParams& p, std::span<const Index> ranks) {
  if (ranks.size() != p.depth()) throw InvalidArgument("make_subspaces: one rank per layer required");
  std::vector<LayerSubspace> out;
  for (std::size_t l = 0; l < p.depth(); ++l)
    out.push_back(make_subspace(p.layers[l].W.rows(), p.layers[l].W.cols(), ranks[l]));
  return out;
}

inline std::vector<LayerSubspace> make_subspaces(const MlpParams& p, Index rank) {
  std::vector<Index> ranks(p.depth(), rank);
  return make_subspaces(p, ranks);
}

struct Perturbation {
  std::vector<Mat> cores;        // r_l x r_l
  std::vector<RowVec> bias_dirs;  // m_l each, empty when biases are off

  static Perturbation zeros(const MlpParams& p, const std::vector<LayerSubspace>& subs) {
    Perturbation z;
    for (std::size_t l = 0; l < p.depth(); ++l) {
      z.cores.push_back(Mat::Zero(subs[l].rank, subs[l].rank));
      z.bias_dirs.push_back(RowVec::Zero(p.layers[l].bias.size()));
    }
    return z;
  }
};

// Core Z_l, then (when biases are on) the bias direction, from the stream
// (master, core_Z, t, l).
inline Perturbation sample_perturbation(std::uint64_t master, std::uint64_t t, const MlpParams& p,
                                        const std::vector<LayerSubspace>& subs) {
  Perturbation z;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    RngStream s = derive_stream({master, Role::core_Z, t, l});
    z.cores.push_back(sample_core(s, subs[l].rank));
    RowVec b(p.layers[l].bias.size());
    for (Index i = 0; i < b.size(); ++i) b[i] = s.normal();
    z.bias_dirs.push_back(std::move(b));
  }
  return z;
}

struct PerturbView {
  const MlpParams* params = nullptr;
  const std::vector<LayerSubspace>* subspaces = nullptr;
  const Perturbation* pert = nullptr;
  int sign = 0;
  double eps = 0.0;

  static PerturbView plain(const MlpParams& p) { return {&p, nullptr, nullptr, 0, 0.0}; }

  bool perturbed() const { return sign != 0 && pert != nullptr; }
  double scale() const { return static_cast<double>(sign) * eps; }
};

namespace detail {

inline void check_view(const PerturbView& v) {
  if (v.params == nullptr) throw InvalidArgument("PerturbView: no parameters");
  if (v.sign < -1 || v.sign > 1) throw InvalidArgument("PerturbView: sign must be -1, 0 or +1");
  if (v.perturbed()) {
    if (v.subspaces == nullptr || v.subspaces->size() != v.params->depth() || v.pert->cores.size() != v.params->depth())
      throw InvalidArgument("PerturbView: subspace/perturbation count does not match depth");
  }
}

// Adds bias (+ sign eps z_b) to every row of A.
inline void add_bias(const PerturbView& v, std::size_t l, Mat& A) {
  const Layer& L = v.params->layers[l];
  if (L.bias.size() == 0) return;
  if (v.perturbed()) {
    const RowVec b = L.bias + v.scale() * v.pert->bias_dirs[l];
    A.rowwise() += b;
  } else {
    A.rowwise() += L.bias;
  }
}

// A = H W_l (+ perturbation); pure linear part, no bias.
inline TrackedMat linear(const PerturbView& v, std::size_t l, const Mat& H) {
  const Layer& L = v.params->layers[l];
  TrackedMat A(H.rows(), L.W.cols());
  A->noalias() = H * L.W;
  if (v.perturbed()) contract_accumulate(H, (*v.subspaces)[l], v.pert->cores[l], v.scale(), *A);
  return A;
}

inline void activate(const ActivationSpec& act, Mat& A) {
  for (Index i = 0; i < A.size(); ++i) A.data()[i] = activation_eval(act, A.data()[i]).s;
}

}  // namespace detail

// Raw network g over a batch of points (B x d) -> B values.
inline Vec forward(const PerturbView& v, const Mat& X) {
  detail::check_view(v);
  const MlpParams& p = *v.params;
  if (X.cols() != p.input_dim())
    throw InvalidArgument("forward: input has " + std::to_string(X.cols()) + " columns, network expects " +
                          std::to_string(p.input_dim()));
  PhaseScope phase(Phase::forward);
  TrackedMat H = detail::linear(v, 0, X);
  for (std::size_t l = 0;; ++l) {
    detail::add_bias(v, l, *H);
    if (active_ledger()) active_ledger()->note_primal_layer();
    if (l + 1 == p.depth()) break;
    detail::activate(p.act, *H);
    H = detail::linear(v, l + 1, *H);
  }
  return H->col(0);
}

inline double boundary_factor(const Eigen::Ref<const RowVec>& x) { return 1.0 - x.squaredNorm(); }

inline Vec ansatz(const PerturbView& v, const Mat& X) {
  Vec g = forward(v, X);
  for (Index i = 0; i < X.rows(); ++i) g[i] *= boundary_factor(X.row(i));
  return g;
}

// Ansatz jets at B points along coordinate directions dims (k of them).
// d1, d2 are indexed p * k + j.
struct AnsatzJets {
  Vec u;
  Vec d1;
  Vec d2;
  Index directions = 0;
};

// Layer 1 is specialized: with seed (x, e_i, 0), the tangent after the first
// linear map is row i of the (perturbed) weight and the curvature plane is 0,
// so no (B k) x d seed block is ever formed.
inline AnsatzJets ansatz_jets(const PerturbView& v, const Mat& X, std::span<const Index> dims) {
  detail::check_view(v);
  const MlpParams& p = *v.params;
  const Index d = p.input_dim();
  if (X.cols() != d) throw InvalidArgument("ansatz_jets: input width mismatch");
  for (Index i : dims)
    if (i < 0 || i >= d)
      throw InvalidArgument("ansatz_jets: dimension index " + std::to_string(i) + " out of range for d=" +
                            std::to_string(d));
  const Index B = X.rows();
  const auto k = static_cast<Index>(dims.size());
  PhaseScope phase(Phase::jets);

  JetBatch J;
  J.directions = k;
  J.value = detail::linear(v, 0, X);
  detail::add_bias(v, 0, *J.value);
  if (active_ledger()) active_ledger()->note_primal_layer();
  {
    const Mat& W0 = p.layers[0].W;
    TrackedMat rows(k, W0.cols());
    for (Index j = 0; j < k; ++j) rows->row(j) = W0.row(dims[static_cast<std::size_t>(j)]);
    if (v.perturbed()) {
      TrackedMat dr = delta_rows((*v.subspaces)[0], v.pert->cores[0], dims);
      *rows += v.scale() * *dr;
    }
    J.d1 = TrackedMat(B * k, W0.cols());
    for (Index b = 0; b < B; ++b) J.d1->middleRows(b * k, k) = *rows;
    J.d2 = TrackedMat::zeros(B * k, W0.cols());
  }

  for (std::size_t l = 1; l < p.depth(); ++l) {
    jet_activation_inplace(p.act, J);
    JetBatch next;
    next.directions = k;
    next.value = detail::linear(v, l, *J.value);
    detail::add_bias(v, l, *next.value);
    if (active_ledger()) active_ledger()->note_primal_layer();
    next.d1 = detail::linear(v, l, *J.d1);
    next.d2 = detail::linear(v, l, *J.d2);
    J = std::move(next);
  }

  AnsatzJets out;
  out.directions = k;
  out.u.resize(B);
  out.d1.resize(B * k);
  out.d2.resize(B * k);
  for (Index b = 0; b < B; ++b) {
    const double phi = boundary_factor(X.row(b));
    const double g = (*J.value)(b, 0);
    out.u[b] = phi * g;
    for (Index j = 0; j < k; ++j) {
      const Index row = b * k + j;
      const double dphi = -2.0 * X(b, dims[static_cast<std::size_t>(j)]);
      const double g1 = (*J.d1)(row, 0);
      const double g2 = (*J.d2)(row, 0);
      out.d1[row] = phi * g1 + dphi * g;
      out.d2[row] = phi * g2 + 2.0 * dphi * g1 - 2.0 * g;
    }
  }
  return out;
}

// Raw-network derivative jets along every coordinate at one point, via the
// generic seed path (not the layer-1 shortcut).
inline JetBatch network_coordinate_jets(const MlpParams& p, const RowVec& x) {
  std::vector<Index> dims(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) dims[static_cast<std::size_t>(i)] = i;
  const Mat X = x;
  JetBatch J = coordinate_jet_seed(X, dims);
  for (std::size_t l = 0; l < p.depth(); ++l) {
    J = jet_linear(p.layers[l].W, J);
    if (p.layers[l].bias.size() > 0) J.value->rowwise() += p.layers[l].bias;
    if (l + 1 < p.depth()) jet_activation_inplace(p.act, J);
  }
  return J;
}

struct DerivativeBound {
  double observed = 0.0;
  double bound = 0.0;
  bool holds() const { return observed <= bound * (1.0 + 1e-12); }
};

inline double spectral_norm(const Mat& W) {
  const Eigen::MatrixXd dense = W;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
  return svd.singularValues()(0);
}

// Norm of the order-n coordinate derivatives of the raw network at x next to
// (n-1)! d^{n-1} (L-1)^{n-1} M(L) prod_{l<L} M(l)^n, M(l) = max(|W_l|_2, 1).
inline DerivativeBound derivative_bound_monitor(const MlpParams& p, const RowVec& x, int order) {
  if (order < 1 || order > 2) throw InvalidArgument("derivative_bound_monitor: order must be 1 or 2");
  const JetBatch J = network_coordinate_jets(p, x);
  const Mat& plane = order == 1 ? *J.d1 : *J.d2;
  DerivativeBound out;
  out.observed = plane.col(0).norm();
  const auto L = static_cast<double>(p.depth());
  const auto d = static_cast<double>(p.input_dim());
  const double n = order;
  double bound = std::tgamma(n) * std::pow(d, n - 1.0) * std::pow(L - 1.0, n - 1.0);
  for (std::size_t l = 0; l < p.depth(); ++l) {
    const double M = std::max(spectral_norm(p.layers[l].W), 1.0);
    bound *= (l + 1 == p.depth()) ? M : std::pow(M, n);
  }
  out.bound = bound;
  return out;
}

}  // namespace sdze
