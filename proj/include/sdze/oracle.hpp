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

// Reference implementations used to check the implicit kernels. These share
// nothing with the training path beyond scalar arithmetic: reshapes go
// through an explicit column-major vec, perturbations are materialized in
// full, and forward/jet passes are plain loops.

#include <cmath>
#include <vector>

#include "sdze/net.hpp"

namespace sdze::oracle {

// Column-major vec of a row-major matrix.
inline std::vector<double> vec(const Mat& A) {
  std::vector<double> v(static_cast<std::size_t>(A.size()));
  for (Index j = 0; j < A.cols(); ++j)
    for (Index i = 0; i < A.rows(); ++i) v[static_cast<std::size_t>(i + j * A.rows())] = A(i, j);
  return v;
}

inline Mat unvec(const std::vector<double>& v, Index rows, Index cols) {
  if (static_cast<Index>(v.size()) != rows * cols) throw InvalidArgument("unvec: size mismatch");
  Mat A(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) A(i, j) = v[static_cast<std::size_t>(i + j * rows)];
  return A;
}

// T: m x n -> m' x n', and its inverse.
inline Mat reshape_forward(const ReshapePlan& p, const Mat& W) { return unvec(vec(W), p.m_sq, p.n_sq); }
inline Mat reshape_inverse(const ReshapePlan& p, const Mat& Wsq) { return unvec(vec(Wsq), p.m, p.n); }

inline Mat matmul(const Mat& A, const Mat& B) {
  Mat C = Mat::Zero(A.rows(), B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index k = 0; k < A.cols(); ++k) {
      const double a = A(i, k);
      for (Index j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
    }
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols(), A.rows());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
  return T;
}

// T^{-1}(U Z V^T) in full.
inline Mat materialize_delta(const LayerSubspace& s, const Mat& Z) {
  return reshape_inverse(s.plan, matmul(matmul(s.U, Z), transpose(s.V)));
}

inline Mat kron(const Mat& A, const Mat& B) {
  Mat K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      for (Index p = 0; p < B.rows(); ++p)
        for (Index q = 0; q < B.cols(); ++q) K(i * B.rows() + p, j * B.cols() + q) = A(i, j) * B(p, q);
  return K;
}

// Dense copy of the network with every perturbation applied explicitly.
inline MlpParams perturbed_params(const PerturbView& v) {
  MlpParams p = *v.params;
  if (!v.perturbed()) return p;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    const Mat D = materialize_delta((*v.subspaces)[l], v.pert->cores[l]);
    for (Index i = 0; i < D.rows(); ++i)
      for (Index j = 0; j < D.cols(); ++j) p.layers[l].W(i, j) += v.scale() * D(i, j);
    for (Index j = 0; j < p.layers[l].bias.size(); ++j) p.layers[l].bias[j] += v.scale() * v.pert->bias_dirs[l][j];
  }
  return p;
}

inline double act(const ActivationSpec& a, double u, int order) {
  if (a.kind == Activation::sin) {
    switch (order) {
      case 0: return std::sin(u);
      case 1: return std::cos(u);
      default: return -std::sin(u);
    }
  }
  const double t = std::tanh(u);
  switch (order) {
    case 0: return a.scale * t;
    case 1: return a.scale * (1 - t * t);
    default: return a.scale * (-2 * t * (1 - t * t));
  }
}

inline double net_value(const MlpParams& p, const RowVec& x) {
  std::vector<double> h(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < p.depth(); ++l) {
    const Mat& W = p.layers[l].W;
    std::vector<double> nxt(static_cast<std::size_t>(W.cols()), 0.0);
    for (Index j = 0; j < W.cols(); ++j) {
      double acc = p.layers[l].bias.size() ? p.layers[l].bias[j] : 0.0;
      for (Index i = 0; i < W.rows(); ++i) acc += h[static_cast<std::size_t>(i)] * W(i, j);
      nxt[static_cast<std::size_t>(j)] = l + 1 < p.depth() ? act(p.act, acc, 0) : acc;
    }
    h = std::move(nxt);
  }
  return h[0];
}

// (g, dg/dx_i, d2g/dx_i2) by scalar forward-mode loops.
inline Jet2 net_jet(const MlpParams& p, const RowVec& x, Index dim) {
  const auto d = static_cast<std::size_t>(x.size());
  std::vector<double> v(x.data(), x.data() + x.size()), t(d, 0.0), c(d, 0.0);
  t[static_cast<std::size_t>(dim)] = 1.0;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    const Mat& W = p.layers[l].W;
    const auto n = static_cast<std::size_t>(W.cols());
    std::vector<double> v2(n), t2(n), c2(n);
    for (std::size_t j = 0; j < n; ++j) {
      double a0 = p.layers[l].bias.size() ? p.layers[l].bias[static_cast<Index>(j)] : 0.0, a1 = 0.0, a2 = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double w = W(static_cast<Index>(i), static_cast<Index>(j));
        a0 += v[i] * w;
        a1 += t[i] * w;
        a2 += c[i] * w;
      }
      if (l + 1 < p.depth()) {
        const double s1 = act(p.act, a0, 1), s2 = act(p.act, a0, 2);
        v2[j] = act(p.act, a0, 0);
        t2[j] = s1 * a1;
        c2[j] = s2 * a1 * a1 + s1 * a2;
      } else {
        v2[j] = a0;
        t2[j] = a1;
        c2[j] = a2;
      }
    }
    v = std::move(v2);
    t = std::move(t2);
    c = std::move(c2);
  }
  return {v[0], t[0], c[0]};
}

// Ansatz jet (1 - |x|^2) g along e_dim.
inline Jet2 ansatz_jet(const MlpParams& p, const RowVec& x, Index dim) {
  const Jet2 g = net_jet(p, x, dim);
  double r2 = 0.0;
  for (Index i = 0; i < x.size(); ++i) r2 += x[i] * x[i];
  const Jet2 phi{1.0 - r2, -2.0 * x[dim], -2.0};
  return phi * g;
}

}  // namespace sdze::oracle
