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

// Layer-wise low-rank subspaces.
//
// A weight W (m x n) is viewed through a bijective reshape T into a
// near-square W' (m' x n'), using the column-major vec of both:
//   rows split (m = m' k, n' = n k):  W[s m' + a, j] = W'[a, j k + s]
//   cols split (n = n' k, m' = m k):  W[a, c k + t]  = W'[t m + a, c]
// A perturbation is W' += U Z V^T with U (m' x r), V (n' x r) orthonormal and
// Z an r x r Gaussian core, so vec(dW') = (V kron U) vec(Z). The full-size
// dW is never formed: products against a batch and in-place updates both go
// through the index maps above.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "sdze/alloc.hpp"
#include "sdze/linalg.hpp"
#include "sdze/rng.hpp"

namespace sdze {

enum class SplitSide { none, rows, cols };

struct ReshapePlan {
  Index m = 1;
  Index n = 1;
  Index m_sq = 1;
  Index n_sq = 1;
  Index k = 1;
  SplitSide side = SplitSide::none;

  friend bool operator==(const ReshapePlan&, const ReshapePlan&) = default;
};

inline ReshapePlan plan_reshape(Index m, Index n) {
  if (m < 1 || n < 1) throw InvalidArgument("plan_reshape: dimensions must be >= 1");
  ReshapePlan p{m, n, m, n, 1, SplitSide::none};
  if (m == n) return p;
  const Index larger = std::max(m, n);
  const Index smaller = std::min(m, n);
  Index best_k = 1;
  Index best_gap = larger - smaller;
  for (Index k = 2; k <= larger; ++k) {
    if (larger % k != 0) continue;
    const Index gap = std::abs(larger / k - smaller * k);
    if (gap < best_gap) {
      best_gap = gap;
      best_k = k;
    }
  }
  if (best_k == 1) return p;
  p.k = best_k;
  if (m > n) {
    p.side = SplitSide::rows;
    p.m_sq = m / best_k;
    p.n_sq = n * best_k;
  } else {
    p.side = SplitSide::cols;
    p.m_sq = m * best_k;
    p.n_sq = n / best_k;
  }
  return p;
}

// Position of W(i, j) inside W'.
struct SquarePos {
  Index row;
  Index col;
};

inline SquarePos to_square(const ReshapePlan& p, Index i, Index j) {
  switch (p.side) {
    case SplitSide::rows: return {i % p.m_sq, j * p.k + i / p.m_sq};
    case SplitSide::cols: return {(j % p.k) * p.m + i, j / p.k};
    case SplitSide::none: break;
  }
  return {i, j};
}

struct LayerSubspace {
  ReshapePlan plan;
  Mat U;  // m' x r
  Mat V;  // n' x r
  Index rank = 0;
  std::int64_t last_refresh_step = -1;
};

inline Index clamp_rank(const ReshapePlan& plan, Index r) {
  return std::max<Index>(1, std::min({r, plan.m_sq, plan.n_sq}));
}

inline Mat orthonormal_basis(RngStream& stream, Index rows, Index r) {
  return householder_qr(gaussian_matrix(stream, rows, r)).Q;
}

struct Bases {
  Mat U;
  Mat V;
};

inline Bases refresh_bases(RngStream& stream_U, RngStream& stream_V, const ReshapePlan& plan, Index r) {
  if (r < 1 || r > std::min(plan.m_sq, plan.n_sq))
    throw InvalidArgument("refresh_bases: rank " + std::to_string(r) + " exceeds min(" +
                          std::to_string(plan.m_sq) + ", " + std::to_string(plan.n_sq) + ")");
  PhaseScope phase(Phase::refresh);
  return {orthonormal_basis(stream_U, plan.m_sq, r), orthonormal_basis(stream_V, plan.n_sq, r)};
}

inline LayerSubspace make_subspace(Index m, Index n, Index requested_rank) {
  LayerSubspace s;
  s.plan = plan_reshape(m, n);
  s.rank = clamp_rank(s.plan, requested_rank);
  return s;
}

inline void refresh_layer(LayerSubspace& s, std::uint64_t master, std::uint64_t t, std::uint64_t layer) {
  RngStream su = derive_stream({master, Role::base_U, t, layer});
  RngStream sv = derive_stream({master, Role::base_V, t, layer});
  Bases b = refresh_bases(su, sv, s.plan, s.rank);
  s.U = std::move(b.U);
  s.V = std::move(b.V);
  s.last_refresh_step = static_cast<std::int64_t>(t);
}

// Refreshes iff t mod F == 0. Returns whether it did.
inline bool maybe_refresh(LayerSubspace& s, std::uint64_t t, std::uint64_t F, std::uint64_t master,
                          std::uint64_t layer) {
  if (F < 1) throw InvalidArgument("maybe_refresh: F must be >= 1");
  if (t % F != 0) return false;
  refresh_layer(s, master, t, layer);
  return true;
}

inline Mat sample_core(RngStream& stream, Index r) {
  if (r < 1) throw InvalidArgument("sample_core: r must be >= 1");
  return gaussian_matrix(stream, r, r);
}

namespace detail {

inline void check_layer(const LayerSubspace& s, const Mat& Z, const char* who) {
  if (Z.rows() != s.rank || Z.cols() != s.rank || s.U.rows() != s.plan.m_sq || s.V.rows() != s.plan.n_sq ||
      s.U.cols() != s.rank || s.V.cols() != s.rank)
    throw InvalidArgument(std::string(who) + ": subspace/core shapes inconsistent with plan");
}

}  // namespace detail

// out (B x n) += scale * H (B x m) * T^{-1}(U Z V^T).
inline void contract_accumulate(const Mat& H, const LayerSubspace& s, const Mat& Z, double scale, Mat& out) {
  const ReshapePlan& p = s.plan;
  detail::check_layer(s, Z, "contract_accumulate");
  if (H.cols() != p.m || out.cols() != p.n || out.rows() != H.rows())
    throw InvalidArgument("contract_accumulate: batch shape mismatch");
  const Index B = H.rows();
  const Index r = s.rank;
  const Index k = p.k;
  using Strided = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

  TrackedMat G(B, r);
  if (p.side == SplitSide::cols) {
    // U_t = rows t m .. t m + m - 1 of U; out columns t::k.
    TrackedMat T(B, p.n_sq);
    for (Index t = 0; t < k; ++t) {
      G->noalias() = H * s.U.middleRows(t * p.m, p.m) * Z;
      T->noalias() = *G * s.V.transpose();
      for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < p.n_sq; ++c) out(b, c * k + t) += scale * (*T)(b, c);
    }
    return;
  }
  // rows split (k = 1 covers the identity plan): H_s = columns s m' .. of H,
  // V_s = rows s::k of V.
  for (Index s_idx = 0; s_idx < k; ++s_idx) {
    G->noalias() = H.middleCols(s_idx * p.m_sq, p.m_sq) * s.U * Z;
    Strided Vs(s.V.data() + s_idx * r, p.n, r, Eigen::OuterStride<>(k * r));
    out.noalias() += scale * (*G * Vs.transpose());
  }
}

// Rows `rows` of T^{-1}(U Z V^T), one output row per listed index.
inline TrackedMat delta_rows(const LayerSubspace& s, const Mat& Z, std::span<const Index> rows) {
  const ReshapePlan& p = s.plan;
  detail::check_layer(s, Z, "delta_rows");
  const Index r = s.rank;
  TrackedMat out(static_cast<Index>(rows.size()), p.n);
  Eigen::RowVectorXd uz(r);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    const Index i = rows[q];
    if (i < 0 || i >= p.m) throw InvalidArgument("delta_rows: row index out of range");
    const auto qi = static_cast<Index>(q);
    if (p.side == SplitSide::cols) {
      for (Index t = 0; t < p.k; ++t) {
        uz.noalias() = s.U.row(t * p.m + i) * Z;
        for (Index c = 0; c < p.n_sq; ++c) (*out)(qi, c * p.k + t) = uz.dot(s.V.row(c));
      }
    } else {
      const Index a = i % p.m_sq;
      const Index s_idx = i / p.m_sq;
      uz.noalias() = s.U.row(a) * Z;
      for (Index j = 0; j < p.n; ++j) (*out)(qi, j) = uz.dot(s.V.row(j * p.k + s_idx));
    }
  }
  return out;
}

// W += scale * T^{-1}(U Z V^T). The only temporary is U Z (m' x r); entries
// are scattered straight into W through the reshape map.
inline void apply_rank_r_update(Mat& W, const LayerSubspace& s, const Mat& Z, double scale) {
  const ReshapePlan& p = s.plan;
  detail::check_layer(s, Z, "apply_rank_r_update");
  if (W.rows() != p.m || W.cols() != p.n) throw InvalidArgument("apply_rank_r_update: W shape mismatch");
  if (scale == 0.0) return;
  PhaseScope phase(Phase::update);
  TrackedMat UZ(p.m_sq, s.rank);
  UZ->noalias() = scale * (s.U * Z);
  const Mat& A = *UZ;
  if (p.side == SplitSide::cols) {
    for (Index t = 0; t < p.k; ++t)
      for (Index a = 0; a < p.m; ++a) {
        const auto ua = A.row(t * p.m + a);
        for (Index c = 0; c < p.n_sq; ++c) W(a, c * p.k + t) += ua.dot(s.V.row(c));
      }
    return;
  }
  for (Index i = 0; i < p.m; ++i) {
    const auto ua = A.row(i % p.m_sq);
    const Index s_idx = i / p.m_sq;
    for (Index j = 0; j < p.n; ++j) W(i, j) += ua.dot(s.V.row(j * p.k + s_idx));
  }
}

}  // namespace sdze
