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

#include <cmath>

#include "sdze/alloc.hpp"
#include "sdze/error.hpp"

namespace sdze {

struct ThinQR {
  Mat Q;  // m x n, orthonormal columns
  Mat R;  // n x n, upper triangular, non-negative diagonal
};

// Householder QR of a tall matrix (m >= n), thin form. Reflectors are kept in
// a tracked working copy; Q is accumulated backwards from the first n columns
// of the identity. Signs are normalized so that diag(R) >= 0.
inline ThinQR householder_qr(const Mat& A) {
  const Index m = A.rows();
  const Index n = A.cols();
  if (m < n || n < 1) throw InvalidArgument("householder_qr: expects m >= n >= 1");

  TrackedMat work_t(m, n);
  Mat& work = *work_t;
  work = A;
  TrackedMat vs_t = TrackedMat::zeros(m, n);  // column j holds v_j on rows j..m-1
  Mat& vs = *vs_t;

  for (Index j = 0; j < n; ++j) {
    double norm2 = 0.0;
    for (Index i = j; i < m; ++i) norm2 += work(i, j) * work(i, j);
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;
    const double x0 = work(j, j);
    const double alpha = x0 >= 0.0 ? -norm : norm;
    // v = x - alpha e1, normalized
    double vnorm2 = norm2 - x0 * x0 + (x0 - alpha) * (x0 - alpha);
    if (vnorm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(vnorm2);
    vs(j, j) = (x0 - alpha) * inv;
    for (Index i = j + 1; i < m; ++i) vs(i, j) = work(i, j) * inv;
    for (Index c = j; c < n; ++c) {
      double dot = 0.0;
      for (Index i = j; i < m; ++i) dot += vs(i, j) * work(i, c);
      for (Index i = j; i < m; ++i) work(i, c) -= 2.0 * vs(i, j) * dot;
    }
  }

  ThinQR out;
  out.R = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index c = i; c < n; ++c) out.R(i, c) = work(i, c);

  out.Q = Mat::Zero(m, n);
  for (Index i = 0; i < n; ++i) out.Q(i, i) = 1.0;
  for (Index j = n - 1; j >= 0; --j) {
    for (Index c = 0; c < n; ++c) {
      double dot = 0.0;
      for (Index i = j; i < m; ++i) dot += vs(i, j) * out.Q(i, c);
      if (dot == 0.0) continue;
      for (Index i = j; i < m; ++i) out.Q(i, c) -= 2.0 * vs(i, j) * dot;
    }
  }

  for (Index i = 0; i < n; ++i) {
    if (out.R(i, i) < 0.0) {
      out.R.row(i) *= -1.0;
      out.Q.col(i) *= -1.0;
    }
  }
  return out;
}

}  // namespace sdze
