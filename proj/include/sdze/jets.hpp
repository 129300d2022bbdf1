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

// Order-2 directional Taylor jets.
//
// A JetBatch over width w for B points and k seeded directions holds three
// aligned planes: value (B x w), d1 and d2 ((B*k) x w, row p*k + j is
// direction j at point p). The value plane is shared by all directions.

#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "sdze/alloc.hpp"
#include "sdze/error.hpp"

namespace sdze {

enum class Activation { sin, tanh_scaled };

struct ActivationSpec {
  Activation kind = Activation::sin;
  double scale = 1.0;  // C in C * tanh(u); ignored for sin
};

inline Activation parse_activation(std::string_view tag) {
  if (tag == "sin") return Activation::sin;
  if (tag == "tanh" || tag == "tanh_scaled") return Activation::tanh_scaled;
  throw ConfigError("unknown activation '" + std::string(tag) + "' (expected sin or tanh_scaled)");
}

constexpr std::string_view activation_name(Activation a) {
  return a == Activation::sin ? "sin" : "tanh_scaled";
}

struct ActivationValues {
  double s;   // sigma(u)
  double s1;  // sigma'(u)
  double s2;  // sigma''(u)
};

inline ActivationValues activation_eval(const ActivationSpec& act, double u) {
  if (act.kind == Activation::sin) {
    const double s = std::sin(u);
    return {s, std::cos(u), -s};
  }
  const double t = std::tanh(u);
  const double sech2 = 1.0 - t * t;
  return {act.scale * t, act.scale * sech2, act.scale * (-2.0 * t * sech2)};
}

// Scalar order-2 jet along one direction, used for closed-form expressions.
struct Jet2 {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;

  static Jet2 constant(double c) { return {c, 0.0, 0.0}; }
  static Jet2 variable(double x) { return {x, 1.0, 0.0}; }

  friend Jet2 operator+(Jet2 a, Jet2 b) { return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2}; }
  friend Jet2 operator-(Jet2 a, Jet2 b) { return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2}; }
  friend Jet2 operator*(Jet2 a, Jet2 b) {
    return {a.value * b.value, a.d1 * b.value + a.value * b.d1,
            a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2};
  }
  friend Jet2 operator*(double c, Jet2 a) { return {c * a.value, c * a.d1, c * a.d2}; }
};

inline Jet2 exp(Jet2 a) {
  const double e = std::exp(a.value);
  return {e, e * a.d1, e * (a.d2 + a.d1 * a.d1)};
}

inline Jet2 sin(Jet2 a) {
  const double s = std::sin(a.value);
  const double c = std::cos(a.value);
  return {s, c * a.d1, -s * a.d1 * a.d1 + c * a.d2};
}

struct JetBatch {
  TrackedMat value;
  TrackedMat d1;
  TrackedMat d2;
  Index directions = 0;

  Index points() const { return value->rows(); }
  Index width() const { return value->cols(); }
};

// Right-multiplies every plane by W (m x n). Planes never mix.
inline JetBatch jet_linear(const Mat& W, const JetBatch& J) {
  if (J.width() != W.rows())
    throw InvalidArgument("jet_linear: jet width " + std::to_string(J.width()) +
                          " does not match weight rows " + std::to_string(W.rows()));
  JetBatch out;
  out.directions = J.directions;
  out.value = TrackedMat(J.value->rows(), W.cols());
  out.d1 = TrackedMat(J.d1->rows(), W.cols());
  out.d2 = TrackedMat(J.d2->rows(), W.cols());
  out.value->noalias() = *J.value * W;
  out.d1->noalias() = *J.d1 * W;
  out.d2->noalias() = *J.d2 * W;
  return out;
}

// value' = s(u); d1' = s'(u) d1; d2' = s''(u) d1^2 + s'(u) d2.
inline void jet_activation_inplace(const ActivationSpec& act, JetBatch& J) {
  const Index B = J.points();
  const Index w = J.width();
  const Index k = J.directions;
  Mat& val = *J.value;
  Mat& d1 = *J.d1;
  Mat& d2 = *J.d2;
  for (Index p = 0; p < B; ++p) {
    for (Index c = 0; c < w; ++c) {
      const ActivationValues a = activation_eval(act, val(p, c));
      val(p, c) = a.s;
      for (Index j = 0; j < k; ++j) {
        const Index row = p * k + j;
        const double t1 = d1(row, c);
        d2(row, c) = a.s2 * t1 * t1 + a.s1 * d2(row, c);
        d1(row, c) = a.s1 * t1;
      }
    }
  }
}

inline JetBatch jet_activation(const ActivationSpec& act, JetBatch J) {
  jet_activation_inplace(act, J);
  return J;
}

// Seeds (x, e_i, 0) for every point row of X and every listed dimension.
inline JetBatch coordinate_jet_seed(const Mat& X, std::span<const Index> dims) {
  const Index B = X.rows();
  const Index d = X.cols();
  const auto k = static_cast<Index>(dims.size());
  for (Index i : dims)
    if (i < 0 || i >= d)
      throw InvalidArgument("coordinate_jet_seed: dimension index " + std::to_string(i) +
                            " out of range for d=" + std::to_string(d));
  JetBatch J;
  J.directions = k;
  J.value = TrackedMat(B, d);
  *J.value = X;
  J.d1 = TrackedMat::zeros(B * k, d);
  J.d2 = TrackedMat::zeros(B * k, d);
  for (Index p = 0; p < B; ++p)
    for (Index j = 0; j < k; ++j) (*J.d1)(p * k + j, dims[static_cast<std::size_t>(j)]) = 1.0;
  return J;
}

inline JetBatch coordinate_jet_seed(std::span<const double> x, Index i) {
  Mat X(1, static_cast<Index>(x.size()));
  for (Index c = 0; c < X.cols(); ++c) X(0, c) = x[static_cast<std::size_t>(c)];
  const Index dims[] = {i};
  return coordinate_jet_seed(X, dims);
}

}  // namespace sdze
