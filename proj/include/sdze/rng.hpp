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

// Counter-based, splittable random streams.
//
// Every random quantity in a run is addressed by a StreamKey
// (master seed, role, step, index). A stream's n-th 64-bit draw is
// mix64(base + n * kGolden), where base is a mix of the key fields, so the
// output is a pure function of (key, draw count). Evaluation order across
// threads can never change what a given key produces.
//
// Gaussian transform (bit-exact contract): normals are produced in pairs from
// two consecutive uniform draws u1 = ((x1 >> 11) + 1) * 2^-53 in (0, 1] and
// u2 = (x2 >> 11) * 2^-53 in [0, 1):
//   z0 = sqrt(-2 ln u1) * cos(2 pi u2),  z1 = sqrt(-2 ln u1) * sin(2 pi u2).
// z0 is returned first, z1 is buffered for the next call.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sdze/error.hpp"

namespace sdze {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using RowVec = Eigen::RowVectorXd;
using Vec = Eigen::VectorXd;

enum class Role : std::uint32_t {
  collocation = 1,
  dim_set_1 = 2,
  dim_set_2 = 3,
  base_U = 4,
  base_V = 5,
  core_Z = 6,
  solution_coeffs = 7,
  fullspace_z = 8,
  test_points = 9,
  init_weights = 10,
};

constexpr std::string_view role_name(Role r) {
  switch (r) {
    case Role::collocation: return "collocation";
    case Role::dim_set_1: return "dim_set_1";
    case Role::dim_set_2: return "dim_set_2";
    case Role::base_U: return "base_U";
    case Role::base_V: return "base_V";
    case Role::core_Z: return "core_Z";
    case Role::solution_coeffs: return "solution_coeffs";
    case Role::fullspace_z: return "fullspace_z";
    case Role::test_points: return "test_points";
    case Role::init_weights: return "init_weights";
  }
  return "unknown";
}

struct StreamKey {
  std::uint64_t master = 0;
  Role role = Role::collocation;
  std::uint64_t step = 0;
  std::uint64_t index = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t key_base(const StreamKey& k) {
  std::uint64_t h = mix64(k.master ^ 0x5344'5a45'0000'0001ULL);
  h = mix64(h ^ (static_cast<std::uint64_t>(k.role) * 0xd6e8feb86659fd93ULL));
  h = mix64(h ^ (k.step + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (k.index * 0xa0761d6478bd642fULL + 0xe7037ed1a0b428dbULL));
  return h;
}

class RngStream {
 public:
  explicit RngStream(const StreamKey& key) : key_(key), base_(key_base(key)) {}

  const StreamKey& key() const { return key_; }
  // Number of 64-bit draws consumed so far.
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(base_ + kGolden * counter_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }
  // (0, 1]
  double uniform_open_low() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

  // Uniform integer in [0, n), Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("RngStream::below: n must be positive");
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  StreamKey key_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream derive_stream(const StreamKey& key) { return RngStream(key); }

// Fills rows x cols with i.i.d. N(0,1) in row-major order. Consumes
// 2 * ceil(rows * cols / 2) uniform draws from a fresh pair boundary.
inline Mat gaussian_matrix(RngStream& stream, Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw InvalidArgument("gaussian_matrix: rows and cols must be >= 1");
  Mat out(rows, cols);
  double* p = out.data();
  const Index n = rows * cols;
  for (Index i = 0; i < n; ++i) p[i] = stream.normal();
  return out;
}

// Ordered index list of size k drawn from [0, n_total).
// Without replacement: partial Fisher-Yates over a virtual identity array
// (sparse swap map, O(k) memory), so every k-subset is equiprobable.
// With replacement: k i.i.d. uniform draws.
inline std::vector<Index> sample_index_set(RngStream& stream, Index n_total, Index k,
                                           bool with_replacement) {
  if (n_total < 1 || k < 1) throw InvalidArgument("sample_index_set: n_total and k must be >= 1");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  if (with_replacement) {
    for (Index i = 0; i < k; ++i)
      out.push_back(static_cast<Index>(stream.below(static_cast<std::uint64_t>(n_total))));
    return out;
  }
  if (k > n_total) throw InvalidArgument("sample_index_set: k > n_total without replacement");
  std::unordered_map<Index, Index> swapped;
  auto at = [&](Index i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  for (Index i = 0; i < k; ++i) {
    const Index j = i + static_cast<Index>(stream.below(static_cast<std::uint64_t>(n_total - i)));
    const Index vi = at(i);
    const Index vj = at(j);
    swapped[j] = vi;
    out.push_back(vj);
  }
  return out;
}

}  // namespace sdze
