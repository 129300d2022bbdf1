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

// Checkpoints and metrics CSV.
//
// Checkpoint layout (little-endian): "SDZE", u32 version = 1, u64 seed,
// u64 step, u32 layer count, then per layer u32 rows, u32 cols and rows*cols
// f64 row-major. A layer with a bias is stored as its (m + 1) x n augmented
// matrix, the bias being the last row.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sdze/harness/config.hpp"

namespace sdze {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'S', 'D', 'Z', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  MlpParams params;
};

inline void save_checkpoint(const std::string& path, const MlpParams& p, std::uint64_t step, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kCheckpointMagic, 4);
  put(kCheckpointVersion);
  put(seed);
  put(step);
  put(static_cast<std::uint32_t>(p.depth()));
  for (const auto& L : p.layers) {
    const bool has_bias = L.bias.size() > 0;
    put(static_cast<std::uint32_t>(L.W.rows() + (has_bias ? 1 : 0)));
    put(static_cast<std::uint32_t>(L.W.cols()));
    for (Index i = 0; i < L.W.rows(); ++i)
      for (Index j = 0; j < L.W.cols(); ++j) put(L.W(i, j));
    for (Index j = 0; j < L.bias.size(); ++j) put(L.bias[j]);
  }
  if (!out) throw FormatError("write failed for checkpoint " + path);
}

// `bias` says how to read the stored matrices (augmented or not); the
// activation is not part of the file and is taken from `act`.
inline Checkpoint load_checkpoint(const std::string& path, bool bias, ActivationSpec act = {Activation::sin, 1.0}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path);
  auto get = [&](auto& v, const char* what) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError("truncated checkpoint " + path + " while reading " + what);
  };
  char magic[4];
  in.read(magic, 4);
  if (!in) throw FormatError("truncated checkpoint " + path + " while reading magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad magic in checkpoint " + path);
  std::uint32_t version = 0;
  get(version, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint " + path + " has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  Checkpoint c;
  std::uint32_t layers = 0;
  get(c.seed, "seed");
  get(c.step, "step");
  get(layers, "layer count");
  c.params.act = act;
  for (std::uint32_t l = 0; l < layers; ++l) {
    std::uint32_t rows = 0, cols = 0;
    get(rows, "rows");
    get(cols, "cols");
    if (bias && rows < 2) throw FormatError("checkpoint " + path + ": layer too small for a bias row");
    Mat A(rows, cols);
    for (Index i = 0; i < A.rows(); ++i)
      for (Index j = 0; j < A.cols(); ++j) get(A(i, j), "weights");
    Layer L;
    if (bias) {
      L.W = A.topRows(rows - 1);
      L.bias = A.row(rows - 1);
    } else {
      L.W = A;
    }
    c.params.layers.push_back(std::move(L));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint " + path);
  c.params.validate();
  return c;
}

// Shortest text that round-trips the double; blank for NaN.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_header_line(std::uint64_t seed, const std::string& hash) {
  return std::string("# sdze-version=") + SDZE_VERSION + ", seed=" + std::to_string(seed) + ", config-hash=" + hash;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::uint64_t seed, const std::string& hash, const std::vector<std::string>& cols)
      : out_(path, std::ios::trunc) {
    if (!out_) throw FormatError("cannot write " + path);
    out_ << csv_header_line(seed, hash) << '\n';
    row(cols);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"step",     "alpha",  "delta_hat", "loss_plus",
                                             "loss_minus", "rel_l2", "wall_ms",   "peak_tmp_elems"};
  return cols;
}

inline std::vector<std::string> metrics_row(const StepRecord& r) {
  return {std::to_string(r.step),      csv_number(r.alpha),  csv_number(r.delta_hat), csv_number(r.loss_plus),
          csv_number(r.loss_minus),    csv_number(r.rel_l2), csv_number(r.wall_ms),   std::to_string(r.peak_tmp_elems)};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace sdze
