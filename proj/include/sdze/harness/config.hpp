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

// JSON run configuration. Loading collects every problem (unknown keys,
// missing keys, bad values) and reports them together.

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdze/optimizer.hpp"

namespace sdze {

using Json = nlohmann::ordered_json;

struct RunConfig {
  // pde
  PdeKind pde_kind = PdeKind::poisson;
  Index dim = 100;
  SolutionKind solution = SolutionKind::two_body;
  Normalization normalization = Normalization::dim_normalized;
  // net
  std::vector<Index> widths;
  ActivationSpec activation{Activation::sin, 1.0};
  bool bias = true;
  // sdze
  Index rank = 16;
  std::vector<Index> rank_per_layer;
  std::uint64_t freq_F = 1000;
  double eps = 1e-3;
  LrSchedule lr;
  Index batch_points_B = 100;
  Index batch_dims_b = 16;
  bool crns = true;
  // run
  std::uint64_t steps = 0;
  std::uint64_t eval_every = 0;  // 0: only at the end
  std::uint64_t checkpoint_every = 0;
  Index test_points = 2000;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  bool record_timing = false;

  SdzeConfig sdze() const {
    SdzeConfig c;
    c.master = seed;
    c.eps = eps;
    c.lr = lr;
    c.steps = steps;
    c.ranks = rank_per_layer.empty() ? std::vector<Index>{rank} : rank_per_layer;
    c.freq_F = freq_F;
    c.crns = crns;
    c.record_timing = record_timing;
    return c;
  }
  PdeProblem problem() const { return make_problem(seed, pde_kind, dim, solution, normalization); }
  MlpParams initial_params() const { return init_params(seed, widths, activation, bias); }
};

inline std::string lr_mode_name(LrMode m) {
  switch (m) {
    case LrMode::constant: return "constant";
    case LrMode::annealed: return "annealed";
    case LrMode::sqrt_tq: return "sqrt_tq";
  }
  return "?";
}

inline std::string pde_kind_name(PdeKind k) {
  switch (k) {
    case PdeKind::poisson: return "poisson";
    case PdeKind::allen_cahn: return "allen_cahn";
    case PdeKind::sine_gordon: return "sine_gordon";
  }
  return "?";
}

inline std::string solution_name(SolutionKind s) { return s == SolutionKind::two_body ? "two_body" : "three_body"; }

inline std::string normalization_name(Normalization n) {
  return n == Normalization::raw ? "raw" : "dim_normalized";
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["test_points"] = c.test_points;
  j["output_dir"] = c.output_dir;
  j["record_timing"] = c.record_timing;
  j["pde"] = {{"kind", pde_kind_name(c.pde_kind)},
              {"dim", c.dim},
              {"solution", solution_name(c.solution)},
              {"normalization", normalization_name(c.normalization)}};
  j["net"] = {{"depth", c.widths.empty() ? 0 : c.widths.size() - 1},
              {"widths", c.widths},
              {"activation", activation_name(c.activation.kind)},
              {"activation_scale", c.activation.scale},
              {"bias", c.bias}};
  Json lr = {{"mode", lr_mode_name(c.lr.mode)}};
  if (c.lr.mode == LrMode::constant) lr["alpha"] = c.lr.alpha;
  if (c.lr.mode == LrMode::annealed) {
    lr["gamma"] = c.lr.gamma;
    lr["m"] = c.lr.m;
    lr["p"] = c.lr.p;
  }
  if (c.lr.mode == LrMode::sqrt_tq) lr["c"] = c.lr.c;
  j["sdze"] = {{"rank", c.rank},
               {"freq_F", c.freq_F},
               {"eps", c.eps},
               {"batch_points_B", c.batch_points_B},
               {"batch_dims_b", c.batch_dims_b},
               {"crns", c.crns},
               {"lr", lr}};
  if (!c.rank_per_layer.empty()) j["sdze"]["rank_per_layer"] = c.rank_per_layer;
  return j;
}

// 64-bit FNV-1a of the compact serialized config.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

namespace detail {

class Reader {
 public:
  std::vector<std::string> errors;

  void allow(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) {
      errors.push_back((path.empty() ? "<root>" : path) + ": expected an object");
      return;
    }
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
      if (!ok.count(k)) errors.push_back(join(path, k) + ": unknown key");
  }

  template <class T>
  void get(const Json& obj, const std::string& path, const char* key, T& out, bool required) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) errors.push_back(join(path, key) + ": missing");
      return;
    }
    try {
      out = obj.at(key).get<T>();
    } catch (const std::exception&) {
      errors.push_back(join(path, key) + ": wrong type");
    }
  }

  template <class Parse>
  void get_enum(const Json& obj, const std::string& path, const char* key, Parse parse, bool required) {
    std::string s;
    const std::size_t before = errors.size();
    get(obj, path, key, s, required);
    if (errors.size() != before || !obj.is_object() || !obj.contains(key)) return;
    try {
      parse(s);
    } catch (const std::exception& e) {
      errors.push_back(join(path, key) + ": " + e.what());
    }
  }

  void check(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) errors.push_back(key + ": " + msg);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

}  // namespace detail

inline RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  detail::Reader r;
  r.allow(j, "", {"seed", "steps", "eval_every", "checkpoint_every", "test_points", "output_dir", "record_timing", "pde",
                  "net", "sdze"});
  r.get(j, "", "seed", c.seed, false);
  r.get(j, "", "steps", c.steps, true);
  r.get(j, "", "eval_every", c.eval_every, false);
  r.get(j, "", "checkpoint_every", c.checkpoint_every, false);
  r.get(j, "", "test_points", c.test_points, false);
  r.get(j, "", "output_dir", c.output_dir, false);
  r.get(j, "", "record_timing", c.record_timing, false);

  const Json empty = Json::object();
  const Json& pde = j.is_object() && j.contains("pde") ? j["pde"] : empty;
  if (!(j.is_object() && j.contains("pde"))) r.errors.push_back("pde: missing");
  r.allow(pde, "pde", {"kind", "dim", "solution", "normalization"});
  r.get_enum(pde, "pde", "kind", [&](const std::string& s) { c.pde_kind = parse_pde_kind(s); }, true);
  r.get(pde, "pde", "dim", c.dim, true);
  r.get_enum(pde, "pde", "solution", [&](const std::string& s) { c.solution = parse_solution(s); }, false);
  r.get_enum(pde, "pde", "normalization", [&](const std::string& s) { c.normalization = parse_normalization(s); }, false);

  const Json& net = j.is_object() && j.contains("net") ? j["net"] : empty;
  if (!(j.is_object() && j.contains("net"))) r.errors.push_back("net: missing");
  r.allow(net, "net", {"depth", "widths", "activation", "activation_scale", "bias"});
  r.get(net, "net", "widths", c.widths, true);
  std::size_t depth = 0;
  r.get(net, "net", "depth", depth, false);
  r.get_enum(net, "net", "activation", [&](const std::string& s) { c.activation.kind = parse_activation(s); }, false);
  r.get(net, "net", "activation_scale", c.activation.scale, false);
  r.get(net, "net", "bias", c.bias, false);

  const Json& sd = j.is_object() && j.contains("sdze") ? j["sdze"] : empty;
  if (!(j.is_object() && j.contains("sdze"))) r.errors.push_back("sdze: missing");
  r.allow(sd, "sdze", {"rank", "rank_per_layer", "freq_F", "eps", "batch_points_B", "batch_dims_b", "crns", "lr"});
  r.get(sd, "sdze", "rank", c.rank, false);
  r.get(sd, "sdze", "rank_per_layer", c.rank_per_layer, false);
  r.get(sd, "sdze", "freq_F", c.freq_F, false);
  r.get(sd, "sdze", "eps", c.eps, false);
  r.get(sd, "sdze", "batch_points_B", c.batch_points_B, false);
  r.get(sd, "sdze", "batch_dims_b", c.batch_dims_b, false);
  r.get(sd, "sdze", "crns", c.crns, false);
  if (sd.is_object() && sd.contains("lr")) {
    const Json& lr = sd["lr"];
    r.allow(lr, "sdze.lr", {"mode", "alpha", "gamma", "m", "p", "c"});
    r.get_enum(lr, "sdze.lr", "mode", [&](const std::string& s) { c.lr.mode = parse_lr_mode(s); }, true);
    r.get(lr, "sdze.lr", "alpha", c.lr.alpha, false);
    r.get(lr, "sdze.lr", "gamma", c.lr.gamma, false);
    r.get(lr, "sdze.lr", "m", c.lr.m, false);
    r.get(lr, "sdze.lr", "p", c.lr.p, false);
    r.get(lr, "sdze.lr", "c", c.lr.c, false);
  }

  // Value checks.
  r.check(c.dim >= 1, "pde.dim", "must be >= 1");
  if (c.dim >= 1) r.check(c.dim >= (c.solution == SolutionKind::two_body ? 2 : 3), "pde.dim", "smaller than the solution's coupling span");
  r.check(c.widths.size() >= 2, "net.widths", "needs at least input and output widths");
  if (c.widths.size() >= 2) {
    r.check(c.widths.front() == c.dim, "net.widths", "first width must equal pde.dim");
    r.check(c.widths.back() == 1, "net.widths", "last width must be 1");
    for (Index w : c.widths) r.check(w >= 1, "net.widths", "widths must be >= 1");
    if (depth != 0) r.check(depth == c.widths.size() - 1, "net.depth", "does not match net.widths");
    if (!c.rank_per_layer.empty())
      r.check(c.rank_per_layer.size() == c.widths.size() - 1, "sdze.rank_per_layer", "needs one rank per layer");
  }
  r.check(c.activation.scale > 0.0, "net.activation_scale", "must be > 0");
  r.check(c.rank >= 1, "sdze.rank", "must be >= 1");
  for (Index k : c.rank_per_layer) r.check(k >= 1, "sdze.rank_per_layer", "ranks must be >= 1");
  r.check(c.freq_F >= 1, "sdze.freq_F", "must be >= 1");
  r.check(c.eps > 0.0, "sdze.eps", "must be > 0");
  r.check(c.batch_points_B >= 1, "sdze.batch_points_B", "must be >= 1");
  r.check(c.batch_dims_b >= 1 && c.batch_dims_b <= c.dim, "sdze.batch_dims_b", "must lie in [1, pde.dim]");
  r.check(c.test_points >= 1, "test_points", "must be >= 1");
  try {
    c.lr.validate();
  } catch (const std::exception& e) {
    r.errors.push_back(std::string("sdze.lr: ") + e.what());
  }

  if (!r.errors.empty()) {
    std::ostringstream msg;
    msg << "invalid configuration (" << r.errors.size() << " problem" << (r.errors.size() > 1 ? "s" : "") << "):";
    for (const auto& e : r.errors) msg << "\n  " << e;
    throw ConfigError(msg.str());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace sdze
