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

// Zeroth-order training steps.
//
// One SDZE step at t: refresh bases (t mod F == 0), draw omega keyed by t,
// draw cores keyed by (core_Z, t, l), evaluate the loss at +eps and -eps
// with the same omega, form delta = (l+ - l-) / (2 eps), then update every
// layer by -alpha_t * delta * T^{-1}(U Z V^T) in place.

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdze/alloc.hpp"
#include "sdze/net.hpp"
#include "sdze/spatial.hpp"
#include "sdze/subspace.hpp"

namespace sdze {

// Raised when a CRNS step produces a non-finite loss. Carries what is needed
// to replay the step.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::uint64_t master, std::uint64_t step, double plus, double minus)
      : std::runtime_error(describe(master, step, plus, minus)), master(master), step(step), loss_plus(plus),
        loss_minus(minus) {}
  std::uint64_t master;
  std::uint64_t step;
  double loss_plus;
  double loss_minus;

 private:
  static std::string describe(std::uint64_t master, std::uint64_t step, double plus, double minus) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << " (loss_plus=" << plus << ", loss_minus=" << minus
       << "); replay keys: master=" << master << " collocation/dim_set_1/dim_set_2/core_Z step=" << step;
    return os.str();
  }
};

enum class LrMode { constant, annealed, sqrt_tq };

inline LrMode parse_lr_mode(std::string_view s) {
  if (s == "constant") return LrMode::constant;
  if (s == "annealed") return LrMode::annealed;
  if (s == "sqrt_tq") return LrMode::sqrt_tq;
  throw ConfigError("unknown lr.mode '" + std::string(s) + "' (expected constant, annealed or sqrt_tq)");
}

struct LrSchedule {
  LrMode mode = LrMode::constant;
  double alpha = 1e-3;  // constant
  double gamma = 1.0;   // annealed: gamma / (t + m)^p
  double m = 0.0;
  double p = 1.0;
  double c = 1.0;       // sqrt_tq: c / sqrt(t q)

  void validate() const {
    if (mode == LrMode::annealed && !(p > 0.5 && p <= 1.0))
      throw ConfigError("lr.p must lie in (1/2, 1] for the annealed schedule, got " + std::to_string(p));
  }
};

inline double lr_schedule(const LrSchedule& s, std::uint64_t t, double q) {
  s.validate();
  const auto tf = static_cast<double>(t);
  switch (s.mode) {
    case LrMode::constant: return s.alpha;
    case LrMode::annealed:
      if (t < 1) throw InvalidArgument("lr_schedule: annealed mode needs t >= 1");
      return s.gamma / std::pow(tf + s.m, s.p);
    case LrMode::sqrt_tq:
      if (t < 1) throw InvalidArgument("lr_schedule: sqrt_tq mode needs t >= 1");
      return s.c / std::sqrt(tf * q);
  }
  return s.alpha;
}

struct SdzeConfig {
  std::uint64_t master = 0;
  double eps = 1e-3;
  LrSchedule lr;
  std::uint64_t steps = 0;
  std::vector<Index> ranks;  // one per layer
  std::uint64_t freq_F = 1000;
  bool crns = true;
  bool record_timing = false;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("sdze.eps must be > 0");
    if (freq_F < 1) throw ConfigError("sdze.freq_F must be >= 1");
    lr.validate();
  }
};

struct StepRecord {
  std::uint64_t step = 0;
  double alpha = 0.0;
  double delta_hat = 0.0;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
  std::size_t peak_tmp_elems = 0;
  double rel_l2 = std::numeric_limits<double>::quiet_NaN();
  bool finite = true;
};

// A loss over perturbed views. draw(step, variant) returns the step's random
// sample; variant 1 is the independent draw used by the unlocked ablation.
template <class O>
concept Objective = requires(const O& o, const PerturbView& v, std::uint64_t step, std::uint64_t variant) {
  typename O::Sample;
  { o.draw(step, variant) } -> std::same_as<typename O::Sample>;
  { o(v, o.draw(step, variant)) } -> std::convertible_to<double>;
};

// The PINN loss on a PdeProblem.
struct PinnObjective {
  struct Sample {
    SpatialSample omega;
    Vec rhs;
  };

  const PdeProblem* problem = nullptr;
  std::uint64_t master = 0;
  Index B = 1;
  Index b = 1;
  // Variant draws keep the collocation points and redraw only the index sets.
  bool naive_shares_points = false;

  Sample draw(std::uint64_t step, std::uint64_t variant) const {
    Sample s{draw_spatial_sample(master, step, variant, B, problem->dim, b, false, naive_shares_points ? 0 : variant),
             {}};
    const TrackedMat X = s.omega.points();
    s.rhs = rhs_batch(*problem, *X);
    return s;
  }
  double operator()(const PerturbView& v, const Sample& s) const {
    return stochastic_loss(v, *problem, s.omega, s.rhs);
  }
};

struct TrainState {
  MlpParams params;
  std::vector<LayerSubspace> subspaces;
  std::uint64_t step = 0;  // number of completed steps
};

inline double subspace_dim(const TrainState& s) {
  double q = 0.0;
  for (std::size_t l = 0; l < s.subspaces.size(); ++l) {
    q += static_cast<double>(s.subspaces[l].rank * s.subspaces[l].rank);
    q += static_cast<double>(s.params.layers[l].bias.size());
  }
  return q;
}

// Builds subspaces and loads the bases that were active after `step`
// completed steps (the most recent refresh at a multiple of F).
inline TrainState make_train_state(MlpParams params, const SdzeConfig& cfg, std::uint64_t step = 0) {
  cfg.validate();
  TrainState s;
  std::vector<Index> ranks = cfg.ranks;
  if (ranks.size() == 1) ranks.assign(params.depth(), ranks.front());
  s.subspaces = make_subspaces(params, ranks);
  s.params = std::move(params);
  s.step = step;
  const std::uint64_t anchor = (step / cfg.freq_F) * cfg.freq_F;
  for (std::size_t l = 0; l < s.subspaces.size(); ++l) refresh_layer(s.subspaces[l], cfg.master, anchor, l);
  return s;
}

inline void apply_update(TrainState& s, const Perturbation& z, double scale) {
  for (std::size_t l = 0; l < s.params.depth(); ++l) {
    apply_rank_r_update(s.params.layers[l].W, s.subspaces[l], z.cores[l], scale);
    if (s.params.layers[l].bias.size() > 0) s.params.layers[l].bias += scale * z.bias_dirs[l];
  }
}

// Loss pair and delta at the current parameters and bases, without touching
// either. `z` receives the step's perturbation.
template <Objective O>
StepRecord estimate_delta(const TrainState& s, const O& obj, const SdzeConfig& cfg, std::uint64_t t, bool locked,
                          Perturbation& z) {
  const typename O::Sample omega_plus = obj.draw(t, 0);
  z = sample_perturbation(cfg.master, t, s.params, s.subspaces);
  StepRecord rec;
  rec.step = t;
  rec.loss_plus = obj(PerturbView{&s.params, &s.subspaces, &z, +1, cfg.eps}, omega_plus);
  if (locked) {
    rec.loss_minus = obj(PerturbView{&s.params, &s.subspaces, &z, -1, cfg.eps}, omega_plus);
  } else {
    const typename O::Sample omega_minus = obj.draw(t, 1);
    rec.loss_minus = obj(PerturbView{&s.params, &s.subspaces, &z, -1, cfg.eps}, omega_minus);
  }
  rec.delta_hat = (rec.loss_plus - rec.loss_minus) / (2.0 * cfg.eps);
  rec.finite = std::isfinite(rec.delta_hat) && std::isfinite(rec.loss_plus) && std::isfinite(rec.loss_minus);
  return rec;
}

namespace detail {

template <Objective O>
StepRecord zo_subspace_step(TrainState& s, const O& obj, const SdzeConfig& cfg, std::uint64_t t, bool locked) {
  const auto t0 = std::chrono::steady_clock::now();
  AllocationLedger ledger;
  LedgerScope scope(ledger);
  for (std::size_t l = 0; l < s.subspaces.size(); ++l) maybe_refresh(s.subspaces[l], t, cfg.freq_F, cfg.master, l);
  Perturbation z;
  StepRecord rec = estimate_delta(s, obj, cfg, t, locked, z);
  rec.alpha = lr_schedule(cfg.lr, t, subspace_dim(s));
  if (!rec.finite && locked) throw NonFiniteLoss(cfg.master, t, rec.loss_plus, rec.loss_minus);
  if (rec.finite) apply_update(s, z, -rec.alpha * rec.delta_hat);
  s.step = t;
  rec.peak_tmp_elems = ledger.peak();
  if (cfg.record_timing)
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace detail

template <Objective O>
StepRecord sdze_step(TrainState& s, const O& obj, const SdzeConfig& cfg, std::uint64_t t) {
  if (!cfg.crns) throw InvalidArgument("sdze_step: configuration has crns disabled");
  return detail::zo_subspace_step(s, obj, cfg, t, true);
}

// Unlocked variant: the -eps pass sees an independently drawn sample. A
// non-finite result is recorded (finite = false) and the update is skipped.
template <Objective O>
StepRecord sdze_step_naive(TrainState& s, const O& obj, const SdzeConfig& cfg, std::uint64_t t) {
  if (cfg.crns) throw InvalidArgument("sdze_step_naive: configuration has crns enabled");
  return detail::zo_subspace_step(s, obj, cfg, t, false);
}

namespace detail {

// theta += scale * z with z regenerated from (master, fullspace_z, t, 0).
inline void add_fullspace_direction(MlpParams& p, std::uint64_t master, std::uint64_t t, double scale) {
  RngStream s = derive_stream({master, Role::fullspace_z, t, 0});
  for (auto& L : p.layers) {
    for (Index i = 0; i < L.W.size(); ++i) L.W.data()[i] += scale * s.normal();
    for (Index i = 0; i < L.bias.size(); ++i) L.bias[i] += scale * s.normal();
  }
}

}  // namespace detail

// Full-space SPSA baseline. z is never stored: it is regenerated for the +eps
// shift, the -2 eps shift and the combined restore/update.
template <Objective O>
StepRecord fullspace_zo_step(MlpParams& params, const O& obj, const SdzeConfig& cfg, std::uint64_t t) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  AllocationLedger ledger;
  LedgerScope scope(ledger);
  const typename O::Sample omega = obj.draw(t, 0);
  StepRecord rec;
  rec.step = t;
  rec.alpha = lr_schedule(cfg.lr, t, static_cast<double>(params.parameter_count()));
  detail::add_fullspace_direction(params, cfg.master, t, cfg.eps);
  rec.loss_plus = obj(PerturbView::plain(params), omega);
  detail::add_fullspace_direction(params, cfg.master, t, -2.0 * cfg.eps);
  rec.loss_minus = obj(PerturbView::plain(params), omega);
  rec.delta_hat = (rec.loss_plus - rec.loss_minus) / (2.0 * cfg.eps);
  rec.finite = std::isfinite(rec.delta_hat);
  if (!rec.finite) {
    detail::add_fullspace_direction(params, cfg.master, t, cfg.eps);
    throw NonFiniteLoss(cfg.master, t, rec.loss_plus, rec.loss_minus);
  }
  detail::add_fullspace_direction(params, cfg.master, t, cfg.eps - rec.alpha * rec.delta_hat);
  rec.peak_tmp_elems = ledger.peak();
  if (cfg.record_timing)
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// Runs steps state.step + 1 .. cfg.steps. `after_step` sees the state and the
// record (it may fill rel_l2 or write checkpoints); records are returned.
template <Objective O>
std::vector<StepRecord> train(TrainState& s, const O& obj, const SdzeConfig& cfg,
                              const std::function<void(const TrainState&, StepRecord&)>& after_step = {}) {
  cfg.validate();
  std::vector<StepRecord> history;
  for (std::uint64_t t = s.step + 1; t <= cfg.steps; ++t) {
    StepRecord rec;
    try {
      rec = cfg.crns ? sdze_step(s, obj, cfg, t) : sdze_step_naive(s, obj, cfg, t);
    } catch (const NonFiniteLoss&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(t) + " (master=" + std::to_string(cfg.master) +
                               "): " + e.what());
    }
    if (after_step) after_step(s, rec);
    history.push_back(rec);
  }
  return history;
}

}  // namespace sdze
