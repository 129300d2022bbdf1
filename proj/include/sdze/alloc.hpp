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

// Allocation accounting for temporaries.
//
// Every intermediate buffer of the forward, jet, sampling and update paths is
// a TrackedMat. While an AllocationLedger is installed on the current thread
// (LedgerScope), TrackedMat construction/destruction reports element counts
// to it, and the ledger keeps the live total, per-phase peaks and the largest
// single buffer. Resident state (weights, subspace bases) is not tracked.
// Eigen's internal GEMM packing blocks are cache-sized and not counted.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string_view>
#include <utility>

#include "sdze/rng.hpp"

namespace sdze {

enum class Phase : int { sampling = 0, forward, jets, update, refresh, count };

constexpr std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::sampling: return "sampling";
    case Phase::forward: return "forward";
    case Phase::jets: return "jets";
    case Phase::update: return "update";
    case Phase::refresh: return "refresh";
    case Phase::count: break;
  }
  return "?";
}

class AllocationLedger {
 public:
  void acquire(std::size_t n) {
    live_ += n;
    largest_ = std::max(largest_, n);
    auto& pk = phase_peak_[static_cast<std::size_t>(phase_)];
    pk = std::max(pk, live_);
    peak_ = std::max(peak_, live_);
  }
  void release(std::size_t n) { live_ -= std::min(n, live_); }

  Phase phase() const { return phase_; }
  void set_phase(Phase p) { phase_ = p; }

  std::size_t live() const { return live_; }
  std::size_t peak() const { return peak_; }
  std::size_t peak(Phase p) const { return phase_peak_[static_cast<std::size_t>(p)]; }
  std::size_t largest_buffer() const { return largest_; }

  // Counts layer-level primal (value plane) evaluations; the jet path must
  // run exactly one per layer regardless of the number of seeded directions.
  void note_primal_layer() { ++primal_layer_evals_; }
  std::size_t primal_layer_evals() const { return primal_layer_evals_; }

  // Clears peaks between steps; live buffers (if any) carry over.
  void reset() {
    peak_ = live_;
    largest_ = 0;
    phase_peak_.fill(0);
    primal_layer_evals_ = 0;
  }

 private:
  std::size_t live_ = 0;
  std::size_t peak_ = 0;
  std::size_t largest_ = 0;
  std::array<std::size_t, static_cast<std::size_t>(Phase::count)> phase_peak_{};
  std::size_t primal_layer_evals_ = 0;
  Phase phase_ = Phase::forward;
};

inline AllocationLedger*& active_ledger() {
  thread_local AllocationLedger* current = nullptr;
  return current;
}

class LedgerScope {
 public:
  explicit LedgerScope(AllocationLedger& ledger) : prev_(std::exchange(active_ledger(), &ledger)) {}
  ~LedgerScope() { active_ledger() = prev_; }
  LedgerScope(const LedgerScope&) = delete;
  LedgerScope& operator=(const LedgerScope&) = delete;

 private:
  AllocationLedger* prev_;
};

class PhaseScope {
 public:
  explicit PhaseScope(Phase p) {
    if (auto* l = active_ledger()) {
      prev_ = l->phase();
      l->set_phase(p);
    }
  }
  ~PhaseScope() {
    if (auto* l = active_ledger()) l->set_phase(prev_);
  }
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  Phase prev_ = Phase::forward;
};

// Row-major dense matrix whose storage is reported to the active ledger.
class TrackedMat {
 public:
  TrackedMat() = default;
  TrackedMat(Index rows, Index cols) : m_(rows, cols) { track(); }
  static TrackedMat zeros(Index rows, Index cols) {
    TrackedMat t(rows, cols);
    t.m_.setZero();
    return t;
  }

  TrackedMat(TrackedMat&& o) noexcept
      : m_(std::move(o.m_)), ledger_(std::exchange(o.ledger_, nullptr)), size_(std::exchange(o.size_, 0)) {}
  TrackedMat& operator=(TrackedMat&& o) noexcept {
    if (this != &o) {
      untrack();
      m_ = std::move(o.m_);
      ledger_ = std::exchange(o.ledger_, nullptr);
      size_ = std::exchange(o.size_, 0);
    }
    return *this;
  }
  TrackedMat(const TrackedMat&) = delete;
  TrackedMat& operator=(const TrackedMat&) = delete;
  ~TrackedMat() { untrack(); }

  Mat& operator*() { return m_; }
  const Mat& operator*() const { return m_; }
  Mat* operator->() { return &m_; }
  const Mat* operator->() const { return &m_; }
  Mat& mat() { return m_; }
  const Mat& mat() const { return m_; }

  // Hands the storage over as a plain (untracked) matrix.
  Mat release() && {
    untrack();
    return std::move(m_);
  }

 private:
  void track() {
    ledger_ = active_ledger();
    size_ = static_cast<std::size_t>(m_.size());
    if (ledger_) ledger_->acquire(size_);
  }
  void untrack() {
    if (ledger_) ledger_->release(size_);
    ledger_ = nullptr;
    size_ = 0;
  }

  Mat m_;
  AllocationLedger* ledger_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace sdze
