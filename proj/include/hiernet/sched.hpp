#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hiernet/nnet.hpp"
#include "hiernet/rng.hpp"

namespace hiernet::sched {

// ---------------------------------------------------------------------------
// LR range test
// ---------------------------------------------------------------------------

struct LrFinderConfig {
  double start_lr = 1e-5;
  double end_lr = 10.0;
  int num_iters = 100;
  double smoothing_beta = 0.98;
  double divergence_factor = 4.0;

  void validate() const;
};

struct LrFinderPoint {
  double lr;
  double raw_loss;
  double smoothed_loss;
};

struct LrFinderResult {
  std::vector<LrFinderPoint> curve;
  double eta_max = 0.0;
  double eta = 0.0;      // eta_max / 10
  bool diverged = false; // stopped on the divergence rule before num_iters
};

/// start * (end / start)^(t / (num_iters - 1)); the last iteration returns end_lr exactly.
double lr_at_iter(const LrFinderConfig& cfg, int t);

/// Applies one update at `lr` and returns the loss observed after that update.
using ProbeStep = std::function<double(int iter, double lr)>;

/// Drives a probe through the exponential lr sweep.
///
/// Losses are smoothed with a bias-corrected exponential moving average; the
/// sweep stops once the smoothed loss exceeds divergence_factor times the best
/// smoothed loss seen so far, or when a loss turns non-finite after the first
/// iteration. eta_max is the lr at the minimum smoothed loss (first one on ties).
LrFinderResult run_lr_finder(const ProbeStep& probe, const LrFinderConfig& cfg);

/// Yields the batch for iteration `iter`; sources are expected to cycle.
using BatchSource = std::function<nnet::Batch(int iter)>;

/// Network probe. Trains a private copy with group lrs `probe_factors * lr`
/// and scores each step by the eval-mode loss after the update, on `score`
/// when given and on the step's own batch otherwise. The caller's network is
/// never modified.
LrFinderResult run_lr_finder(const nnet::Network& net, const BatchSource& data,
                             const LrFinderConfig& cfg, Rng& rng,
                             const nnet::GroupLrs& probe_factors = {0.0, 0.0, 1.0},
                             const nnet::Batch* score = nullptr);

/// Header `iter,lr,raw_loss,smoothed_loss`, values in %.17e.
std::string lr_finder_csv(const LrFinderResult& result);

// ---------------------------------------------------------------------------
// SGDR
// ---------------------------------------------------------------------------

struct SgdrSchedule {
  double eta_max = 0.0;
  double eta_min = 0.0;
  std::int64_t cycle_len = 1;  // T_i, in iterations
  std::int64_t t_cur = 0;
  double cycle_mult = 1.0;
};

/// Validated constructor: eta_max > 0, 0 <= eta_min < eta_max, cycle_len >= 1, cycle_mult >= 1.
SgdrSchedule make_sgdr(double eta_max, std::int64_t cycle_len, double eta_min = 0.0,
                       double cycle_mult = 1.0);

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / T_i)) / 2
double sgdr_lr(const SgdrSchedule& s) noexcept;

/// t_cur + 1, with a warm restart (t_cur = 0, T_i = round(T_i * cycle_mult)) at the cycle end.
SgdrSchedule sgdr_advance(SgdrSchedule s) noexcept;

// ---------------------------------------------------------------------------
// Discriminative group learning rates
// ---------------------------------------------------------------------------

struct GroupLrPolicy {
  std::array<double, 3> factors{0.0, 0.2, 1.0};  // first, middle, last

  void validate() const;
};

nnet::GroupLrs group_lrs(const GroupLrPolicy& policy, double eta_t);

}  // namespace hiernet::sched
