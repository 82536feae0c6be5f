#include "hiernet/sched.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"

namespace hiernet::sched {

void LrFinderConfig::validate() const {
  if (!(start_lr > 0.0)) throw std::invalid_argument("lr finder: start_lr must be positive");
  if (!(end_lr > start_lr)) throw std::invalid_argument("lr finder: end_lr must exceed start_lr");
  if (num_iters < 2) throw std::invalid_argument("lr finder: num_iters must be >= 2");
  if (!(smoothing_beta >= 0.0 && smoothing_beta < 1.0)) {
    throw std::invalid_argument("lr finder: smoothing_beta must be in [0, 1)");
  }
  if (!(divergence_factor > 1.0)) {
    throw std::invalid_argument("lr finder: divergence_factor must be > 1");
  }
}

double lr_at_iter(const LrFinderConfig& cfg, int t) {
  if (t < 0 || t >= cfg.num_iters) {
    throw std::invalid_argument("lr finder: iteration " + std::to_string(t) + " outside [0, " +
                                std::to_string(cfg.num_iters) + ")");
  }
  if (t == cfg.num_iters - 1) return cfg.end_lr;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.num_iters - 1);
  return cfg.start_lr * std::pow(cfg.end_lr / cfg.start_lr, frac);
}

LrFinderResult run_lr_finder(const ProbeStep& probe, const LrFinderConfig& cfg) {
  cfg.validate();
  LrFinderResult result;
  double average = 0.0;
  double best = 0.0;
  double beta_power = 1.0;
  for (int t = 0; t < cfg.num_iters; ++t) {
    const double lr = lr_at_iter(cfg, t);
    const double raw = probe(t, lr);
    if (!std::isfinite(raw)) {
      if (t == 0) throw NumericError("lr finder: non-finite loss at the first iteration");
      result.diverged = true;
      break;
    }
    average = cfg.smoothing_beta * average + (1.0 - cfg.smoothing_beta) * raw;
    beta_power *= cfg.smoothing_beta;
    const double smoothed = average / (1.0 - beta_power);
    result.curve.push_back({lr, raw, smoothed});
    if (t == 0 || smoothed < best) best = smoothed;
    if (smoothed > cfg.divergence_factor * best) {
      result.diverged = true;
      break;
    }
  }
  if (result.curve.size() < 2) {
    throw InsufficientDataError("lr finder recorded fewer than 2 points");
  }
  std::size_t arg_min = 0;
  for (std::size_t i = 1; i < result.curve.size(); ++i) {
    if (result.curve[i].smoothed_loss < result.curve[arg_min].smoothed_loss) arg_min = i;
  }
  result.eta_max = result.curve[arg_min].lr;
  result.eta = result.eta_max / 10.0;
  return result;
}

LrFinderResult run_lr_finder(const nnet::Network& net, const BatchSource& data,
                             const LrFinderConfig& cfg, Rng& rng,
                             const nnet::GroupLrs& probe_factors, const nnet::Batch* score) {
  nnet::Network probe_net = net;
  probe_net.set_mode(nnet::Mode::Train);
  auto probe = [&](int iter, double lr) {
    nnet::Batch batch = data(iter);
    auto step = nnet::loss_and_gradients(probe_net, batch.inputs, batch.labels, &rng);
    nnet::GroupLrs lrs{};
    for (std::size_t g = 0; g < lrs.size(); ++g) lrs[g] = probe_factors[g] * lr;
    nnet::sgd_step(probe_net, step.grads, lrs);
    const nnet::Batch& scored = score != nullptr ? *score : batch;
    return nnet::evaluate_loss(probe_net, scored.inputs, scored.labels);
  };
  return run_lr_finder(probe, cfg);
}

std::string lr_finder_csv(const LrFinderResult& result) {
  std::string out = "iter,lr,raw_loss,smoothed_loss\n";
  char line[160];
  for (std::size_t i = 0; i < result.curve.size(); ++i) {
    const auto& p = result.curve[i];
    std::snprintf(line, sizeof(line), "%zu,%.17e,%.17e,%.17e\n", i, p.lr, p.raw_loss,
                  p.smoothed_loss);
    out += line;
  }
  return out;
}

SgdrSchedule make_sgdr(double eta_max, std::int64_t cycle_len, double eta_min, double cycle_mult) {
  if (!(eta_max > 0.0)) throw std::invalid_argument("sgdr: eta_max must be positive");
  if (!(eta_min >= 0.0 && eta_min < eta_max)) {
    throw std::invalid_argument("sgdr: eta_min must satisfy 0 <= eta_min < eta_max");
  }
  if (cycle_len < 1) throw std::invalid_argument("sgdr: cycle length must be >= 1");
  if (!(cycle_mult >= 1.0)) throw std::invalid_argument("sgdr: cycle_mult must be >= 1");
  return SgdrSchedule{eta_max, eta_min, cycle_len, 0, cycle_mult};
}

double sgdr_lr(const SgdrSchedule& s) noexcept {
  const double phase = static_cast<double>(s.t_cur) / static_cast<double>(s.cycle_len);
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

SgdrSchedule sgdr_advance(SgdrSchedule s) noexcept {
  s.t_cur += 1;
  if (s.t_cur >= s.cycle_len) {
    s.t_cur = 0;
    const auto grown = static_cast<std::int64_t>(
        std::llround(static_cast<double>(s.cycle_len) * s.cycle_mult));
    s.cycle_len = grown < 1 ? 1 : grown;
  }
  return s;
}

void GroupLrPolicy::validate() const {
  for (double f : factors) {
    if (!(f >= 0.0)) throw std::invalid_argument("group lr factors must be non-negative");
  }
  if (factors[2] != 1.0) throw std::invalid_argument("last-group lr factor must be 1");
}

nnet::GroupLrs group_lrs(const GroupLrPolicy& policy, double eta_t) {
  if (!(eta_t >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  return {policy.factors[0] * eta_t, policy.factors[1] * eta_t, policy.factors[2] * eta_t};
}

}  // namespace hiernet::sched
