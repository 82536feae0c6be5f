#include "hiernet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"

namespace hiernet::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (head_epochs < 0 || fine_tune_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  if (sgdr.cycle_len < 0) throw std::invalid_argument("sgdr cycle_len must be >= 0");
  if (!(sgdr.cycle_mult >= 1.0)) throw std::invalid_argument("sgdr cycle_mult must be >= 1");
  if (!(sgdr.eta_min >= 0.0)) throw std::invalid_argument("sgdr eta_min must be >= 0");
  lr_finder.validate();
  policy.validate();
  augment.validate();
}

std::string_view stage_name(Stage stage) noexcept {
  return stage == Stage::Head ? "head" : "fine_tune";
}

bool SnapshotKeeper::offer(double val_accuracy, int epoch, const nnet::Network& net) {
  if (best_ && !(val_accuracy > best_->val_accuracy)) return false;
  best_.emplace(Snapshot{net, val_accuracy, epoch, tag_});
  return true;
}

int best_epoch(std::span<const double> accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("no epochs to snapshot");
  std::size_t best = 0;
  for (std::size_t i = 1; i < accuracies.size(); ++i) {
    if (accuracies[i] > accuracies[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

Tensor feature_matrix(const data::NodeDataset& samples) {
  if (samples.empty()) return Tensor();
  const std::size_t width = samples.front().image.pixels.size();
  Tensor out(samples.size(), width);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].image.pixels.size() != width) {
      throw ShapeError("sample " + std::to_string(r) + " has a different size than sample 0");
    }
    auto features = data::to_features(samples[r].image);
    std::copy(features.begin(), features.end(), out.row(r).begin());
  }
  return out;
}

std::vector<int> label_vector(const data::NodeDataset& samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return labels;
}

double accuracy(const Tensor& probabilities, std::span<const int> labels) {
  if (probabilities.rows() == 0) throw std::invalid_argument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < probabilities.rows(); ++r) {
    const int predicted = probabilities(r, 1) > probabilities(r, 0) ? 1 : 0;
    if (predicted == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probabilities.rows());
}

namespace {

nnet::Batch make_batch(const data::NodeDataset& samples, std::span<const std::size_t> indices,
                       const data::AugmentConfig* augment, Rng* augment_rng) {
  const std::size_t width = samples[indices.front()].image.pixels.size();
  nnet::Batch batch{Tensor(indices.size(), width), {}};
  batch.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& sample = samples[indices[r]];
    std::vector<double> features;
    if (augment != nullptr && augment->enabled()) {
      features = data::to_features(data::augment(sample.image, *augment, *augment_rng));
    } else {
      features = data::to_features(sample.image);
    }
    if (features.size() != width) throw ShapeError("augmentation changed the sample size");
    std::copy(features.begin(), features.end(), batch.inputs.row(r).begin());
    batch.labels.push_back(sample.label);
  }
  return batch;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

void prepare_head(nnet::Network& net, const TrainConfig& cfg) {
  Rng init_rng = make_rng(cfg.seed, "head-init");
  net.reinitialize_group(nnet::LayerGroup::Last, init_rng);
}

sched::LrFinderResult node_lr_finder(const nnet::Network& net, const data::NodeDataset& train,
                                     const TrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("lr finder: empty training set");
  Rng finder_rng = make_rng(cfg.seed, "lr-finder");
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_train = train.size();
  std::vector<std::size_t> order = iota_indices(n_train);
  std::shuffle(order.begin(), order.end(), finder_rng);
  auto batches = [&](int iter) {
    const std::size_t start = (static_cast<std::size_t>(iter) * batch_size) % n_train;
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < std::min(batch_size, n_train); ++k) {
      idx.push_back(order[(start + k) % n_train]);
    }
    return make_batch(train, idx, nullptr, nullptr);
  };
  // Minibatch losses are too noisy at this scale to locate a minimum, so every
  // step is scored on the whole (un-augmented) training set.
  const nnet::Batch whole = make_batch(train, iota_indices(n_train), nullptr, nullptr);
  return sched::run_lr_finder(net, batches, cfg.lr_finder, finder_rng, {0.0, 0.0, 1.0}, &whole);
}

TrainReport train_node(nnet::Network net, const NodeData& data, const TrainConfig& cfg,
                       const std::string& tag, const IterationObserver& observer) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train_node: empty training set");
  if (data.val.empty()) throw std::invalid_argument("train_node: empty validation set");

  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  Rng dropout_rng = make_rng(cfg.seed, "dropout");
  Rng augment_rng = make_rng(cfg.seed, "augment");

  prepare_head(net, cfg);
  sched::LrFinderResult finder = node_lr_finder(net, data.train, cfg);
  const std::size_t n_train = data.train.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const auto iters_per_epoch = static_cast<std::int64_t>((n_train + batch_size - 1) / batch_size);
  const double eta = finder.eta;

  const Tensor val_x = feature_matrix(data.val);
  const std::vector<int> val_y = label_vector(data.val);

  SnapshotKeeper keeper(tag);
  std::vector<EpochRecord> epochs;
  std::int64_t global_iter = 0;
  const std::int64_t cycle_len = cfg.sgdr.cycle_len > 0 ? cfg.sgdr.cycle_len : iters_per_epoch;
  // eta comes from the range test, so eta_min is capped below it.
  sched::SgdrSchedule sgdr = sched::make_sgdr(eta, cycle_len, std::min(cfg.sgdr.eta_min, eta / 2.0),
                                              cfg.sgdr.cycle_mult);
  std::vector<std::size_t> order = iota_indices(n_train);

  auto run_epoch = [&](Stage stage, int epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.stage = stage;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    net.set_mode(nnet::Mode::Train);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, n_train);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      nnet::Batch batch = make_batch(data.train, idx, &cfg.augment, &augment_rng);

      nnet::LossAndGrad step;
      try {
        step = nnet::loss_and_gradients(net, batch.inputs, batch.labels, &dropout_rng);
      } catch (const NumericError&) {
        throw NumericError(tag + ": non-finite loss at epoch " + std::to_string(epoch) +
                           ", iteration " + std::to_string(global_iter));
      }

      nnet::GroupLrs lrs{};
      if (stage == Stage::Head) {
        lrs = {0.0, 0.0, eta};
      } else {
        lrs = sched::group_lrs(cfg.policy, sched::sgdr_lr(sgdr));
        sgdr = sched::sgdr_advance(sgdr);
      }
      nnet::sgd_step(net, step.grads, lrs);

      IterationRecord it{global_iter, lrs, step.loss};
      record.iterations.push_back(it);
      loss_sum += step.loss * static_cast<double>(idx.size());
      if (observer) observer(IterationEvent{stage, epoch, record.iterations.back(), net});
      ++global_iter;
    }
    net.set_mode(nnet::Mode::Eval);
    record.train_loss = loss_sum / static_cast<double>(n_train);
    const Tensor probs = nnet::predict_proba(net, val_x);
    record.val_loss = nnet::evaluate_loss(net, val_x, val_y);
    record.val_accuracy = accuracy(probs, val_y);
    if (!std::isfinite(record.val_loss)) {
      throw NumericError(tag + ": non-finite validation loss at epoch " + std::to_string(epoch));
    }
    keeper.offer(record.val_accuracy, epoch, net);
    epochs.push_back(std::move(record));
  };

  int epoch = 0;
  for (int e = 0; e < cfg.head_epochs; ++e) run_epoch(Stage::Head, ++epoch);
  for (int e = 0; e < cfg.fine_tune_epochs; ++e) run_epoch(Stage::FineTune, ++epoch);

  net.set_mode(nnet::Mode::Eval);
  return TrainReport{std::move(finder), eta, iters_per_epoch, std::move(epochs), keeper.best(),
                     std::move(net)};
}

nnet::Network transfer_from(const nnet::Network& source, const nnet::HeadSpec& head, Rng& rng) {
  const std::size_t base_dim = source.middle_output_dim();
  if (head.in_dim != base_dim) {
    throw ShapeError("head expects width " + std::to_string(head.in_dim) +
                     ", transferred base produces " + std::to_string(base_dim));
  }
  std::vector<nnet::Layer> layers(source.layers().begin(),
                                  source.layers().begin() + static_cast<std::ptrdiff_t>(source.middle_end()));
  for (auto& layer : nnet::make_head(head, rng)) layers.push_back(std::move(layer));
  nnet::Network out(std::move(layers), source.first_end(), source.middle_end());
  out.set_mode(nnet::Mode::Eval);
  return out;
}

std::size_t best_candidate(std::span<const double> best_accuracies) {
  if (best_accuracies.empty()) throw std::invalid_argument("select_best_baseline: no candidates");
  return static_cast<std::size_t>(best_epoch(best_accuracies) - 1);
}

BaselineChoice select_best_baseline(std::span<const Candidate> candidates, const NodeData& data,
                                    const TrainConfig& cfg) {
  if (candidates.empty()) throw std::invalid_argument("select_best_baseline: no candidates");
  std::vector<TrainReport> reports;
  std::vector<double> accuracies;
  for (const auto& candidate : candidates) {
    reports.push_back(train_node(candidate.network, data, cfg, candidate.tag));
    accuracies.push_back(reports.back().best ? reports.back().best->val_accuracy : 0.0);
  }
  const std::size_t index = best_candidate(accuracies);
  return BaselineChoice{index, candidates[index].tag, std::move(reports[index]), std::move(accuracies)};
}

std::optional<int> epochs_to_reach(const TrainReport& report, double threshold) {
  for (const auto& e : report.epochs) {
    if (e.val_accuracy >= threshold) return e.epoch;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Generic pretraining
// ---------------------------------------------------------------------------

std::vector<data::NodeSample> generic_task_samples(std::size_t side, std::size_t channels, int count,
                                                   std::uint64_t seed) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<data::NodeSample> out;
  out.reserve(static_cast<std::size_t>(count));
  const double centre = (static_cast<double>(side) - 1.0) / 2.0;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, "generic/" + std::to_string(i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int label = i % 2;
    const double cycles = 1.0 + 3.0 * unit(rng);  // across the image
    const double angle = kTwoPi * unit(rng);
    const double phase = kTwoPi * unit(rng);
    const double amplitude = 0.1 + 0.2 * unit(rng);
    std::normal_distribution<double> noise(0.0, 0.08);
    data::Image img(side, side, channels);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = (static_cast<double>(y) - centre) / static_cast<double>(side);
        const double dx = (static_cast<double>(x) - centre) / static_cast<double>(side);
        const double coord = label == 0 ? dx * std::cos(angle) + dy * std::sin(angle) : std::hypot(dx, dy);
        const double v = amplitude * std::cos(kTwoPi * cycles * coord + phase);
        for (std::size_t c = 0; c < channels; ++c) {
          img.at(y, x, c) = std::clamp(0.5 + v + noise(rng), 0.0, 1.0);
        }
      }
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

nnet::Network pretrain_generic(const nnet::ArchSpec& arch, const PretrainConfig& cfg, std::size_t side,
                               std::size_t channels, std::uint64_t seed) {
  if (cfg.samples < 2 || cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr >= 0.0)) {
    throw std::invalid_argument("invalid generic pretraining config");
  }
  Rng init_rng = make_rng(seed, "generic-init");
  Rng shuffle_rng = make_rng(seed, "generic-shuffle");
  Rng dropout_rng = make_rng(seed, "generic-dropout");
  nnet::Network net = nnet::make_classifier(arch, init_rng);
  const auto samples = generic_task_samples(side, channels, cfg.samples, seed);
  if (samples.front().image.pixels.size() != net.input_dim()) {
    throw ShapeError("generic task images do not match the architecture input width");
  }
  std::vector<std::size_t> order = iota_indices(samples.size());
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  net.set_mode(nnet::Mode::Train);
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      auto batch = make_batch(samples, std::span<const std::size_t>(order.data() + start, end - start),
                              nullptr, nullptr);
      auto step = nnet::loss_and_gradients(net, batch.inputs, batch.labels, &dropout_rng);
      nnet::sgd_step(net, step.grads, {cfg.lr, cfg.lr, cfg.lr});
    }
  }
  net.set_mode(nnet::Mode::Eval);
  return net;
}

}  // namespace hiernet::train
