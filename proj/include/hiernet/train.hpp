#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiernet/datapipe.hpp"
#include "hiernet/nnet.hpp"
#include "hiernet/sched.hpp"

namespace hiernet::train {

struct SgdrConfig {
  std::int64_t cycle_len = 0;  // iterations; 0 = one epoch
  double eta_min = 0.0;
  double cycle_mult = 1.0;
};

struct TrainConfig {
  int batch_size = 10;
  int head_epochs = 3;
  int fine_tune_epochs = 57;
  SgdrConfig sgdr;
  sched::LrFinderConfig lr_finder;
  sched::GroupLrPolicy policy;
  data::AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Node-level train/validation sets; images are already preprocessed.
struct NodeData {
  data::NodeDataset train;
  data::NodeDataset val;
};

enum class Stage { Head, FineTune };
std::string_view stage_name(Stage stage) noexcept;

struct IterationRecord {
  std::int64_t iter = 0;  // global across both stages
  nnet::GroupLrs lrs{};
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based, counted across both stages
  Stage stage = Stage::Head;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::vector<IterationRecord> iterations;
};

struct Snapshot {
  nnet::Network network;
  double val_accuracy;
  int epoch;
  std::string tag;
};

/// Keeps the network with the highest accuracy offered so far. A later epoch
/// replaces the snapshot only when strictly better.
class SnapshotKeeper {
 public:
  explicit SnapshotKeeper(std::string tag = {}) : tag_(std::move(tag)) {}

  /// Returns true when the offer became the new best.
  bool offer(double val_accuracy, int epoch, const nnet::Network& net);
  const std::optional<Snapshot>& best() const noexcept { return best_; }

 private:
  std::string tag_;
  std::optional<Snapshot> best_;
};

/// Epoch index (1-based) the keeper would retain for these accuracies.
int best_epoch(std::span<const double> accuracies);

struct TrainReport {
  sched::LrFinderResult lr_finder;
  double eta = 0.0;
  std::int64_t iters_per_epoch = 0;
  std::vector<EpochRecord> epochs;
  std::optional<Snapshot> best;
  nnet::Network final_network;
};

struct IterationEvent {
  Stage stage;
  int epoch;
  const IterationRecord& record;
  const nnet::Network& network;
};
using IterationObserver = std::function<void(const IterationEvent&)>;

/// Kaiming re-init of the last group from the config seed (the head-stage start).
void prepare_head(nnet::Network& net, const TrainConfig& cfg);

/// LR range test on cycled, un-augmented training batches, probing the last
/// group only; each step is scored on the full training set.
sched::LrFinderResult node_lr_finder(const nnet::Network& net, const data::NodeDataset& train,
                                     const TrainConfig& cfg);

/// Staged training of one node:
///   1. Kaiming re-init of the last group, then an LR range test -> eta.
///   2. head_epochs epochs at group lrs (0, 0, eta).
///   3. fine_tune_epochs epochs at policy * eta_t, eta_t following SGDR from eta.
/// Validation runs once per epoch in eval mode; the best epoch is snapshotted.
TrainReport train_node(nnet::Network net, const NodeData& data, const TrainConfig& cfg,
                       const std::string& tag = "node", const IterationObserver& observer = {});

/// Keeps the source's first and middle groups and attaches a fresh head.
nnet::Network transfer_from(const nnet::Network& source, const nnet::HeadSpec& head, Rng& rng);

struct Candidate {
  std::string tag;
  nnet::Network network;
};

struct BaselineChoice {
  std::size_t index;
  std::string tag;
  TrainReport report;
  std::vector<double> best_accuracies;  // per candidate
};

/// Index of the highest best-snapshot accuracy; the earliest wins ties.
std::size_t best_candidate(std::span<const double> best_accuracies);

/// Trains every candidate with the same config and returns the one with the
/// highest best-snapshot accuracy (earliest wins ties).
BaselineChoice select_best_baseline(std::span<const Candidate> candidates, const NodeData& data,
                                    const TrainConfig& cfg);

/// First epoch whose validation accuracy reaches `threshold`.
std::optional<int> epochs_to_reach(const TrainReport& report, double threshold);

// ---------------------------------------------------------------------------
// Generic pretraining (stand-in for an ImageNet backbone)
// ---------------------------------------------------------------------------

/// Binary texture task: straight gratings of random orientation and
/// frequency versus concentric rings of random frequency.
struct PretrainConfig {
  int samples = 240;
  int epochs = 6;
  double lr = 0.02;
  int batch_size = 10;
};

std::vector<data::NodeSample> generic_task_samples(std::size_t side, std::size_t channels, int count,
                                                   std::uint64_t seed);

nnet::Network pretrain_generic(const nnet::ArchSpec& arch, const PretrainConfig& cfg, std::size_t side,
                               std::size_t channels, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Helpers shared with evaluation
// ---------------------------------------------------------------------------

/// Row-stacked features of the given samples.
Tensor feature_matrix(const data::NodeDataset& samples);
std::vector<int> label_vector(const data::NodeDataset& samples);
/// Fraction of rows whose argmax (ties to class 0) equals the label.
double accuracy(const Tensor& probabilities, std::span<const int> labels);

}  // namespace hiernet::train
