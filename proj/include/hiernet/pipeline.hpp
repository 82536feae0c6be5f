#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiernet/config.hpp"
#include "hiernet/datapipe.hpp"
#include "hiernet/eval.hpp"
#include "hiernet/hierarchy.hpp"
#include "hiernet/train.hpp"

namespace hiernet::app {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// Primary and auxiliary images after preprocessing, plus the primary split.
/// Auxiliary images never enter validation.
struct PreparedData {
  std::vector<data::LabeledImage> primary;
  std::vector<data::LabeledImage> auxiliary;
  data::SplitIndices split;

  std::vector<data::LabeledImage> val_images() const;
  std::vector<data::LabeledImage> train_images() const;
};

data::DatasetOnDisk generate_dataset(const RunConfig& cfg);

/// Reads `data_dir` when given, otherwise regenerates the dataset from cfg.
data::DatasetOnDisk load_or_generate(const RunConfig& cfg, const std::optional<fs::path>& data_dir);

PreparedData prepare(const data::DatasetOnDisk& dataset, const data::Preprocess& preprocess,
                     const data::SplitSpec& split);

train::NodeData node_data(const PreparedData& data, NodeId node, bool use_auxiliary);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Network pretrained on the generic texture task (the "generic" baseline source).
nnet::Network generic_base(const RunConfig& cfg);

/// Keeps `source`'s first and middle groups under a fresh head seeded from
/// (global seed, node, candidate tag).
nnet::Network transfer_candidate(const RunConfig& cfg, const nnet::Network& source, NodeId node,
                                 const std::string& tag);

struct NodeOutcome {
  NodeId node = NodeId::Carci;
  std::string tag;
  train::TrainReport report;
  std::vector<std::pair<std::string, double>> candidates;  // tag, best val accuracy
};

NodeOutcome train_node_from(const RunConfig& cfg, const PreparedData& data, NodeId node,
                            const std::vector<train::Candidate>& candidates);

/// Writes report.json, train_curve.csv, val_curve.csv, lr_find.csv,
/// best.json (+ best.meta.json) and final.json under `dir`.
void write_node_outputs(const fs::path& dir, const NodeOutcome& outcome);

nlohmann::json report_to_json(const NodeOutcome& outcome);
std::string train_curve_csv(const train::TrainReport& report);
std::string val_curve_csv(const train::TrainReport& report);

// ---------------------------------------------------------------------------
// Tree manifest
// ---------------------------------------------------------------------------

inline constexpr int kManifestFormatVersion = 1;

struct ManifestVersion {
  std::string path;  // relative to the manifest's directory
  double weight = 1.0;
};

struct TreeManifest {
  data::Preprocess preprocess;
  data::SplitSpec split;
  bool use_auxiliary = true;
  std::array<std::vector<ManifestVersion>, 3> nodes;  // indexed by NodeId

  std::vector<ManifestVersion>& versions(NodeId id) { return nodes[static_cast<std::size_t>(id)]; }
  const std::vector<ManifestVersion>& versions(NodeId id) const {
    return nodes[static_cast<std::size_t>(id)];
  }
};

nlohmann::json manifest_to_json(const TreeManifest& manifest);
TreeManifest manifest_from_json(const nlohmann::json& doc);
void save_manifest(const TreeManifest& manifest, const fs::path& path);
TreeManifest load_manifest(const fs::path& path);

/// Loads every version; equal weights collapse to the plain mean.
hierarchy::HierarchyTree load_tree(const TreeManifest& manifest, const fs::path& manifest_dir);

struct HierarchyRun {
  std::vector<NodeOutcome> nodes;  // Carci, NorBe, InvIs
  fs::path manifest_path;
};

/// generic pretraining -> Carci -> NorBe and InvIs, each picking the better of
/// {generic, carci} as its starting point. Everything lands under `out_dir`.
HierarchyRun train_hierarchy(const RunConfig& cfg, const data::DatasetOnDisk& dataset,
                             const fs::path& out_dir);

/// Appends a serialized network as a new version of `node`.
void add_ensemble_version(const fs::path& manifest_path, NodeId node, const fs::path& snapshot,
                          double weight);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  eval::ConfusionMatrix confusion;
  double hard_accuracy = 0.0;
  double soft_accuracy = 0.0;
  std::array<double, 3> node_accuracy{};
  std::array<std::size_t, 3> node_samples{};
  std::size_t soft_mismatches = 0;
  eval::PerformanceTable table;
};

/// Validation split recomputed from the dataset with the manifest's preprocess/split.
EvalResult evaluate(const hierarchy::HierarchyTree& tree, const TreeManifest& manifest,
                    const data::DatasetOnDisk& dataset);

/// confusion.csv, table.csv, table.txt and eval.json.
void write_eval_outputs(const fs::path& dir, const EvalResult& result);

/// The manifest's preprocessing applied to one raw image.
data::Image preprocess_for(const TreeManifest& manifest, const data::Image& raw);

}  // namespace hiernet::app
