#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "hiernet/datapipe.hpp"
#include "hiernet/nnet.hpp"
#include "hiernet/train.hpp"

namespace hiernet::app {

using hierarchy::NodeId;

/// Everything a pipeline run needs. Component seeds are not configurable on
/// their own: each one is derive_seed(seed, <component name>).
///
///   dataset   -> "dataset"
///   split     -> "split"
///   pretrain  -> "pretrain"
///   node N    -> "train/<node>"   (TrainConfig::seed)
///   transfer  -> "transfer/<node>/<candidate>"
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  data::DatasetSpec dataset;
  data::Preprocess preprocess;
  data::SplitSpec split;
  nnet::ArchSpec arch;  // input_dim follows from preprocess and channels
  train::PretrainConfig pretrain;
  std::array<train::TrainConfig, 3> nodes;  // indexed by NodeId
  bool use_auxiliary = true;

  const train::TrainConfig& node(NodeId id) const { return nodes[static_cast<std::size_t>(id)]; }
};

/// Strict schema; unknown keys or wrong types raise ConfigError.
///
///   {
///     "seed": 7, "output_dir": "out",
///     "dataset": {...DatasetSpec without seed...},
///     "preprocess": {"resize_short": 24, "crop": 16},
///     "split": {"train_fraction": 0.75, "stratified": true},
///     "arch": {"stem_width": 32, "blocks": 1, "cardinality": 4, "branch_width": 8,
///              "head_hidden1": 32, "head_hidden2": 16, "dropout1": 0.25, "dropout2": 0.5},
///     "pretrain": {"samples": 240, "epochs": 6, "lr": 0.02, "batch_size": 10},
///     "use_auxiliary": true,
///     "train": {"defaults": {...}, "carci": {...}, "norbe": {...}, "invis": {...}}
///   }
///
/// Per-node train objects overlay "defaults"; a train object holds batch_size,
/// head_epochs, fine_tune_epochs, sgdr{cycle_len, eta_min, cycle_mult},
/// lr_finder{start_lr, end_lr, num_iters, smoothing_beta, divergence_factor},
/// group_factors[3] and augment{rotate_prob, hflip_prob, vflip_prob, crop_prob, crop_side,
/// arbitrary_rotation}.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses one train object on top of `base`.
train::TrainConfig train_config_from_json(const nlohmann::json& doc, train::TrainConfig base,
                                          const std::string& context);
nlohmann::json train_config_to_json(const train::TrainConfig& cfg);

}  // namespace hiernet::app
