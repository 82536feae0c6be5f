#include "hiernet/config.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"
#include "hiernet/json_util.hpp"
#include "hiernet/rng.hpp"

namespace hiernet::app {

using nlohmann::json;

namespace {

// nlohmann converts negative integers to size_t silently, so sizes are read signed.
void read_size(StrictObject& obj, const std::string& key, std::size_t& out, std::int64_t min_value) {
  std::int64_t value = static_cast<std::int64_t>(out);
  if (!obj.read(key, value)) return;
  if (value < min_value) {
    throw ConfigError(obj.context() + "." + key + " must be >= " + std::to_string(min_value));
  }
  out = static_cast<std::size_t>(value);
}

template <class F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

data::Preprocess preprocess_from_json(const json& doc) {
  data::Preprocess p;
  StrictObject obj(doc, "preprocess");
  obj.read("resize_short", p.resize_short);
  obj.read("crop", p.crop);
  obj.finish();
  if (p.resize_short < 1 || p.crop < 1) throw ConfigError("preprocess sizes must be >= 1");
  if (p.crop > p.resize_short) throw ConfigError("preprocess.crop must not exceed resize_short");
  return p;
}

data::SplitSpec split_from_json(const json& doc) {
  data::SplitSpec s;
  StrictObject obj(doc, "split");
  obj.read("train_fraction", s.train_fraction);
  obj.read("stratified", s.stratified);
  obj.finish();
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction must be in (0, 1)");
  }
  return s;
}

nnet::ArchSpec arch_from_json(const json& doc) {
  nnet::ArchSpec a;
  StrictObject obj(doc, "arch");
  read_size(obj, "stem_width", a.stem_width, 1);
  read_size(obj, "blocks", a.blocks, 0);
  read_size(obj, "cardinality", a.cardinality, 1);
  read_size(obj, "branch_width", a.branch_width, 1);
  read_size(obj, "head_hidden1", a.head_hidden1, 1);
  read_size(obj, "head_hidden2", a.head_hidden2, 1);
  obj.read("dropout1", a.dropout1);
  obj.read("dropout2", a.dropout2);
  obj.finish();
  for (double p : {a.dropout1, a.dropout2}) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("arch dropout must be in [0, 1)");
  }
  return a;
}

train::PretrainConfig pretrain_from_json(const json& doc) {
  train::PretrainConfig p;
  StrictObject obj(doc, "pretrain");
  obj.read("samples", p.samples);
  obj.read("epochs", p.epochs);
  obj.read("lr", p.lr);
  obj.read("batch_size", p.batch_size);
  obj.finish();
  if (p.samples < 2 || p.epochs < 0 || p.batch_size < 1 || !(p.lr >= 0.0)) {
    throw ConfigError("pretrain: samples >= 2, epochs >= 0, batch_size >= 1, lr >= 0 required");
  }
  return p;
}

}  // namespace

train::TrainConfig train_config_from_json(const json& doc, train::TrainConfig cfg,
                                          const std::string& context) {
  StrictObject obj(doc, context);
  obj.read("batch_size", cfg.batch_size);
  obj.read("head_epochs", cfg.head_epochs);
  obj.read("fine_tune_epochs", cfg.fine_tune_epochs);
  if (const json* sgdr = obj.child("sgdr")) {
    StrictObject s(*sgdr, context + ".sgdr");
    s.read("cycle_len", cfg.sgdr.cycle_len);
    s.read("eta_min", cfg.sgdr.eta_min);
    s.read("cycle_mult", cfg.sgdr.cycle_mult);
    s.finish();
  }
  if (const json* finder = obj.child("lr_finder")) {
    StrictObject f(*finder, context + ".lr_finder");
    f.read("start_lr", cfg.lr_finder.start_lr);
    f.read("end_lr", cfg.lr_finder.end_lr);
    f.read("num_iters", cfg.lr_finder.num_iters);
    f.read("smoothing_beta", cfg.lr_finder.smoothing_beta);
    f.read("divergence_factor", cfg.lr_finder.divergence_factor);
    f.finish();
  }
  obj.read("group_factors", cfg.policy.factors);
  if (const json* aug = obj.child("augment")) {
    StrictObject a(*aug, context + ".augment");
    a.read("rotate_prob", cfg.augment.rotate_prob);
    a.read("hflip_prob", cfg.augment.hflip_prob);
    a.read("vflip_prob", cfg.augment.vflip_prob);
    a.read("crop_prob", cfg.augment.crop_prob);
    a.read("crop_side", cfg.augment.crop_side);
    a.read("arbitrary_rotation", cfg.augment.arbitrary_rotation);
    a.finish();
  }
  obj.finish();
  as_config_error([&] { cfg.validate(); });
  return cfg;
}

json train_config_to_json(const train::TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"head_epochs", cfg.head_epochs},
              {"fine_tune_epochs", cfg.fine_tune_epochs},
              {"sgdr",
               {{"cycle_len", cfg.sgdr.cycle_len},
                {"eta_min", cfg.sgdr.eta_min},
                {"cycle_mult", cfg.sgdr.cycle_mult}}},
              {"lr_finder",
               {{"start_lr", cfg.lr_finder.start_lr},
                {"end_lr", cfg.lr_finder.end_lr},
                {"num_iters", cfg.lr_finder.num_iters},
                {"smoothing_beta", cfg.lr_finder.smoothing_beta},
                {"divergence_factor", cfg.lr_finder.divergence_factor}}},
              {"group_factors", cfg.policy.factors},
              {"augment",
               {{"rotate_prob", cfg.augment.rotate_prob},
                {"hflip_prob", cfg.augment.hflip_prob},
                {"vflip_prob", cfg.augment.vflip_prob},
                {"crop_prob", cfg.augment.crop_prob},
                {"crop_side", cfg.augment.crop_side},
                {"arbitrary_rotation", cfg.augment.arbitrary_rotation}}},
              {"seed", cfg.seed}};
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig cfg;
  StrictObject obj(doc, "config");
  obj.read("seed", cfg.seed);
  std::string output_dir = cfg.output_dir.string();
  obj.read("output_dir", output_dir);
  cfg.output_dir = output_dir;
  obj.read("use_auxiliary", cfg.use_auxiliary);

  if (const json* ds = obj.child("dataset")) {
    if (ds->is_object() && ds->contains("seed")) {
      throw ConfigError("dataset.seed is derived from the top-level seed");
    }
    cfg.dataset = data::dataset_spec_from_json(*ds);
  }
  if (const json* p = obj.child("preprocess")) cfg.preprocess = preprocess_from_json(*p);
  if (const json* s = obj.child("split")) cfg.split = split_from_json(*s);
  if (const json* a = obj.child("arch")) cfg.arch = arch_from_json(*a);
  if (const json* p = obj.child("pretrain")) cfg.pretrain = pretrain_from_json(*p);

  train::TrainConfig defaults;
  const json* train_doc = obj.child("train");
  if (train_doc != nullptr) {
    StrictObject t(*train_doc, "train");
    if (const json* d = t.child("defaults")) defaults = train_config_from_json(*d, defaults, "train.defaults");
    for (NodeId id : hierarchy::kNodes) {
      const std::string name(hierarchy::node_name(id));
      train::TrainConfig node_cfg = defaults;
      if (const json* n = t.child(name)) node_cfg = train_config_from_json(*n, defaults, "train." + name);
      cfg.nodes[static_cast<std::size_t>(id)] = node_cfg;
    }
    t.finish();
  } else {
    cfg.nodes.fill(defaults);
  }
  obj.finish();

  cfg.dataset.seed = derive_seed(cfg.seed, "dataset");
  cfg.split.seed = derive_seed(cfg.seed, "split");
  for (NodeId id : hierarchy::kNodes) {
    cfg.nodes[static_cast<std::size_t>(id)].seed =
        derive_seed(cfg.seed, "train/" + std::string(hierarchy::node_name(id)));
  }
  cfg.arch.input_dim = static_cast<std::size_t>(cfg.preprocess.crop) * static_cast<std::size_t>(cfg.preprocess.crop) *
                       static_cast<std::size_t>(cfg.dataset.channels);

  for (const auto& node_cfg : cfg.nodes) {
    if (node_cfg.augment.crop_prob > 0.0 && node_cfg.augment.crop_side > cfg.preprocess.crop) {
      throw ConfigError("augment.crop_side exceeds the preprocessed image side");
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

}  // namespace hiernet::app
