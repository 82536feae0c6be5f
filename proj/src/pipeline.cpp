#include "hiernet/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "hiernet/error.hpp"
#include "hiernet/io.hpp"
#include "hiernet/json_util.hpp"
#include "hiernet/rng.hpp"
#include "hiernet/serialize.hpp"

namespace hiernet::app {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::vector<data::LabeledImage> pick(const std::vector<data::LabeledImage>& all,
                                     const std::vector<std::size_t>& idx) {
  std::vector<data::LabeledImage> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<data::LabeledImage> preprocess_all(const std::vector<data::LabeledImage>& raw,
                                               const data::Preprocess& preprocess) {
  std::vector<data::LabeledImage> out = raw;
  for (auto& sample : out) sample.image = preprocess.apply(sample.image);
  return out;
}

json preprocess_json(const data::Preprocess& p) {
  return json{{"resize_short", p.resize_short}, {"crop", p.crop}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

std::vector<data::LabeledImage> PreparedData::val_images() const { return pick(primary, split.val); }
std::vector<data::LabeledImage> PreparedData::train_images() const { return pick(primary, split.train); }

data::DatasetOnDisk generate_dataset(const RunConfig& cfg) {
  return {cfg.dataset, data::generate_synthetic(cfg.dataset), data::generate_auxiliary(cfg.dataset)};
}

data::DatasetOnDisk load_or_generate(const RunConfig& cfg, const std::optional<fs::path>& data_dir) {
  if (data_dir) return data::read_dataset(*data_dir);
  return generate_dataset(cfg);
}

PreparedData prepare(const data::DatasetOnDisk& dataset, const data::Preprocess& preprocess,
                     const data::SplitSpec& split) {
  PreparedData out;
  out.split = data::stratified_split(dataset.primary, split);
  out.primary = preprocess_all(dataset.primary, preprocess);
  out.auxiliary = preprocess_all(dataset.auxiliary, preprocess);
  return out;
}

train::NodeData node_data(const PreparedData& data, NodeId node, bool use_auxiliary) {
  const auto train_images = data.train_images();
  const auto val_images = data.val_images();
  train::NodeData out;
  if (use_auxiliary) {
    out.train = data::merge_auxiliary(train_images, data.auxiliary, node);
  } else {
    out.train = data::node_relabel(train_images, node);
  }
  out.val = data::node_relabel(val_images, node);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

nnet::Network generic_base(const RunConfig& cfg) {
  return train::pretrain_generic(cfg.arch, cfg.pretrain, static_cast<std::size_t>(cfg.preprocess.crop),
                                 static_cast<std::size_t>(cfg.dataset.channels),
                                 derive_seed(cfg.seed, "pretrain"));
}

nnet::Network transfer_candidate(const RunConfig& cfg, const nnet::Network& source, NodeId node,
                                 const std::string& tag) {
  nnet::HeadSpec head = cfg.arch.head_spec();
  head.in_dim = source.middle_output_dim();
  Rng rng = make_rng(cfg.seed, "transfer/" + std::string(hierarchy::node_name(node)) + "/" + tag);
  return train::transfer_from(source, head, rng);
}

NodeOutcome train_node_from(const RunConfig& cfg, const PreparedData& data, NodeId node,
                            const std::vector<train::Candidate>& candidates) {
  const train::NodeData nd = node_data(data, node, cfg.use_auxiliary);
  train::BaselineChoice choice = train::select_best_baseline(candidates, nd, cfg.node(node));
  NodeOutcome out{node, choice.tag, std::move(choice.report), {}};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.candidates.emplace_back(candidates[i].tag, choice.best_accuracies[i]);
  }
  return out;
}

std::string train_curve_csv(const train::TrainReport& report) {
  std::ostringstream out;
  out << "epoch,iter,lr,train_loss\n";
  for (const auto& e : report.epochs) {
    for (const auto& it : e.iterations) {
      out << e.epoch << ',' << it.iter << ',' << fmt(it.lrs[2]) << ',' << fmt(it.loss) << '\n';
    }
  }
  return out.str();
}

std::string val_curve_csv(const train::TrainReport& report) {
  std::ostringstream out;
  out << "epoch,val_loss,val_acc\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << fmt(e.val_loss) << ',' << fmt(e.val_accuracy) << '\n';
  }
  return out.str();
}

json report_to_json(const NodeOutcome& outcome) {
  const auto& r = outcome.report;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json lrs = json::array();
    for (const auto& it : e.iterations) lrs.push_back(it.lrs);
    epochs.push_back({{"epoch", e.epoch},
                      {"stage", train::stage_name(e.stage)},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"group_lrs", lrs}});
  }
  json candidates = json::array();
  for (const auto& [tag, acc] : outcome.candidates) {
    candidates.push_back({{"tag", tag}, {"best_val_accuracy", acc}});
  }
  json doc{{"node", hierarchy::node_name(outcome.node)},
           {"tag", outcome.tag},
           {"candidates", candidates},
           {"eta_max", r.lr_finder.eta_max},
           {"eta", r.eta},
           {"lr_finder_diverged", r.lr_finder.diverged},
           {"iters_per_epoch", r.iters_per_epoch},
           {"epochs", epochs},
           {"final", {{"file", "final.json"}}}};
  if (r.best) {
    doc["best"] = {{"file", "best.json"}, {"epoch", r.best->epoch}, {"val_accuracy", r.best->val_accuracy}};
  }
  return doc;
}

void write_node_outputs(const fs::path& dir, const NodeOutcome& outcome) {
  const auto& r = outcome.report;
  io::write_file_atomic(dir / "report.json", dump(report_to_json(outcome)));
  io::write_file_atomic(dir / "train_curve.csv", train_curve_csv(r));
  io::write_file_atomic(dir / "val_curve.csv", val_curve_csv(r));
  io::write_file_atomic(dir / "lr_find.csv", sched::lr_finder_csv(r.lr_finder));
  nnet::save_network(r.final_network, dir / "final.json");
  const nnet::Network& best = r.best ? r.best->network : r.final_network;
  nnet::save_network(best, dir / "best.json");
  json meta{{"network", "best.json"}, {"node", hierarchy::node_name(outcome.node)}, {"tag", outcome.tag}};
  if (r.best) {
    meta["epoch"] = r.best->epoch;
    meta["val_accuracy"] = r.best->val_accuracy;
  }
  io::write_file_atomic(dir / "best.meta.json", dump(meta));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

json manifest_to_json(const TreeManifest& m) {
  json nodes = json::object();
  for (NodeId id : hierarchy::kNodes) {
    json versions = json::array();
    for (const auto& v : m.versions(id)) versions.push_back({{"path", v.path}, {"weight", v.weight}});
    const auto order = hierarchy::class_order(id);
    nodes[std::string(hierarchy::node_name(id))] = {
        {"class_order", {order[0], order[1]}}, {"versions", versions}};
  }
  return json{{"format_version", kManifestFormatVersion},
              {"preprocess", preprocess_json(m.preprocess)},
              {"split",
               {{"train_fraction", m.split.train_fraction},
                {"seed", m.split.seed},
                {"stratified", m.split.stratified}}},
              {"use_auxiliary", m.use_auxiliary},
              {"nodes", nodes}};
}

TreeManifest manifest_from_json(const json& doc) {
  TreeManifest m;
  try {
    if (doc.at("format_version").get<int>() != kManifestFormatVersion) {
      throw DataError("unsupported manifest format_version");
    }
    m.preprocess.resize_short = doc.at("preprocess").at("resize_short").get<int>();
    m.preprocess.crop = doc.at("preprocess").at("crop").get<int>();
    m.split.train_fraction = doc.at("split").at("train_fraction").get<double>();
    m.split.seed = doc.at("split").at("seed").get<std::uint64_t>();
    m.split.stratified = doc.at("split").at("stratified").get<bool>();
    m.use_auxiliary = doc.at("use_auxiliary").get<bool>();
    for (NodeId id : hierarchy::kNodes) {
      const auto& node = doc.at("nodes").at(std::string(hierarchy::node_name(id)));
      const auto order = hierarchy::class_order(id);
      const auto stored = node.at("class_order").get<std::vector<std::string>>();
      if (stored.size() != 2 || stored[0] != order[0] || stored[1] != order[1]) {
        throw DataError("manifest node " + std::string(hierarchy::node_name(id)) +
                        " has an unexpected class_order");
      }
      for (const auto& v : node.at("versions")) {
        m.versions(id).push_back({v.at("path").get<std::string>(), v.at("weight").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed tree manifest: " + std::string(e.what()));
  }
  return m;
}

void save_manifest(const TreeManifest& manifest, const fs::path& path) {
  io::write_file_atomic(path, dump(manifest_to_json(manifest)));
}

TreeManifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(doc);
}

hierarchy::HierarchyTree load_tree(const TreeManifest& manifest, const fs::path& manifest_dir) {
  hierarchy::HierarchyTree tree;
  for (NodeId id : hierarchy::kNodes) {
    auto& model = tree.node(id);
    bool uniform = true;
    for (const auto& v : manifest.versions(id)) {
      model.versions.push_back(nnet::load_network(manifest_dir / v.path));
      model.weights.push_back(v.weight);
      if (v.weight != manifest.versions(id).front().weight) uniform = false;
    }
    if (uniform) model.weights.clear();
  }
  try {
    tree.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("tree manifest: ") + e.what());
  }
  return tree;
}

HierarchyRun train_hierarchy(const RunConfig& cfg, const data::DatasetOnDisk& dataset,
                             const fs::path& out_dir) {
  const PreparedData prepared = prepare(dataset, cfg.preprocess, cfg.split);
  const nnet::Network base = generic_base(cfg);
  nnet::save_network(base, out_dir / "generic" / "base.json");

  HierarchyRun run;
  TreeManifest manifest;
  manifest.preprocess = cfg.preprocess;
  manifest.split = cfg.split;
  manifest.use_auxiliary = cfg.use_auxiliary;

  auto finish_node = [&](NodeOutcome outcome) {
    const std::string name(hierarchy::node_name(outcome.node));
    write_node_outputs(out_dir / name, outcome);
    manifest.versions(outcome.node).push_back({name + "/best.json", 1.0});
    run.nodes.push_back(std::move(outcome));
  };

  finish_node(train_node_from(cfg, prepared, NodeId::Carci,
                              {{"generic", transfer_candidate(cfg, base, NodeId::Carci, "generic")}}));
  const auto& carci_report = run.nodes.front().report;
  const nnet::Network carci = carci_report.best ? carci_report.best->network : carci_report.final_network;

  for (NodeId id : {NodeId::NorBe, NodeId::InvIs}) {
    std::vector<train::Candidate> candidates{
        {"generic", transfer_candidate(cfg, base, id, "generic")},
        {"carci", transfer_candidate(cfg, carci, id, "carci")}};
    finish_node(train_node_from(cfg, prepared, id, candidates));
  }

  run.manifest_path = out_dir / "tree.json";
  save_manifest(manifest, run.manifest_path);
  return run;
}

void add_ensemble_version(const fs::path& manifest_path, NodeId node, const fs::path& snapshot,
                          double weight) {
  if (!(weight > 0.0) || !std::isfinite(weight)) throw ConfigError("ensemble weight must be positive");
  TreeManifest manifest = load_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  const nnet::Network added = nnet::load_network(snapshot);
  const hierarchy::HierarchyTree tree = load_tree(manifest, dir);
  if (added.input_dim() != tree.carci.input_dim()) {
    throw ShapeError("snapshot input width " + std::to_string(added.input_dim()) +
                     " does not match the tree's " + std::to_string(tree.carci.input_dim()));
  }
  const fs::path relative = fs::proximate(fs::absolute(snapshot), fs::absolute(dir));
  manifest.versions(node).push_back({relative.generic_string(), weight});
  save_manifest(manifest, manifest_path);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

data::Image preprocess_for(const TreeManifest& manifest, const data::Image& raw) {
  try {
    return manifest.preprocess.apply(raw);
  } catch (const std::invalid_argument& e) {
    throw ShapeError(std::string("cannot preprocess input: ") + e.what());
  }
}

EvalResult evaluate(const hierarchy::HierarchyTree& tree, const TreeManifest& manifest,
                    const data::DatasetOnDisk& dataset) {
  const PreparedData prepared = prepare(dataset, manifest.preprocess, manifest.split);
  const auto val = prepared.val_images();
  if (val.empty()) throw DataError("empty validation split");

  Tensor x(val.size(), val.front().image.pixels.size());
  std::vector<hierarchy::LeafLabel> truth;
  for (std::size_t r = 0; r < val.size(); ++r) {
    const auto features = data::to_features(val[r].image);
    if (features.size() != tree.carci.input_dim()) {
      throw ShapeError("validation images have width " + std::to_string(features.size()) +
                       ", the tree expects " + std::to_string(tree.carci.input_dim()));
    }
    std::copy(features.begin(), features.end(), x.row(r).begin());
    truth.push_back(val[r].label);
  }

  EvalResult result;
  result.confusion = eval::confusion(tree, x, truth);
  result.hard_accuracy = result.confusion.accuracy();

  std::size_t soft_correct = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_copy(r);
    const auto leaf = hierarchy::argmax_leaf(hierarchy::predict_soft(tree, row));
    if (leaf == truth[r]) ++soft_correct;
    if (leaf != hierarchy::predict_hard(tree, row)) ++result.soft_mismatches;
  }
  result.soft_accuracy = static_cast<double>(soft_correct) / static_cast<double>(x.rows());

  for (NodeId id : hierarchy::kNodes) {
    const auto samples = data::node_relabel(val, id);
    const auto i = static_cast<std::size_t>(id);
    result.node_samples[i] = samples.size();
    const Tensor nx = train::feature_matrix(samples);
    const auto ny = train::label_vector(samples);
    result.node_accuracy[i] = eval::node_accuracy(tree.node(id), nx, ny);
  }

  const std::string column = manifest.use_auxiliary ? "Init. + Ext." : "Init.";
  std::vector<eval::TableEntry> entries{
      {"Carci", column, result.node_accuracy[0]},
      {"NorBe", column, result.node_accuracy[1]},
      {"InvIs", column, result.node_accuracy[2]},
      {"Whole system", column, result.hard_accuracy},
      {"Whole system", "soft argmax", result.soft_accuracy}};
  const std::vector<std::string> columns{column, "soft argmax"};
  result.table = eval::render_table(entries, columns);
  return result;
}

void write_eval_outputs(const fs::path& dir, const EvalResult& result) {
  io::write_file_atomic(dir / "confusion.csv", eval::confusion_csv(result.confusion));
  io::write_file_atomic(dir / "table.csv", eval::table_csv(result.table));
  io::write_file_atomic(dir / "table.txt", eval::table_text(result.table));
  json counts = json::array();
  for (const auto& row : result.confusion.counts) counts.push_back(row);
  json nodes = json::object();
  for (NodeId id : hierarchy::kNodes) {
    const auto i = static_cast<std::size_t>(id);
    nodes[std::string(hierarchy::node_name(id))] = {{"accuracy", result.node_accuracy[i]},
                                                    {"samples", result.node_samples[i]}};
  }
  const json doc{{"samples", result.confusion.total()},
                 {"hard_accuracy", result.hard_accuracy},
                 {"soft_accuracy", result.soft_accuracy},
                 {"hard_soft_mismatches", result.soft_mismatches},
                 {"confusion", counts},
                 {"label_order", {"normal", "benign", "in_situ", "invasive"}},
                 {"nodes", nodes}};
  io::write_file_atomic(dir / "eval.json", dump(doc));
}

}  // namespace hiernet::app
