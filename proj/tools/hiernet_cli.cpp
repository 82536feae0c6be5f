// hiernet: data generation, training, evaluation and inference for the
// three-node hierarchy. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hiernet/config.hpp"
#include "hiernet/error.hpp"
#include "hiernet/io.hpp"
#include "hiernet/pipeline.hpp"
#include "hiernet/serialize.hpp"

namespace fs = std::filesystem;
using namespace hiernet;
using hierarchy::NodeId;

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

int fail(int code, std::string_view tag, std::string_view message) {
  std::cerr << "error: " << tag << ": " << message << '\n';
  return code;
}

NodeId parse_node(const std::string& name) {
  try {
    return hierarchy::node_from_name(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("unknown node '" + name + "' (expected carci, norbe or invis)");
  }
}

fs::path dir_of(const fs::path& file) {
  return file.parent_path().empty() ? fs::path(".") : file.parent_path();
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string shortest(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Starting network for a single-node command: the snapshot's base when
/// given, otherwise the generic pretrained base, always under a fresh head.
train::Candidate start_candidate(const app::RunConfig& cfg, NodeId node, const std::optional<fs::path>& from) {
  if (from) {
    const nnet::Network source = nnet::load_network(*from);
    return {"from", app::transfer_candidate(cfg, source, node, "from")};
  }
  return {"generic", app::transfer_candidate(cfg, app::generic_base(cfg), node, "generic")};
}

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string node;
  std::string from;
  std::string manifest;
  std::string add;
  std::string input;
  double weight = 1.0;
  bool soft = false;
};

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

fs::path output_dir(const app::RunConfig& cfg, const Options& o) {
  return o.out.empty() ? cfg.output_dir : fs::path(o.out);
}

int cmd_gen_data(const Options& o) {
  const app::RunConfig cfg = app::load_run_config(o.config);
  const data::DatasetOnDisk dataset = app::generate_dataset(cfg);
  data::write_dataset(o.out, dataset);
  std::array<std::size_t, 4> counts{};
  for (const auto& s : dataset.primary) ++counts[static_cast<std::size_t>(s.label)];
  for (auto label : hierarchy::kLeafLabels) {
    std::cout << hierarchy::leaf_name(label) << ' ' << counts[static_cast<std::size_t>(label)] << '\n';
  }
  std::size_t aux_benign = 0;
  for (const auto& s : dataset.auxiliary) aux_benign += s.aux_label == data::AuxLabel::BenignAux ? 1 : 0;
  std::cout << "aux_benign " << aux_benign << '\n'
            << "aux_malignant " << dataset.auxiliary.size() - aux_benign << '\n';
  return kOk;
}

int cmd_lr_find(const Options& o) {
  const app::RunConfig cfg = app::load_run_config(o.config);
  const NodeId node = parse_node(o.node);
  const auto dataset = app::load_or_generate(cfg, optional_path(o.data));
  const auto prepared = app::prepare(dataset, cfg.preprocess, cfg.split);
  const train::NodeData nd = app::node_data(prepared, node, cfg.use_auxiliary);
  train::Candidate start = start_candidate(cfg, node, optional_path(o.from));
  train::prepare_head(start.network, cfg.node(node));
  const auto result = train::node_lr_finder(start.network, nd.train, cfg.node(node));
  const fs::path csv = output_dir(cfg, o) / ("lr_find_" + std::string(hierarchy::node_name(node)) + ".csv");
  io::write_file_atomic(csv, sched::lr_finder_csv(result));
  std::cout << "eta_max " << shortest(result.eta_max) << '\n'
            << "eta " << shortest(result.eta) << '\n'
            << "curve " << csv.string() << '\n';
  return kOk;
}

int cmd_train_node(const Options& o) {
  const app::RunConfig cfg = app::load_run_config(o.config);
  const NodeId node = parse_node(o.node);
  const auto dataset = app::load_or_generate(cfg, optional_path(o.data));
  const auto prepared = app::prepare(dataset, cfg.preprocess, cfg.split);
  const auto outcome = app::train_node_from(cfg, prepared, node, {start_candidate(cfg, node, optional_path(o.from))});
  const fs::path dir = output_dir(cfg, o) / hierarchy::node_name(node);
  app::write_node_outputs(dir, outcome);
  std::cout << "eta " << shortest(outcome.report.eta) << '\n';
  if (outcome.report.best) {
    std::cout << "best_epoch " << outcome.report.best->epoch << '\n'
              << "best_val_accuracy " << shortest(outcome.report.best->val_accuracy) << '\n';
  }
  std::cout << "report " << (dir / "report.json").string() << '\n';
  return kOk;
}

int cmd_train_hierarchy(const Options& o) {
  const app::RunConfig cfg = app::load_run_config(o.config);
  const auto dataset = app::load_or_generate(cfg, optional_path(o.data));
  const auto run = app::train_hierarchy(cfg, dataset, output_dir(cfg, o));
  for (const auto& n : run.nodes) {
    std::cout << hierarchy::node_name(n.node) << " from " << n.tag;
    if (n.report.best) std::cout << " best_val_accuracy " << shortest(n.report.best->val_accuracy);
    std::cout << '\n';
  }
  std::cout << "manifest " << run.manifest_path.string() << '\n';
  return kOk;
}

int cmd_eval(const Options& o) {
  const fs::path manifest_path(o.manifest);
  const auto manifest = app::load_manifest(manifest_path);
  const auto tree = app::load_tree(manifest, dir_of(manifest_path));
  const auto dataset = data::read_dataset(o.data);
  const auto result = app::evaluate(tree, manifest, dataset);
  const fs::path out = o.out.empty() ? dir_of(manifest_path) / "eval" : fs::path(o.out);
  app::write_eval_outputs(out, result);
  std::cout << eval::table_text(result.table)
            << "whole_system_accuracy " << shortest(result.hard_accuracy) << '\n'
            << "soft_argmax_accuracy " << shortest(result.soft_accuracy) << '\n'
            << "outputs " << out.string() << '\n';
  return kOk;
}

int cmd_ensemble(const Options& o) {
  const NodeId node = parse_node(o.node);
  app::add_ensemble_version(o.manifest, node, o.add, o.weight);
  const auto manifest = app::load_manifest(o.manifest);
  std::cout << hierarchy::node_name(node) << " versions " << manifest.versions(node).size() << '\n';
  return kOk;
}

int cmd_predict(const Options& o) {
  const fs::path manifest_path(o.manifest);
  const auto manifest = app::load_manifest(manifest_path);
  const auto tree = app::load_tree(manifest, dir_of(manifest_path));
  const data::Image image = app::preprocess_for(manifest, data::read_image_file(o.input));
  const auto features = data::to_features(image);
  if (features.size() != tree.carci.input_dim()) {
    throw ShapeError("input has width " + std::to_string(features.size()) + ", the tree expects " +
                     std::to_string(tree.carci.input_dim()));
  }
  const Tensor x = Tensor::from_row(features);
  if (o.soft) {
    const auto dist = hierarchy::predict_soft(tree, x);
    for (auto label : hierarchy::kLeafLabels) {
      std::cout << hierarchy::leaf_name(label) << ' ' << fixed6(dist[static_cast<std::size_t>(label)]) << '\n';
    }
  } else {
    std::cout << hierarchy::leaf_name(hierarchy::predict_hard(tree, x)) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical texture classifier: generate, train, evaluate, predict"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset");
  gen->add_option("--config", o.config, "Run config JSON")->required();
  gen->add_option("--out", o.out, "Dataset directory")->required();

  auto* lr = app.add_subcommand("lr-find", "LR range test for one node");
  lr->add_option("--config", o.config, "Run config JSON")->required();
  lr->add_option("--node", o.node, "carci, norbe or invis")->required();
  lr->add_option("--data", o.data, "Dataset directory (default: regenerate from config)");
  lr->add_option("--from", o.from, "Serialized network whose base is reused");
  lr->add_option("--out", o.out, "Output directory (default: config output_dir)");

  auto* tn = app.add_subcommand("train-node", "Staged training of one node");
  tn->add_option("--config", o.config, "Run config JSON")->required();
  tn->add_option("--node", o.node, "carci, norbe or invis")->required();
  tn->add_option("--from", o.from, "Serialized network whose base is reused");
  tn->add_option("--data", o.data, "Dataset directory (default: regenerate from config)");
  tn->add_option("--out", o.out, "Output directory (default: config output_dir)");

  auto* th = app.add_subcommand("train-hierarchy", "Train all three nodes and write the tree manifest");
  th->add_option("--config", o.config, "Run config JSON")->required();
  th->add_option("--data", o.data, "Dataset directory (default: regenerate from config)");
  th->add_option("--out", o.out, "Output directory (default: config output_dir)");

  auto* ev = app.add_subcommand("eval", "Confusion matrix and accuracy table on the validation split");
  ev->add_option("--manifest", o.manifest, "Tree manifest")->required();
  ev->add_option("--data", o.data, "Dataset directory")->required();
  ev->add_option("--out", o.out, "Output directory (default: <manifest dir>/eval)");

  auto* en = app.add_subcommand("ensemble", "Append a network version to a node");
  en->add_option("--manifest", o.manifest, "Tree manifest")->required();
  en->add_option("--add", o.add, "Serialized network")->required();
  en->add_option("--node", o.node, "carci, norbe or invis")->required();
  en->add_option("--weight", o.weight, "Ensemble weight (default 1)");

  auto* pr = app.add_subcommand("predict", "Classify one image file");
  pr->add_option("--manifest", o.manifest, "Tree manifest")->required();
  pr->add_option("--input", o.input, "Image file")->required();
  pr->add_flag("--soft", o.soft, "Print the four leaf probabilities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.empty()) msg = "invalid command line";
    return fail(kConfig, "E_CONFIG", msg);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (lr->parsed()) return cmd_lr_find(o);
    if (tn->parsed()) return cmd_train_node(o);
    if (th->parsed()) return cmd_train_hierarchy(o);
    if (ev->parsed()) return cmd_eval(o);
    if (en->parsed()) return cmd_ensemble(o);
    if (pr->parsed()) return cmd_predict(o);
  } catch (const ConfigError& e) {
    return fail(kConfig, "E_CONFIG", e.what());
  } catch (const NumericError& e) {
    return fail(kNumeric, "E_NUMERIC", e.what());
  } catch (const DataError& e) {
    return fail(kData, "E_DATA", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kConfig, "E_CONFIG", e.what());
  } catch (const std::exception& e) {
    return fail(kData, "E_DATA", e.what());
  }
  return fail(kConfig, "E_CONFIG", "no subcommand");
}
