#include "hiernet/hierarchy.hpp"

#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"

namespace hiernet::hierarchy {

std::string_view leaf_name(LeafLabel label) noexcept {
  switch (label) {
    case LeafLabel::Normal: return "normal";
    case LeafLabel::Benign: return "benign";
    case LeafLabel::InSitu: return "in_situ";
    case LeafLabel::Invasive: return "invasive";
  }
  return "unknown";
}

LeafLabel leaf_from_name(std::string_view name) {
  for (LeafLabel label : kLeafLabels) {
    if (leaf_name(label) == name) return label;
  }
  throw std::invalid_argument("unknown leaf label '" + std::string(name) + "'");
}

std::string_view node_name(NodeId node) noexcept {
  switch (node) {
    case NodeId::Carci: return "carci";
    case NodeId::NorBe: return "norbe";
    case NodeId::InvIs: return "invis";
  }
  return "unknown";
}

NodeId node_from_name(std::string_view name) {
  for (NodeId node : kNodes) {
    if (node_name(node) == name) return node;
  }
  throw std::invalid_argument("unknown node '" + std::string(name) + "' (expected carci, norbe or invis)");
}

std::array<std::string_view, 2> class_order(NodeId node) noexcept {
  switch (node) {
    case NodeId::Carci: return {"non_carcinoma", "carcinoma"};
    case NodeId::NorBe: return {"normal", "benign"};
    case NodeId::InvIs: return {"in_situ", "invasive"};
  }
  return {"", ""};
}

bool is_carcinoma(LeafLabel label) noexcept {
  return label == LeafLabel::InSitu || label == LeafLabel::Invasive;
}

int node_argmax(const ProbPair& p) noexcept { return p[1] > p[0] ? 1 : 0; }

ProbPair ensemble_node_prob(std::span<const nnet::Network> versions, const Tensor& x) {
  if (versions.empty()) throw std::invalid_argument("ensemble needs at least one version");
  ProbPair sum{0.0, 0.0};
  for (const auto& net : versions) {
    Tensor p = nnet::predict_proba(net, x);
    sum[0] += p(0, 0);
    sum[1] += p(0, 1);
  }
  const auto n = static_cast<double>(versions.size());
  return {sum[0] / n, sum[1] / n};
}

ProbPair NodeModel::probability(const Tensor& x) const {
  if (weights.empty()) return ensemble_node_prob(versions, x);
  if (weights.size() != versions.size()) {
    throw std::invalid_argument("ensemble weights do not match version count");
  }
  ProbPair sum{0.0, 0.0};
  double total = 0.0;
  for (std::size_t v = 0; v < versions.size(); ++v) {
    Tensor p = nnet::predict_proba(versions[v], x);
    sum[0] += weights[v] * p(0, 0);
    sum[1] += weights[v] * p(0, 1);
    total += weights[v];
  }
  if (!(total > 0.0)) throw std::invalid_argument("ensemble weights must sum to a positive value");
  return {sum[0] / total, sum[1] / total};
}

std::size_t NodeModel::input_dim() const {
  if (versions.empty()) throw std::invalid_argument("node has no model versions");
  return versions.front().input_dim();
}

const NodeModel& HierarchyTree::node(NodeId id) const {
  switch (id) {
    case NodeId::Carci: return carci;
    case NodeId::NorBe: return norbe;
    case NodeId::InvIs: return invis;
  }
  throw std::invalid_argument("unknown node");
}

NodeModel& HierarchyTree::node(NodeId id) {
  return const_cast<NodeModel&>(static_cast<const HierarchyTree&>(*this).node(id));
}

void HierarchyTree::validate() const {
  const std::size_t dim = carci.input_dim();
  for (NodeId id : kNodes) {
    const auto& model = node(id);
    if (model.versions.empty()) {
      throw std::invalid_argument("node " + std::string(node_name(id)) + " has no versions");
    }
    for (const auto& net : model.versions) {
      if (net.input_dim() != dim) {
        throw ShapeError("node " + std::string(node_name(id)) + " expects input width " +
                         std::to_string(net.input_dim()) + ", root expects " + std::to_string(dim));
      }
    }
  }
}

LeafLabel route_hard(const ProbPair& root, const ProbPair& norbe, const ProbPair& invis) noexcept {
  if (node_argmax(root) == 1) {
    return node_argmax(invis) == 0 ? LeafLabel::InSitu : LeafLabel::Invasive;
  }
  return node_argmax(norbe) == 0 ? LeafLabel::Normal : LeafLabel::Benign;
}

LeafDistribution chain_probabilities(const ProbPair& root, const ProbPair& norbe,
                                     const ProbPair& invis) noexcept {
  return {root[0] * norbe[0], root[0] * norbe[1], root[1] * invis[0], root[1] * invis[1]};
}

LeafLabel argmax_leaf(const LeafDistribution& dist) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return static_cast<LeafLabel>(best);
}

namespace {

void check_row(const HierarchyTree& tree, const Tensor& x) {
  if (x.rows() != 1) throw ShapeError("hierarchy prediction expects a single input row");
  if (x.cols() != tree.carci.input_dim()) {
    throw ShapeError("input width " + std::to_string(x.cols()) + " does not match model width " +
                     std::to_string(tree.carci.input_dim()));
  }
}

}  // namespace

LeafLabel predict_hard(const HierarchyTree& tree, const Tensor& x) {
  check_row(tree, x);
  const ProbPair root = tree.carci.probability(x);
  if (node_argmax(root) == 1) {
    return node_argmax(tree.invis.probability(x)) == 0 ? LeafLabel::InSitu : LeafLabel::Invasive;
  }
  return node_argmax(tree.norbe.probability(x)) == 0 ? LeafLabel::Normal : LeafLabel::Benign;
}

LeafDistribution predict_soft(const HierarchyTree& tree, const Tensor& x) {
  check_row(tree, x);
  return chain_probabilities(tree.carci.probability(x), tree.norbe.probability(x),
                             tree.invis.probability(x));
}

ConsistencyReport hard_soft_consistency_check(const HierarchyTree& tree, const Tensor& samples) {
  ConsistencyReport report;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    Tensor x = samples.row_copy(r);
    if (predict_hard(tree, x) != argmax_leaf(predict_soft(tree, x))) report.mismatches.push_back(r);
    ++report.evaluated;
  }
  return report;
}

}  // namespace hiernet::hierarchy
