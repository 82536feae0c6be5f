#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiernet/nnet.hpp"

namespace hiernet::hierarchy {

enum class LeafLabel : int { Normal = 0, Benign = 1, InSitu = 2, Invasive = 3 };
inline constexpr std::array<LeafLabel, 4> kLeafLabels{LeafLabel::Normal, LeafLabel::Benign,
                                                      LeafLabel::InSitu, LeafLabel::Invasive};

/// The three classifier nodes. Class order per node (class 0 first):
///   Carci: NonCarcinoma, Carcinoma
///   NorBe: Normal, Benign
///   InvIs: InSitu, Invasive
enum class NodeId : int { Carci = 0, NorBe = 1, InvIs = 2 };
inline constexpr std::array<NodeId, 3> kNodes{NodeId::Carci, NodeId::NorBe, NodeId::InvIs};

std::string_view leaf_name(LeafLabel label) noexcept;
LeafLabel leaf_from_name(std::string_view name);
std::string_view node_name(NodeId node) noexcept;
/// Accepts "carci", "norbe", "invis"; anything else is an invalid argument.
NodeId node_from_name(std::string_view name);
std::array<std::string_view, 2> class_order(NodeId node) noexcept;

bool is_carcinoma(LeafLabel label) noexcept;

using ProbPair = std::array<double, 2>;
using LeafDistribution = std::array<double, 4>;  // indexed by LeafLabel

/// Index of the larger entry; ties go to class 0.
int node_argmax(const ProbPair& p) noexcept;

/// One node's model versions plus optional per-version weights (empty = uniform).
struct NodeModel {
  std::vector<nnet::Network> versions;
  std::vector<double> weights;

  ProbPair probability(const Tensor& x) const;
  std::size_t input_dim() const;
};

/// Arithmetic mean of each version's eval-mode probability pair for the row x.
ProbPair ensemble_node_prob(std::span<const nnet::Network> versions, const Tensor& x);

struct HierarchyTree {
  NodeModel carci;
  NodeModel norbe;
  NodeModel invis;

  const NodeModel& node(NodeId id) const;
  NodeModel& node(NodeId id);
  /// Throws when a node has no versions or the nodes disagree on input width.
  void validate() const;
};

/// Greedy routing over already-evaluated node outputs.
LeafLabel route_hard(const ProbPair& root, const ProbPair& norbe, const ProbPair& invis) noexcept;

/// P(leaf) = P(branch at root) * P(leaf | branch).
LeafDistribution chain_probabilities(const ProbPair& root, const ProbPair& norbe,
                                     const ProbPair& invis) noexcept;

LeafLabel argmax_leaf(const LeafDistribution& dist) noexcept;

/// Evaluates the root, then only the chosen child.
LeafLabel predict_hard(const HierarchyTree& tree, const Tensor& x);
LeafDistribution predict_soft(const HierarchyTree& tree, const Tensor& x);

struct ConsistencyReport {
  std::size_t evaluated = 0;
  std::vector<std::size_t> mismatches;  // sample indices where hard != argmax(soft)
};

/// Each row of `samples` is one input.
ConsistencyReport hard_soft_consistency_check(const HierarchyTree& tree, const Tensor& samples);

}  // namespace hiernet::hierarchy
