#include <gtest/gtest.h>

#include <cmath>

#include "hiernet/error.hpp"
#include "hiernet/hierarchy.hpp"
#include "oracles.hpp"

using namespace hiernet;
using namespace hiernet::hierarchy;

namespace {

// Zero weights, so the output is softmax(bias) = (1 - p1, p1) for every input.
nnet::Network constant_net(std::size_t dim, double p1) {
  nnet::Dense d{Tensor(dim, 2), Tensor(1, 2, std::vector<double>{0.0, std::log(p1 / (1.0 - p1))})};
  return nnet::Network({d, nnet::SoftmaxOutput{}}, 0, 0);
}

HierarchyTree constant_tree(std::size_t dim, double carci, double norbe, double invis) {
  HierarchyTree tree;
  tree.carci.versions.push_back(constant_net(dim, carci));
  tree.norbe.versions.push_back(constant_net(dim, norbe));
  tree.invis.versions.push_back(constant_net(dim, invis));
  return tree;
}

ProbPair random_pair(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng);
  return {1.0 - p, p};
}

}  // namespace

TEST(Names, RoundTripAndUnknown) {
  for (auto n : kNodes) EXPECT_EQ(node_from_name(node_name(n)), n);
  for (auto l : kLeafLabels) EXPECT_EQ(leaf_from_name(leaf_name(l)), l);
  EXPECT_THROW(node_from_name("root"), std::invalid_argument);
  EXPECT_TRUE(is_carcinoma(LeafLabel::InSitu));
  EXPECT_TRUE(is_carcinoma(LeafLabel::Invasive));
  EXPECT_FALSE(is_carcinoma(LeafLabel::Benign));
  EXPECT_FALSE(is_carcinoma(LeafLabel::Normal));
}

TEST(RouteHard, FollowsArgmaxAtEachNode) {
  EXPECT_EQ(route_hard({0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}), LeafLabel::Normal);
  EXPECT_EQ(route_hard({0.9, 0.1}, {0.2, 0.8}, {0.1, 0.9}), LeafLabel::Benign);
  EXPECT_EQ(route_hard({0.1, 0.9}, {0.2, 0.8}, {0.6, 0.4}), LeafLabel::InSitu);
  EXPECT_EQ(route_hard({0.1, 0.9}, {0.2, 0.8}, {0.4, 0.6}), LeafLabel::Invasive);
}

TEST(RouteHard, TiesGoToClassZero) {
  EXPECT_EQ(node_argmax({0.5, 0.5}), 0);
  EXPECT_EQ(route_hard({0.5, 0.5}, {0.5, 0.5}, {0.0, 1.0}), LeafLabel::Normal);
  EXPECT_EQ(route_hard({0.1, 0.9}, {0.0, 1.0}, {0.5, 0.5}), LeafLabel::InSitu);
}

TEST(ChainRule, WorkedExample) {
  // P(carcinoma) 0.8, P(invasive | carcinoma) 0.7, P(benign | non-carcinoma) 0.5
  const auto d = chain_probabilities({0.2, 0.8}, {0.5, 0.5}, {0.3, 0.7});
  EXPECT_NEAR(d[0], 0.10, 1e-12);
  EXPECT_NEAR(d[1], 0.10, 1e-12);
  EXPECT_NEAR(d[2], 0.24, 1e-12);
  EXPECT_NEAR(d[3], 0.56, 1e-12);
  EXPECT_EQ(argmax_leaf(d), LeafLabel::Invasive);
}

TEST(ChainRule, SumsToOneOnRandomOutputs) {
  Rng rng(10);
  for (int i = 0; i < 10000; ++i) {
    const auto d = chain_probabilities(random_pair(rng), random_pair(rng), random_pair(rng));
    double s = 0.0;
    for (double v : d) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ChainRule, LeafMassWithinBranchEqualsRootProbability) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto root = random_pair(rng);
    const auto d = chain_probabilities(root, random_pair(rng), random_pair(rng));
    EXPECT_NEAR(d[0] + d[1], root[0], 1e-15);
    EXPECT_NEAR(d[2] + d[3], root[1], 1e-15);
  }
}

TEST(ArgmaxLeaf, FirstMaximumWins) {
  EXPECT_EQ(argmax_leaf({0.25, 0.25, 0.25, 0.25}), LeafLabel::Normal);
  EXPECT_EQ(argmax_leaf({0.1, 0.4, 0.4, 0.1}), LeafLabel::Benign);
}

TEST(PredictSoft, SumsToOneOnRandomNetworks) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    HierarchyTree tree;
    const std::size_t dim = 5;
    for (NodeId id : kNodes) {
      nnet::Network net({nnet::make_dense(dim, 4, rng), nnet::ReLU{}, nnet::make_dense(4, 2, rng),
                         nnet::SoftmaxOutput{}},
                        1, 2);
      tree.node(id).versions.push_back(std::move(net));
    }
    const Tensor x = testutil::random_tensor(rng, 1, dim, 3.0);
    const auto d = predict_soft(tree, x);
    EXPECT_NEAR(d[0] + d[1] + d[2] + d[3], 1.0, 1e-9);
  }
}

TEST(PredictHard, HardAndSoftCanDisagree) {
  const HierarchyTree tree = constant_tree(3, 0.51, 0.01, 0.49);
  const Tensor x(1, 3, 0.0);
  EXPECT_EQ(predict_hard(tree, x), LeafLabel::InSitu);
  const auto d = predict_soft(tree, x);
  EXPECT_NEAR(d[0], 0.49 * 0.99, 1e-12);
  EXPECT_EQ(argmax_leaf(d), LeafLabel::Normal);

  const auto report = hard_soft_consistency_check(tree, Tensor(4, 3, 0.0));
  EXPECT_EQ(report.evaluated, 4u);
  EXPECT_EQ(report.mismatches, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(PredictHard, AgreesWithSoftWhenConfident) {
  const HierarchyTree tree = constant_tree(3, 0.9, 0.2, 0.7);
  const auto report = hard_soft_consistency_check(tree, Tensor(5, 3, 1.0));
  EXPECT_TRUE(report.mismatches.empty());
  EXPECT_EQ(predict_hard(tree, Tensor(1, 3)), LeafLabel::Invasive);
}

TEST(PredictHard, OnlyTheChosenChildIsEvaluated) {
  // NorBe expects a different width; it is never reached when the root says carcinoma.
  HierarchyTree tree;
  tree.carci.versions.push_back(constant_net(3, 0.9));
  tree.invis.versions.push_back(constant_net(3, 0.2));
  tree.norbe.versions.push_back(constant_net(7, 0.5));
  EXPECT_EQ(predict_hard(tree, Tensor(1, 3)), LeafLabel::InSitu);
  EXPECT_THROW(tree.validate(), ShapeError);

  tree.carci.versions[0] = constant_net(3, 0.1);
  EXPECT_THROW(predict_hard(tree, Tensor(1, 3)), ShapeError);
}

TEST(PredictHard, ChangingOneSubtreeLeavesTheOtherUnchanged) {
  Rng rng(14);
  const std::size_t dim = 4;
  auto make = [&] {
    return nnet::Network({nnet::make_dense(dim, 3, rng), nnet::ReLU{}, nnet::make_dense(3, 2, rng),
                          nnet::SoftmaxOutput{}},
                         1, 2);
  };
  HierarchyTree tree;
  for (NodeId id : kNodes) tree.node(id).versions.push_back(make());
  HierarchyTree swapped = tree;
  swapped.norbe.versions[0] = make();
  for (int i = 0; i < 300; ++i) {
    const Tensor x = testutil::random_tensor(rng, 1, dim, 2.0);
    const LeafLabel a = predict_hard(tree, x);
    if (is_carcinoma(a)) {
      EXPECT_EQ(predict_hard(swapped, x), a);
      const auto da = predict_soft(tree, x);
      const auto db = predict_soft(swapped, x);
      EXPECT_EQ(da[2], db[2]);
      EXPECT_EQ(da[3], db[3]);
    } else {
      EXPECT_FALSE(is_carcinoma(predict_hard(swapped, x)));
    }
  }
}

TEST(PredictHard, InputShapeErrors) {
  const HierarchyTree tree = constant_tree(3, 0.9, 0.2, 0.7);
  EXPECT_THROW(predict_hard(tree, Tensor(2, 3)), ShapeError);
  EXPECT_THROW(predict_hard(tree, Tensor(1, 4)), ShapeError);
  EXPECT_THROW(predict_soft(tree, Tensor(1, 2)), ShapeError);
}

TEST(Tree, ValidateRejectsEmptyNode) {
  HierarchyTree tree = constant_tree(3, 0.9, 0.2, 0.7);
  tree.invis.versions.clear();
  EXPECT_THROW(tree.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

TEST(Ensemble, MeanOfConstantNetworks) {
  const std::vector<nnet::Network> versions{constant_net(2, 0.2), constant_net(2, 0.6), constant_net(2, 0.7)};
  const auto p = ensemble_node_prob(versions, Tensor(1, 2));
  EXPECT_NEAR(p[1], 0.5, 1e-12);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
}

TEST(Ensemble, MatchesSequentialSumOracle) {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<nnet::Network> versions;
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 5);
    for (std::size_t v = 0; v < k; ++v) {
      versions.push_back(nnet::Network({nnet::make_dense(6, 5, rng), nnet::ReLU{}, nnet::make_dense(5, 2, rng),
                                        nnet::SoftmaxOutput{}},
                                       1, 2));
    }
    const Tensor x = testutil::random_tensor(rng, 1, 6);
    std::vector<double> row(x.row(0).begin(), x.row(0).end());
    double s0 = 0.0;
    double s1 = 0.0;
    for (const auto& net : versions) {
      const auto p = oracle::softmax(oracle::logits(net, row));
      s0 += p[0];
      s1 += p[1];
    }
    const auto p = ensemble_node_prob(versions, x);
    EXPECT_NEAR(p[0], s0 / static_cast<double>(k), 1e-12);
    EXPECT_NEAR(p[1], s1 / static_cast<double>(k), 1e-12);
  }
}

TEST(Ensemble, DuplicatingAVersionChangesNothing) {
  Rng rng(16);
  const nnet::Network net({nnet::make_dense(4, 2, rng), nnet::SoftmaxOutput{}}, 0, 0);
  const Tensor x = testutil::random_tensor(rng, 1, 4);
  const std::vector<nnet::Network> one{net};
  const std::vector<nnet::Network> three{net, net, net};
  const auto a = ensemble_node_prob(one, x);
  const auto b = ensemble_node_prob(three, x);
  EXPECT_NEAR(a[0], b[0], 1e-15);
  EXPECT_NEAR(a[1], b[1], 1e-15);
}

TEST(Ensemble, WeightedMean) {
  NodeModel model;
  model.versions = {constant_net(2, 0.2), constant_net(2, 0.8)};
  model.weights = {3.0, 1.0};
  EXPECT_NEAR(model.probability(Tensor(1, 2))[1], 0.35, 1e-12);
  model.weights = {1.0, 1.0};
  EXPECT_NEAR(model.probability(Tensor(1, 2))[1], 0.5, 1e-12);
  model.weights = {1.0};
  EXPECT_THROW(model.probability(Tensor(1, 2)), std::invalid_argument);
  model.weights = {0.0, 0.0};
  EXPECT_THROW(model.probability(Tensor(1, 2)), std::invalid_argument);
}

TEST(Ensemble, EmptyVersionsThrow) {
  const std::vector<nnet::Network> none;
  EXPECT_THROW(ensemble_node_prob(none, Tensor(1, 2)), std::invalid_argument);
}
