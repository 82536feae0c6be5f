#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "hiernet/error.hpp"
#include "hiernet/nnet.hpp"
#include "oracles.hpp"

using namespace hiernet;
using namespace hiernet::nnet;

namespace {

Network tiny_net(Rng& rng, std::size_t in = 3) {
  return Network({make_dense(in, 4, rng), ReLU{}, make_dense(4, 4, rng), ReLU{}, make_dense(4, 2, rng),
                  SoftmaxOutput{}},
                 2, 4);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST(Tensor, LengthMismatchIsShapeError) {
  EXPECT_THROW(Tensor(2, 3, std::vector<double>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor(2, 3, std::vector<double>(6)));
}

TEST(Tensor, MatmulVariantsAgree) {
  Rng rng(1);
  const Tensor a = testutil::random_tensor(rng, 3, 4);
  const Tensor b = testutil::random_tensor(rng, 4, 5);
  const Tensor ab = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
      EXPECT_NEAR(ab(i, j), acc, 1e-14);
    }
  Tensor bt(5, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) bt(j, i) = b(i, j);
  EXPECT_LT(max_abs_diff(matmul_nt(a, bt), ab), 1e-14);
  Tensor at(4, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  EXPECT_LT(max_abs_diff(matmul_tn(at, b), ab), 1e-14);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

TEST(KaimingInit, RejectsNonPositiveFanIn) {
  Rng rng(0);
  EXPECT_THROW(kaiming_init(0, 1, 1, rng), std::invalid_argument);
  EXPECT_THROW(kaiming_init(-3, 1, 1, rng), std::invalid_argument);
}

TEST(KaimingInit, FanInTwoIsStandardNormalDraw) {
  Rng a(11);
  Rng b(11);
  const Tensor t = kaiming_init(2, 1, 1, a);
  std::normal_distribution<double> unit(0.0, 1.0);
  EXPECT_DOUBLE_EQ(t(0, 0), unit(b));
}

TEST(KaimingInit, EmpiricalVarianceMatchesTwoOverFanIn) {
  Rng rng(2024);
  const Tensor t = kaiming_init(8, 1000, 100, rng);
  double mean = 0.0;
  for (double v : t.values()) mean += v;
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t.size() - 1);
  EXPECT_NEAR(var, 0.25, 0.05 * 0.25);
  EXPECT_NEAR(mean, 0.0, 0.01);
}

TEST(KaimingInit, DenseBiasesStartAtZero) {
  Rng rng(5);
  const Dense d = make_dense(7, 3, rng);
  for (double v : d.bias.values()) EXPECT_EQ(v, 0.0);
  const auto block = make_agg_block(6, 3, 2, rng);
  for (const auto& br : block.branches) {
    for (double v : br.reduce.bias.values()) EXPECT_EQ(v, 0.0);
    for (double v : br.expand.bias.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Network, ReinitializeGroupTouchesOnlyThatGroup) {
  Rng rng(3);
  Network net = testutil::random_network(rng);
  const Network before = net;
  Rng re(99);
  net.reinitialize_group(LayerGroup::Last, re);
  const auto a = before.parameters();
  const auto b = net.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (net.group_of(a[i].layer_index) == LayerGroup::Last) {
      if (a[i].tensor->rows() == 1) continue;
      EXPECT_NE(*a[i].tensor, *b[i].tensor);
    } else {
      EXPECT_EQ(*a[i].tensor, *b[i].tensor);
    }
  }
}

// ---------------------------------------------------------------------------
// Construction checks
// ---------------------------------------------------------------------------

TEST(Network, DimensionMismatchNamesLayerIndex) {
  Rng rng(1);
  try {
    Network({make_dense(3, 4, rng), ReLU{}, make_dense(5, 2, rng), SoftmaxOutput{}}, 1, 2);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
}

TEST(Network, RequiresTwoClassSoftmaxLast) {
  Rng rng(1);
  EXPECT_THROW(Network({make_dense(3, 2, rng)}, 0, 0), std::exception);
  EXPECT_THROW(Network({make_dense(3, 3, rng), SoftmaxOutput{3}}, 0, 0), std::exception);
  EXPECT_THROW(Network({SoftmaxOutput{}, make_dense(2, 2, rng), SoftmaxOutput{}}, 0, 0), std::exception);
}

TEST(Network, RejectsBadBoundaries) {
  Rng rng(1);
  std::vector<Layer> layers{make_dense(3, 2, rng), SoftmaxOutput{}};
  EXPECT_THROW(Network(layers, 2, 1), std::exception);
  EXPECT_THROW(Network(layers, 0, 3), std::exception);
  EXPECT_NO_THROW(Network(layers, 0, 2));
  EXPECT_NO_THROW(Network(layers, 2, 2));
}

TEST(Network, RejectsDropoutOfOne) {
  Rng rng(1);
  EXPECT_THROW(Network({make_dense(3, 2, rng), Dropout{1.0}, SoftmaxOutput{}}, 0, 0), std::exception);
  EXPECT_THROW(Network({make_dense(3, 2, rng), Dropout{-0.1}, SoftmaxOutput{}}, 0, 0), std::exception);
}

TEST(Network, GroupsPartitionLayers) {
  Rng rng(4);
  const Network net = testutil::random_network(rng);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto g = net.group_of(i);
    if (i < net.first_end()) EXPECT_EQ(g, LayerGroup::First);
    else if (i < net.middle_end()) EXPECT_EQ(g, LayerGroup::Middle);
    else EXPECT_EQ(g, LayerGroup::Last);
  }
}

TEST(Classifier, HeadLayoutAndDropoutOrder) {
  Rng rng(8);
  ArchSpec arch;
  arch.input_dim = 12;
  arch.stem_width = 6;
  arch.blocks = 2;
  const Network net = make_classifier(arch, rng);
  std::vector<std::string> names;
  for (const auto& l : net.layers()) names.push_back(layer_name(l));
  const std::vector<std::string> expected{"dense", "relu", "agg_block", "relu", "agg_block", "relu",
                                          "dense", "relu", "dropout", "dense", "relu", "dropout",
                                          "dense", "softmax"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(net.first_end(), 2u);
  EXPECT_EQ(net.middle_end(), 6u);
  EXPECT_DOUBLE_EQ(std::get<Dropout>(net.layers()[8]).p, 0.25);
  EXPECT_DOUBLE_EQ(std::get<Dropout>(net.layers()[11]).p, 0.5);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

TEST(Forward, RowsSumToOneForBoundedInputs) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Network net = testutil::random_network(rng);
    Tensor x(8, net.input_dim());
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (double& v : x.values()) v = u(rng);
    const Tensor p = forward(net, x);
    ASSERT_EQ(p.rows(), 8u);
    ASSERT_EQ(p.cols(), 2u);
    for (std::size_t r = 0; r < p.rows(); ++r) EXPECT_NEAR(p(r, 0) + p(r, 1), 1.0, 1e-9);
  }
}

TEST(Forward, MatchesNaiveOracle) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = testutil::random_network(rng);
    const Tensor x = testutil::random_tensor(rng, 5, net.input_dim());
    const Tensor p = forward(net, x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto expect = oracle::softmax(oracle::logits(net, {x.row(r).begin(), x.row(r).end()}));
      EXPECT_NEAR(p(r, 0), expect[0], 1e-12);
      EXPECT_NEAR(p(r, 1), expect[1], 1e-12);
    }
  }
}

TEST(Forward, WrongInputWidthIsShapeError) {
  Rng rng(1);
  const Network net = tiny_net(rng);
  EXPECT_THROW(forward(net, Tensor(2, 5)), ShapeError);
}

TEST(Forward, SoftmaxIsStableForLargeLogits) {
  const Tensor p = softmax_rows(Tensor(1, 2, std::vector<double>{1000.0, 0.0}));
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.0);
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(2);
  Network net({make_dense(4, 4, rng), Dropout{0.5}, make_dense(4, 2, rng), SoftmaxOutput{}}, 1, 2);
  net.set_mode(Mode::Eval);
  const Tensor x = testutil::random_tensor(rng, 3, 4);
  const auto trace = forward_trace(net, x, nullptr);
  EXPECT_EQ(trace.inputs[2], trace.inputs[1]);
}

TEST(Dropout, TrainModeNeedsGenerator) {
  Rng rng(2);
  Network net({make_dense(4, 4, rng), Dropout{0.5}, make_dense(4, 2, rng), SoftmaxOutput{}}, 1, 2);
  net.set_mode(Mode::Train);
  EXPECT_THROW(forward(net, Tensor(1, 4)), std::logic_error);
}

TEST(Dropout, SurvivorsAreScaledByInverseKeepProbability) {
  Rng rng(2);
  Network net({make_dense(4, 50, rng), Dropout{0.25}, make_dense(50, 2, rng), SoftmaxOutput{}}, 1, 2);
  net.set_mode(Mode::Train);
  const Tensor x = testutil::random_tensor(rng, 3, 4);
  Rng drop(7);
  const auto trace = forward_trace(net, x, &drop);
  const Tensor& in = trace.inputs[1];
  const Tensor& out = trace.inputs[2];
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = out.values()[i];
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, in.values()[i] / 0.75);
    }
  }
}

TEST(Dropout, ExpectationOverMasksMatchesEval) {
  for (double p : {0.25, 0.5}) {
    Network net({Dense{Tensor(1, 3, std::vector<double>{1.0, -2.0, 0.5}), Tensor(1, 3)}, Dropout{p},
                 Dense{Tensor(3, 2, std::vector<double>{1.0, 0.0, 0.0, 1.0, 1.0, 1.0}), Tensor(1, 2)},
                 SoftmaxOutput{}},
                0, 1);
    net.set_mode(Mode::Train);
    const Tensor x(1, 1, std::vector<double>{2.0});
    Rng drop(31);
    std::vector<double> mean(3, 0.0);
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
      const auto trace = forward_trace(net, x, &drop);
      for (std::size_t c = 0; c < 3; ++c) mean[c] += trace.inputs[2](0, c);
    }
    const std::vector<double> eval{2.0, -4.0, 1.0};
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(mean[c] / kDraws, eval[c], 0.01 * std::abs(eval[c])) << "p=" << p << " c=" << c;
    }
  }
}

// ---------------------------------------------------------------------------
// Aggregated residual block
// ---------------------------------------------------------------------------

TEST(AggBlock, ZeroBranchWeightsGiveIdentity) {
  Rng rng(3);
  auto block = make_agg_block(5, 3, 2, rng);
  for (auto& br : block.branches) {
    for (double& v : br.expand.weight.values()) v = 0.0;
  }
  const Tensor x = testutil::random_tensor(rng, 4, 5);
  EXPECT_EQ(agg_block_forward(block, x), x);

  Network net({make_dense(5, 5, rng), block, make_dense(5, 2, rng), SoftmaxOutput{}}, 1, 2);
  const auto trace = forward_trace(net, x, nullptr);
  EXPECT_EQ(trace.inputs[2], trace.inputs[1]);
}

TEST(AggBlock, SingleBranchIsPlainResidual) {
  Rng rng(4);
  const auto block = make_agg_block(6, 1, 3, rng);
  const Tensor x = testutil::random_tensor(rng, 3, 6);
  const Tensor y = agg_block_forward(block, x);
  const auto& br = block.branches[0];
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> row(x.row(r).begin(), x.row(r).end());
    const auto f = oracle::dense(br.expand, oracle::relu(oracle::dense(br.reduce, row)));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(y(r, c), row[c] + f[c], 1e-12);
  }
}

TEST(AggBlock, EqualsSequentialBranchSumForCardinalityOneToEight) {
  Rng rng(7);
  for (std::size_t c = 1; c <= 8; ++c) {
    const auto block = make_agg_block(9, c, 3, rng);
    const Tensor x = testutil::random_tensor(rng, 5, 9);
    const Tensor y = agg_block_forward(block, x);
    for (std::size_t r = 0; r < 5; ++r) {
      const auto expect = oracle::block(block, {x.row(r).begin(), x.row(r).end()});
      for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(y(r, k), expect[k], 1e-12) << "C=" << c;
    }
  }
}

TEST(AggBlock, ZeroInputZeroBiasGivesZero) {
  Rng rng(8);
  const auto block = make_agg_block(4, 4, 2, rng);
  const Tensor y = agg_block_forward(block, Tensor(2, 4));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(AggBlock, WrongWidthIsShapeError) {
  Rng rng(8);
  const auto block = make_agg_block(4, 2, 2, rng);
  EXPECT_THROW(agg_block_forward(block, Tensor(1, 5)), ShapeError);
}

// ---------------------------------------------------------------------------
// Loss and backward
// ---------------------------------------------------------------------------

TEST(Loss, UniformOutputCostsLnTwo) {
  const Tensor logits(3, 2, 0.0);
  const std::vector<int> labels{0, 1, 1};
  EXPECT_NEAR(cross_entropy_from_logits(logits, labels), std::numbers::ln2, 1e-15);
}

TEST(Loss, OutOfRangeLabelIsRejected) {
  Rng rng(1);
  Network net = tiny_net(rng);
  const Tensor x(2, 3, 0.1);
  const std::vector<int> bad{0, 2};
  EXPECT_THROW(loss_and_gradients(net, x, bad, nullptr), InvalidLabelError);
  const std::vector<int> negative{-1, 0};
  EXPECT_THROW(loss_and_gradients(net, x, negative, nullptr), InvalidLabelError);
}

TEST(Backward, MatchesFiniteDifferencesOnThreeLayerNet) {
  Rng rng(42);
  Network net = tiny_net(rng);
  for (auto p : net.parameters()) {
    for (double& v : p.tensor->values()) v += std::normal_distribution<double>(0.0, 0.1)(rng);
  }
  const Tensor x = testutil::random_tensor(rng, 4, 3);
  const std::vector<int> labels{0, 1, 1, 0};
  const auto result = loss_and_gradients(net, x, labels, nullptr);
  EXPECT_NEAR(result.loss, oracle::loss(net, x, labels), 1e-12);

  constexpr double h = 1e-5;
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].tensor->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = oracle::loss(net, x, labels);
      values[k] = saved - h;
      const double down = oracle::loss(net, x, labels);
      values[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = result.grads.tensors[i].values()[k];
      EXPECT_LT(std::abs(g - fd) / std::max(1.0, std::abs(g)), 1e-5) << "param " << i << "[" << k << "]";
    }
  }
}

TEST(Backward, DuplicatedRowsLeaveLossAndGradientUnchanged) {
  Rng rng(9);
  Network net = testutil::random_network(rng);
  const Tensor one = testutil::random_tensor(rng, 1, net.input_dim());
  Tensor two(2, net.input_dim());
  for (std::size_t c = 0; c < net.input_dim(); ++c) two(0, c) = two(1, c) = one(0, c);
  const std::vector<int> l1{1};
  const std::vector<int> l2{1, 1};
  const auto a = loss_and_gradients(net, one, l1, nullptr);
  const auto b = loss_and_gradients(net, two, l2, nullptr);
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  for (std::size_t i = 0; i < a.grads.tensors.size(); ++i) {
    EXPECT_LT(max_abs_diff(a.grads.tensors[i], b.grads.tensors[i]), 1e-15);
  }
}

TEST(Backward, DeterministicForSeededDropout) {
  Rng rng(12);
  Network net = testutil::random_network(rng);
  net.set_mode(Mode::Train);
  const Tensor x = testutil::random_tensor(rng, 4, net.input_dim());
  const std::vector<int> labels{0, 1, 0, 1};
  Rng d1(5);
  Rng d2(5);
  const auto a = loss_and_gradients(net, x, labels, &d1);
  const auto b = loss_and_gradients(net, x, labels, &d2);
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t i = 0; i < a.grads.tensors.size(); ++i) EXPECT_EQ(a.grads.tensors[i], b.grads.tensors[i]);
}

TEST(Backward, NonFiniteLossIsNumericError) {
  // No ReLU in between, so inf - inf reaches the logits as NaN.
  Network net({Dense{Tensor(3, 2, std::vector<double>{1.0, -1.0, -1.0, 1.0, 1.0, 1.0}), Tensor(1, 2)},
               SoftmaxOutput{}},
              0, 0);
  Tensor x(1, 3, std::numeric_limits<double>::infinity());
  const std::vector<int> labels{0};
  EXPECT_THROW(loss_and_gradients(net, x, labels, nullptr), NumericError);
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

TEST(Sgd, ZeroLearningRatesLeaveNetworkUnchanged) {
  Rng rng(6);
  Network net = testutil::random_network(rng);
  const Network before = net;
  const Tensor x = testutil::random_tensor(rng, 3, net.input_dim());
  const std::vector<int> labels{0, 1, 1};
  const auto g = loss_and_gradients(net, x, labels, nullptr);
  sgd_step(net, g.grads, {0.0, 0.0, 0.0});
  EXPECT_EQ(net, before);
}

TEST(Sgd, GroupRatesApplyPerGroup) {
  Rng rng(6);
  Network net = testutil::random_network(rng);
  const Network before = net;
  const Tensor x = testutil::random_tensor(rng, 3, net.input_dim());
  const std::vector<int> labels{0, 1, 1};
  const auto g = loss_and_gradients(net, x, labels, nullptr);
  const double eta = 0.01;
  sgd_step(net, g.grads, {0.0, eta / 5.0, eta});
  const auto old_params = before.parameters();
  const auto new_params = net.parameters();
  for (std::size_t i = 0; i < new_params.size(); ++i) {
    const auto group = net.group_of(new_params[i].layer_index);
    const double lr = group == LayerGroup::First ? 0.0 : group == LayerGroup::Middle ? 0.002 : 0.01;
    for (std::size_t k = 0; k < new_params[i].tensor->size(); ++k) {
      const double expect = old_params[i].tensor->values()[k] - lr * g.grads.tensors[i].values()[k];
      EXPECT_EQ(new_params[i].tensor->values()[k], expect);
    }
  }
}

TEST(Sgd, SingleWeightUpdateRule) {
  Network net({Dense{Tensor(1, 2, std::vector<double>{1.0, 1.0}), Tensor(1, 2)}, SoftmaxOutput{}}, 0, 0);
  Gradients g{{Tensor(1, 2, std::vector<double>{2.0, 2.0}), Tensor(1, 2)}};
  sgd_step(net, g, {0.0, 0.0, 0.1});
  EXPECT_DOUBLE_EQ(std::get<Dense>(net.layers()[0]).weight(0, 0), 0.8);
}

TEST(Sgd, RejectsNegativeRateAndMismatchedGradients) {
  Rng rng(6);
  Network net = tiny_net(rng);
  const Tensor x(2, 3, 0.3);
  const std::vector<int> labels{0, 1};
  const auto g = loss_and_gradients(net, x, labels, nullptr);
  EXPECT_THROW(sgd_step(net, g.grads, {0.0, -0.1, 0.1}), std::invalid_argument);
  Gradients short_grads{{g.grads.tensors.front()}};
  EXPECT_THROW(sgd_step(net, short_grads, {0.0, 0.1, 0.1}), ShapeError);
}

TEST(Sgd, FrozenGroupsStayBitIdenticalOverManySteps) {
  Rng rng(13);
  Network net = testutil::random_network(rng);
  const Network before = net;
  const Tensor x = testutil::random_tensor(rng, 6, net.input_dim());
  const std::vector<int> labels{0, 1, 1, 0, 1, 0};
  for (int step = 0; step < 200; ++step) {
    const auto g = loss_and_gradients(net, x, labels, nullptr);
    sgd_step(net, g.grads, {0.0, 0.0, 0.05});
  }
  const auto a = before.parameters();
  const auto b = net.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (net.group_of(a[i].layer_index) != LayerGroup::Last) {
      EXPECT_EQ(0, std::memcmp(a[i].tensor->values().data(), b[i].tensor->values().data(),
                               a[i].tensor->size() * sizeof(double)));
    }
  }
}
