#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hiernet/rng.hpp"
#include "hiernet/tensor.hpp"

namespace hiernet::nnet {

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// y = x * weight + bias, weight is (in_dim x out_dim), bias is (1 x out_dim).
struct Dense {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
  friend bool operator==(const Dense&, const Dense&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

/// Inverted dropout: at train time survivors are scaled by 1/(1-p); at eval
/// time the layer is the identity.
struct Dropout {
  double p = 0.0;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};

/// One transformation path of an aggregated residual block: Dense -> ReLU -> Dense.
struct AggBranch {
  Dense reduce;  // dim -> branch_width
  Dense expand;  // branch_width -> dim
  friend bool operator==(const AggBranch&, const AggBranch&) = default;
};

/// Dense analog of a ResNeXt block: y = x + sum_i branch_i(x).
struct AggResidualBlock {
  std::vector<AggBranch> branches;

  std::size_t dim() const noexcept { return branches.front().reduce.in_dim(); }
  std::size_t cardinality() const noexcept { return branches.size(); }
  std::size_t branch_width() const noexcept { return branches.front().reduce.out_dim(); }
  friend bool operator==(const AggResidualBlock&, const AggResidualBlock&) = default;
};

struct SoftmaxOutput {
  std::size_t num_classes = 2;
  friend bool operator==(const SoftmaxOutput&, const SoftmaxOutput&) = default;
};

using Layer = std::variant<Dense, ReLU, Dropout, AggResidualBlock, SoftmaxOutput>;

std::string layer_name(const Layer& layer);

enum class Mode { Train, Eval };
enum class LayerGroup { First = 0, Middle = 1, Last = 2 };

/// Per-group learning rates, ordered (first, middle, last).
using GroupLrs = std::array<double, 3>;

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Reference to one trainable tensor inside a network.
struct ParamRef {
  Tensor* tensor;
  std::size_t layer_index;
};

struct ConstParamRef {
  const Tensor* tensor;
  std::size_t layer_index;
};

/// Ordered layer stack split into first/middle/last groups.
///
/// Layers [0, first_end) form the first group, [first_end, middle_end) the
/// middle group, the rest the last group. The final layer is always a
/// two-class SoftmaxOutput and consecutive layer dimensions agree; both are
/// checked on construction.
class Network {
 public:
  Network(std::vector<Layer> layers, std::size_t first_end, std::size_t middle_end);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t first_end() const noexcept { return first_end_; }
  std::size_t middle_end() const noexcept { return middle_end_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  LayerGroup group_of(std::size_t layer_index) const noexcept;

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  /// Output width of the middle group (the width a replacement head consumes).
  std::size_t middle_output_dim() const;

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;

  /// Re-draws every weight in `group` with Kaiming init and zeroes its biases.
  void reinitialize_group(LayerGroup group, Rng& rng);

  friend bool operator==(const Network& a, const Network& b) {
    return a.layers_ == b.layers_ && a.first_end_ == b.first_end_ &&
           a.middle_end_ == b.middle_end_;
  }

 private:
  std::vector<Layer> layers_;
  std::size_t first_end_;
  std::size_t middle_end_;
  std::size_t input_dim_ = 0;
  Mode mode_ = Mode::Eval;
};

/// One gradient tensor per network parameter, in `Network::parameters()` order.
struct Gradients {
  std::vector<Tensor> tensors;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
};

// ---------------------------------------------------------------------------
// Initialization and construction
// ---------------------------------------------------------------------------

/// Samples a (rows x cols) tensor from Normal(0, 2 / fan_in).
Tensor kaiming_init(std::int64_t fan_in, std::size_t rows, std::size_t cols, Rng& rng);

Dense make_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng);
AggResidualBlock make_agg_block(std::size_t dim, std::size_t cardinality, std::size_t branch_width,
                                Rng& rng);

/// Classifier head: Dense -> ReLU -> Dropout(p1) -> Dense -> ReLU -> Dropout(p2)
/// -> Dense(2) -> SoftmaxOutput.
struct HeadSpec {
  std::size_t in_dim = 0;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  double dropout1 = 0.25;
  double dropout2 = 0.5;
};

std::vector<Layer> make_head(const HeadSpec& spec, Rng& rng);

/// Miniature backbone + head.
///   first group:  Dense(input -> stem) -> ReLU
///   middle group: blocks x (AggResidualBlock -> ReLU)
///   last group:   head (see HeadSpec)
struct ArchSpec {
  std::size_t input_dim = 256;
  std::size_t stem_width = 32;
  std::size_t blocks = 1;
  std::size_t cardinality = 4;
  std::size_t branch_width = 8;
  std::size_t head_hidden1 = 32;
  std::size_t head_hidden2 = 16;
  double dropout1 = 0.25;
  double dropout2 = 0.5;

  HeadSpec head_spec() const;
};

Network make_classifier(const ArchSpec& arch, Rng& rng);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Per-layer state captured by a forward pass and consumed by `backward`.
struct ForwardTrace {
  std::vector<Tensor> inputs;                     // input of each layer
  std::vector<Tensor> dropout_masks;              // scaled masks; empty when identity
  std::vector<std::vector<Tensor>> branch_hidden; // block pre-activations, per branch
  Tensor output;                                  // softmax probabilities
};

/// Forward pass honoring `net.mode()`. Train mode with an active dropout layer
/// requires `rng`.
ForwardTrace forward_trace(const Network& net, const Tensor& batch, Rng* rng);

Tensor forward(const Network& net, const Tensor& batch, Rng* rng = nullptr);

/// Eval-mode probabilities regardless of the network's mode flag.
Tensor predict_proba(const Network& net, const Tensor& batch);

Tensor agg_block_forward(const AggResidualBlock& block, const Tensor& x);

Tensor softmax_rows(const Tensor& logits);

/// Mean cross-entropy of the softmax of `logits` against integer labels.
double cross_entropy_from_logits(const Tensor& logits, std::span<const int> labels);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Backpropagates mean softmax cross-entropy through a recorded forward pass.
LossAndGrad backward(const Network& net, const ForwardTrace& trace, std::span<const int> labels);

/// forward_trace + backward in one call.
LossAndGrad loss_and_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                               Rng* rng);

/// Eval-mode mean cross-entropy.
double evaluate_loss(const Network& net, const Tensor& batch, std::span<const int> labels);

/// w <- w - lr(group) * grad. Parameters of a zero-lr group are not touched.
void sgd_step(Network& net, const Gradients& grads, const GroupLrs& group_lrs);

}  // namespace hiernet::nnet
