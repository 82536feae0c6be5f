#include "hiernet/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"

namespace hiernet::nnet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

[[noreturn]] void shape_fail(std::size_t layer_index, const std::string& what) {
  throw ShapeError("layer " + std::to_string(layer_index) + ": " + what);
}

void check_dense(const Dense& d, std::size_t index) {
  if (d.weight.rows() == 0 || d.weight.cols() == 0) shape_fail(index, "dense layer with empty weight");
  if (d.bias.rows() != 1 || d.bias.cols() != d.out_dim()) {
    shape_fail(index, "bias shape " + dims(d.bias) + " does not match weight " + dims(d.weight));
  }
}

void relu_inplace(Tensor& t) {
  for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

Tensor dense_forward(const Dense& d, const Tensor& x) {
  Tensor y = matmul(x, d.weight);
  add_row_broadcast(y, d.bias);
  return y;
}

Tensor block_forward(const AggResidualBlock& block, const Tensor& x,
                     std::vector<Tensor>* hidden_out) {
  Tensor branch_sum(x.rows(), x.cols());
  for (const auto& branch : block.branches) {
    Tensor hidden = dense_forward(branch.reduce, x);
    Tensor activated = hidden;
    relu_inplace(activated);
    add_inplace(branch_sum, dense_forward(branch.expand, activated));
    if (hidden_out != nullptr) hidden_out->push_back(std::move(hidden));
  }
  Tensor y = x;
  add_inplace(y, branch_sum);
  return y;
}

ForwardTrace run_forward(const Network& net, const Tensor& batch, Mode mode, Rng* rng,
                         bool record) {
  ForwardTrace trace;
  const auto& layers = net.layers();
  if (record) {
    trace.inputs.reserve(layers.size());
    trace.dropout_masks.resize(layers.size());
    trace.branch_hidden.resize(layers.size());
  }
  Tensor x = batch;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (record) trace.inputs.push_back(x);
    x = std::visit(
        Overloaded{
            [&](const Dense& d) {
              if (x.cols() != d.in_dim()) {
                shape_fail(i, "dense expects width " + std::to_string(d.in_dim()) + ", got " +
                                  std::to_string(x.cols()));
              }
              return dense_forward(d, x);
            },
            [&](const ReLU&) {
              Tensor y = x;
              relu_inplace(y);
              return y;
            },
            [&](const Dropout& drop) {
              if (mode == Mode::Eval || drop.p == 0.0) return x;
              if (rng == nullptr) {
                throw std::logic_error("train-mode dropout at layer " + std::to_string(i) +
                                       " needs a random generator");
              }
              std::uniform_real_distribution<double> unit(0.0, 1.0);
              const double keep_scale = 1.0 / (1.0 - drop.p);
              Tensor mask(x.rows(), x.cols());
              for (double& m : mask.values()) m = unit(*rng) < drop.p ? 0.0 : keep_scale;
              Tensor y = x;
              auto yv = y.values();
              auto mv = mask.values();
              for (std::size_t k = 0; k < yv.size(); ++k) yv[k] *= mv[k];
              if (record) trace.dropout_masks[i] = std::move(mask);
              return y;
            },
            [&](const AggResidualBlock& block) {
              if (x.cols() != block.dim()) {
                shape_fail(i, "residual block expects width " + std::to_string(block.dim()) +
                                  ", got " + std::to_string(x.cols()));
              }
              return block_forward(block, x, record ? &trace.branch_hidden[i] : nullptr);
            },
            [&](const SoftmaxOutput& s) {
              if (x.cols() != s.num_classes) {
                shape_fail(i, "softmax expects width " + std::to_string(s.num_classes) + ", got " +
                                  std::to_string(x.cols()));
              }
              return softmax_rows(x);
            },
        },
        layers[i]);
  }
  trace.output = std::move(x);
  return trace;
}

std::size_t parameter_count(const Layer& layer) {
  if (std::holds_alternative<Dense>(layer)) return 2;
  if (const auto* block = std::get_if<AggResidualBlock>(&layer)) return 4 * block->cardinality();
  return 0;
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense&) { return std::string("dense"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const Dropout&) { return std::string("dropout"); },
                        [](const AggResidualBlock&) { return std::string("agg_block"); },
                        [](const SoftmaxOutput&) { return std::string("softmax"); },
                    },
                    layer);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network::Network(std::vector<Layer> layers, std::size_t first_end, std::size_t middle_end)
    : layers_(std::move(layers)), first_end_(first_end), middle_end_(middle_end) {
  if (layers_.empty()) throw std::invalid_argument("network has no layers");
  if (first_end_ > middle_end_ || middle_end_ > layers_.size()) {
    throw std::invalid_argument("group boundaries (" + std::to_string(first_end_) + ", " +
                                std::to_string(middle_end_) + ") invalid for " +
                                std::to_string(layers_.size()) + " layers");
  }
  const auto* out = std::get_if<SoftmaxOutput>(&layers_.back());
  if (out == nullptr || out->num_classes != 2) {
    throw std::invalid_argument("final layer must be a two-class softmax output");
  }

  std::size_t current = 0;  // 0 = not yet determined
  auto accept = [&](std::size_t index, std::size_t in, std::size_t produced) {
    if (current == 0) {
      input_dim_ = in;
    } else if (current != in) {
      shape_fail(index, "expects width " + std::to_string(in) + ", previous layer produces " +
                            std::to_string(current));
    }
    current = produced;
  };

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(Overloaded{
                   [&](const Dense& d) {
                     check_dense(d, i);
                     accept(i, d.in_dim(), d.out_dim());
                   },
                   [](const ReLU&) {},
                   [&](const Dropout& drop) {
                     if (!(drop.p >= 0.0 && drop.p < 1.0)) {
                       throw std::invalid_argument("layer " + std::to_string(i) +
                                                   ": dropout probability must be in [0, 1)");
                     }
                   },
                   [&](const AggResidualBlock& block) {
                     if (block.branches.empty()) shape_fail(i, "residual block needs cardinality >= 1");
                     const std::size_t dim = block.dim();
                     const std::size_t width = block.branch_width();
                     for (const auto& br : block.branches) {
                       check_dense(br.reduce, i);
                       check_dense(br.expand, i);
                       if (br.reduce.in_dim() != dim || br.reduce.out_dim() != width ||
                           br.expand.in_dim() != width || br.expand.out_dim() != dim) {
                         shape_fail(i, "residual block branches disagree on dimensions");
                       }
                     }
                     accept(i, dim, dim);
                   },
                   [&](const SoftmaxOutput& s) {
                     if (i + 1 != layers_.size()) {
                       throw std::invalid_argument("softmax output must be the final layer");
                     }
                     accept(i, s.num_classes, s.num_classes);
                   },
               },
               layers_[i]);
  }
}

LayerGroup Network::group_of(std::size_t layer_index) const noexcept {
  if (layer_index < first_end_) return LayerGroup::First;
  if (layer_index < middle_end_) return LayerGroup::Middle;
  return LayerGroup::Last;
}

std::size_t Network::middle_output_dim() const {
  std::size_t current = input_dim_;
  for (std::size_t i = 0; i < middle_end_; ++i) {
    if (const auto* d = std::get_if<Dense>(&layers_[i])) current = d->out_dim();
    if (const auto* b = std::get_if<AggResidualBlock>(&layers_[i])) current = b->dim();
  }
  return current;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* d = std::get_if<Dense>(&layers_[i])) {
      refs.push_back({&d->weight, i});
      refs.push_back({&d->bias, i});
    } else if (auto* block = std::get_if<AggResidualBlock>(&layers_[i])) {
      for (auto& br : block->branches) {
        refs.push_back({&br.reduce.weight, i});
        refs.push_back({&br.reduce.bias, i});
        refs.push_back({&br.expand.weight, i});
        refs.push_back({&br.expand.bias, i});
      }
    }
  }
  return refs;
}

std::vector<ConstParamRef> Network::parameters() const {
  std::vector<ConstParamRef> refs;
  for (auto ref : const_cast<Network*>(this)->parameters()) refs.push_back({ref.tensor, ref.layer_index});
  return refs;
}

void Network::reinitialize_group(LayerGroup group, Rng& rng) {
  auto reinit = [&rng](Dense& d) {
    d.weight = kaiming_init(static_cast<std::int64_t>(d.in_dim()), d.in_dim(), d.out_dim(), rng);
    d.bias = Tensor(1, d.out_dim());
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (group_of(i) != group) continue;
    if (auto* d = std::get_if<Dense>(&layers_[i])) {
      reinit(*d);
    } else if (auto* block = std::get_if<AggResidualBlock>(&layers_[i])) {
      for (auto& br : block->branches) {
        reinit(br.reduce);
        reinit(br.expand);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

Tensor kaiming_init(std::int64_t fan_in, std::size_t rows, std::size_t cols, Rng& rng) {
  if (fan_in <= 0) {
    throw std::invalid_argument("kaiming_init: fan_in must be positive, got " +
                                std::to_string(fan_in));
  }
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor out(rows, cols);
  for (double& v : out.values()) v = normal(rng);
  return out;
}

Dense make_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  return Dense{kaiming_init(static_cast<std::int64_t>(in_dim), in_dim, out_dim, rng),
               Tensor(1, out_dim)};
}

AggResidualBlock make_agg_block(std::size_t dim, std::size_t cardinality, std::size_t branch_width,
                                Rng& rng) {
  if (cardinality == 0) throw std::invalid_argument("residual block cardinality must be >= 1");
  AggResidualBlock block;
  block.branches.reserve(cardinality);
  for (std::size_t c = 0; c < cardinality; ++c) {
    Dense reduce = make_dense(dim, branch_width, rng);
    Dense expand = make_dense(branch_width, dim, rng);
    block.branches.push_back({std::move(reduce), std::move(expand)});
  }
  return block;
}

std::vector<Layer> make_head(const HeadSpec& spec, Rng& rng) {
  if (spec.in_dim == 0 || spec.hidden1 == 0 || spec.hidden2 == 0) {
    throw std::invalid_argument("head dimensions must be positive");
  }
  std::vector<Layer> head;
  head.emplace_back(make_dense(spec.in_dim, spec.hidden1, rng));
  head.emplace_back(ReLU{});
  head.emplace_back(Dropout{spec.dropout1});
  head.emplace_back(make_dense(spec.hidden1, spec.hidden2, rng));
  head.emplace_back(ReLU{});
  head.emplace_back(Dropout{spec.dropout2});
  head.emplace_back(make_dense(spec.hidden2, 2, rng));
  head.emplace_back(SoftmaxOutput{2});
  return head;
}

HeadSpec ArchSpec::head_spec() const {
  return HeadSpec{stem_width, head_hidden1, head_hidden2, dropout1, dropout2};
}

Network make_classifier(const ArchSpec& arch, Rng& rng) {
  std::vector<Layer> layers;
  layers.emplace_back(make_dense(arch.input_dim, arch.stem_width, rng));
  layers.emplace_back(ReLU{});
  const std::size_t first_end = layers.size();
  for (std::size_t b = 0; b < arch.blocks; ++b) {
    layers.emplace_back(make_agg_block(arch.stem_width, arch.cardinality, arch.branch_width, rng));
    layers.emplace_back(ReLU{});
  }
  const std::size_t middle_end = layers.size();
  for (auto& layer : make_head(arch.head_spec(), rng)) layers.push_back(std::move(layer));
  return Network(std::move(layers), first_end, middle_end);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto dst = out.row(r);
    const double top = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - top);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

ForwardTrace forward_trace(const Network& net, const Tensor& batch, Rng* rng) {
  return run_forward(net, batch, net.mode(), rng, true);
}

Tensor forward(const Network& net, const Tensor& batch, Rng* rng) {
  return run_forward(net, batch, net.mode(), rng, false).output;
}

Tensor predict_proba(const Network& net, const Tensor& batch) {
  return run_forward(net, batch, Mode::Eval, nullptr, false).output;
}

Tensor agg_block_forward(const AggResidualBlock& block, const Tensor& x) {
  if (block.branches.empty()) throw ShapeError("residual block needs cardinality >= 1");
  if (x.cols() != block.dim()) {
    throw ShapeError("residual block expects width " + std::to_string(block.dim()) + ", got " +
                     std::to_string(x.cols()));
  }
  return block_forward(block, x, nullptr);
}

double cross_entropy_from_logits(const Tensor& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw InvalidLabelError("expected " + std::to_string(logits.rows()) + " labels, got " +
                            std::to_string(labels.size()));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= logits.cols()) {
      throw InvalidLabelError("label " + std::to_string(label) + " out of range at row " +
                              std::to_string(r));
    }
    auto z = logits.row(r);
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - top);
    total += top + std::log(sum) - z[static_cast<std::size_t>(label)];
  }
  return total / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

LossAndGrad backward(const Network& net, const ForwardTrace& trace, std::span<const int> labels) {
  const auto& layers = net.layers();
  if (trace.inputs.size() != layers.size()) {
    throw std::invalid_argument("forward trace does not belong to this network");
  }
  const Tensor& logits = trace.inputs.back();
  LossAndGrad result;
  result.loss = cross_entropy_from_logits(logits, labels);
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss in backward pass");

  const auto n = static_cast<double>(logits.rows());
  Tensor grad = trace.output;
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    grad(r, static_cast<std::size_t>(labels[r])) -= 1.0;
  }
  for (double& v : grad.values()) v /= n;

  std::vector<std::vector<Tensor>> per_layer(layers.size());
  for (std::size_t idx = layers.size() - 1; idx-- > 0;) {
    const Tensor& x = trace.inputs[idx];
    const bool need_input_grad = idx > 0;
    std::visit(
        Overloaded{
            [&](const Dense& d) {
              per_layer[idx].push_back(matmul_tn(x, grad));
              per_layer[idx].push_back(column_sums(grad));
              if (need_input_grad) grad = matmul_nt(grad, d.weight);
            },
            [&](const ReLU&) {
              auto g = grad.values();
              auto xv = x.values();
              for (std::size_t k = 0; k < g.size(); ++k) {
                if (!(xv[k] > 0.0)) g[k] = 0.0;
              }
            },
            [&](const Dropout&) {
              const Tensor& mask = trace.dropout_masks[idx];
              if (mask.empty()) return;
              auto g = grad.values();
              auto mv = mask.values();
              for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mv[k];
            },
            [&](const AggResidualBlock& block) {
              const auto& hidden = trace.branch_hidden[idx];
              Tensor input_grad = grad;
              for (std::size_t b = 0; b < block.cardinality(); ++b) {
                const auto& br = block.branches[b];
                Tensor activated = hidden[b];
                relu_inplace(activated);
                Tensor d_hidden = matmul_nt(grad, br.expand.weight);
                auto dh = d_hidden.values();
                auto hv = hidden[b].values();
                for (std::size_t k = 0; k < dh.size(); ++k) {
                  if (!(hv[k] > 0.0)) dh[k] = 0.0;
                }
                per_layer[idx].push_back(matmul_tn(x, d_hidden));
                per_layer[idx].push_back(column_sums(d_hidden));
                per_layer[idx].push_back(matmul_tn(activated, grad));
                per_layer[idx].push_back(column_sums(grad));
                if (need_input_grad) add_inplace(input_grad, matmul_nt(d_hidden, br.reduce.weight));
              }
              grad = std::move(input_grad);
            },
            [](const SoftmaxOutput&) {},
        },
        layers[idx]);
  }

  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (per_layer[i].size() != parameter_count(layers[i])) {
      throw std::logic_error("gradient bookkeeping mismatch at layer " + std::to_string(i));
    }
    for (auto& g : per_layer[i]) result.grads.tensors.push_back(std::move(g));
  }
  return result;
}

LossAndGrad loss_and_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                               Rng* rng) {
  return backward(net, forward_trace(net, batch, rng), labels);
}

double evaluate_loss(const Network& net, const Tensor& batch, std::span<const int> labels) {
  auto trace = run_forward(net, batch, Mode::Eval, nullptr, true);
  return cross_entropy_from_logits(trace.inputs.back(), labels);
}

void sgd_step(Network& net, const Gradients& grads, const GroupLrs& group_lrs) {
  for (double lr : group_lrs) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
      throw std::invalid_argument("group learning rates must be finite and non-negative");
    }
  }
  auto params = net.parameters();
  if (params.size() != grads.tensors.size()) {
    throw ShapeError("gradient count " + std::to_string(grads.tensors.size()) +
                     " does not match parameter count " + std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].tensor;
    const Tensor& g = grads.tensors[p];
    if (w.rows() != g.rows() || w.cols() != g.cols()) {
      throw ShapeError("gradient " + std::to_string(p) + " has shape " + dims(g) +
                       ", parameter has " + dims(w));
    }
    const double lr = group_lrs[static_cast<std::size_t>(net.group_of(params[p].layer_index))];
    if (lr == 0.0) continue;
    auto wv = w.values();
    auto gv = g.values();
    for (std::size_t k = 0; k < wv.size(); ++k) wv[k] -= lr * gv[k];
  }
}

}  // namespace hiernet::nnet
