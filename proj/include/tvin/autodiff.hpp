#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tvin/rng.hpp"
#include "tvin/tensor.hpp"

namespace tvin {

/// Trainable (or deliberately frozen) tensor. Frozen params keep receiving
/// gradients; sgd_step just refuses to move them.
struct Param {
  Tensor value;
  Tensor grad;
  bool frozen = false;
  std::string name;

  Param() = default;
  Param(std::string n, Tensor v, bool freeze = false)
      : value(std::move(v)), grad(value.shape()), frozen(freeze), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0f); }
};

using ValueId = int32_t;
constexpr ValueId kNoValue = -1;

/// Collects parameter gradients from one backward pass without touching the
/// params themselves. Buffers from independent passes are then reduced in a
/// fixed order, which keeps training results identical however work is split.
class GradSink {
 public:
  Tensor& slot(Param* p);
  /// Adds every buffered gradient into its param's grad field.
  void flush();
  void clear() { slots_.clear(); order_.clear(); }

 private:
  std::unordered_map<Param*, Tensor> slots_;
  std::vector<Param*> order_;
};

/// Reverse-mode tape over exactly the ops the planner graph needs.
/// Ops append nodes; backward() replays them in reverse execution order and
/// accumulates gradients additively into shared inputs. All reductions use
/// f64 accumulators over the f32 buffers.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  /// Leaf with no gradient tracking (observations, labels-as-data).
  ValueId constant(Tensor value);
  /// Leaf bound to a param; backward() routes gradient into it.
  ValueId leaf(Param& p);

  /// Cross-correlation with zero "same" padding, odd F only. Kernel layout
  /// (C_out, C_in, F, F); bias optional with shape (C_out).
  ValueId conv2d(ValueId input, ValueId kernel, ValueId bias = kNoValue);

  ValueId relu(ValueId x);

  /// Stacks two (C,H,W) tensors along the channel axis.
  ValueId concat_channels(ValueId a, ValueId b);

  /// Input (A*G,H,W), channel a*G+g belongs to group g. Output (G,H,W) holds
  /// the per-group max over A; gradient routes to the winning channel only,
  /// ties to the lowest channel index. Winner indices optionally exposed.
  ValueId channel_group_max(ValueId x, int groups, std::vector<int>* argmax_out = nullptr);

  /// Affine map: weight (D_out,D_in), bias (D_out), input (D_in).
  ValueId linear(ValueId x, ValueId weight, ValueId bias);

  /// Elementwise product with a one-element tensor.
  ValueId scalar_scale(ValueId x, ValueId s);

  /// Concatenates 4-D kernel blocks along the output-channel axis.
  ValueId stack_rows(const std::vector<ValueId>& blocks);

  /// Attention selection: picks the A values Q[a*G+o, i, j] from a (A*G,H,W) map.
  ValueId select_state(ValueId q, int i, int j, int o, int groups);

  ValueId add(ValueId a, ValueId b);

  /// Scalar projection sum(weights * x) with constant weights.
  ValueId weighted_sum(ValueId x, Tensor weights);

  /// Numerically stable -log softmax(logits)[target]. Scalar output; the
  /// softmax itself can be copied out for policy inspection.
  ValueId softmax_cross_entropy(ValueId logits, int target, Tensor* probs_out = nullptr);

  /// Seeds d(loss)/d(loss) = seed and walks the tape backwards. Gradients for
  /// param leaves go to `sink` when given, else straight into Param::grad.
  void backward(ValueId loss, float seed = 1.0f, GradSink* sink = nullptr);

  const Tensor& value(ValueId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(ValueId id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool recording() const { return record_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Param* param = nullptr;
    std::function<void(Tape&, ValueId)> back;
  };

  ValueId push(Tensor value, bool needs_grad, std::function<void(Tape&, ValueId)> back);
  Node& node(ValueId id) { return nodes_[static_cast<size_t>(id)]; }
  bool wants_grad(ValueId id) const {
    return id != kNoValue && nodes_[static_cast<size_t>(id)].needs_grad;
  }
  Tensor& grad_mut(ValueId id) { return nodes_[static_cast<size_t>(id)].grad; }

  // Deque keeps value()/grad() references stable while later ops append.
  bool record_;
  std::deque<Node> nodes_;
};

/// Plain SGD: value -= lr * grad for trainable params, frozen ones stay put.
/// All grads (frozen included) are zeroed afterwards.
void sgd_step(const std::vector<Param*>& params, float lr);

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool pass = false;
  std::vector<std::pair<std::string, double>> per_param;  // name -> max rel err
};

/// Central-difference check of d(loss)/d(param) on a random subsample of at
/// most 64 coordinates per param. `loss_fn(true)` must zero grads, run the
/// graph with recording and backward, and return the loss; `loss_fn(false)`
/// must return the loss without touching grads.
GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           const std::vector<Param*>& params, double eps, double tol,
                           uint64_t seed);

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for weights.
void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng);

namespace kernels {
// Raw forward kernels, shared between the tape and a few no-grad paths.
void conv2d_forward(const Tensor& x, const Tensor& w, const float* bias, Tensor& out);
void conv2d_backward_input(const Tensor& g, const Tensor& w, Tensor& dx);
void conv2d_backward_kernel(const Tensor& g, const Tensor& x, Tensor& dw);
}  // namespace kernels

}  // namespace tvin
