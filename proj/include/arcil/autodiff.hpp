#pragma once

#include "arcil/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

// Tensor-level reverse-mode differentiation over a linear tape. Nodes are
// appended in evaluation order, so reverse creation order is a valid
// topological order for the backward sweep.
namespace arcil::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient of the last backward() root with respect to this node. Zero
  /// tensor for nodes that do not require gradients.
  const Tensor& grad() const;
  bool requires_grad() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that accumulates a gradient.
  Var variable(Tensor value);

  /// Reverse sweep from a single-element root.
  void backward(const Var& root);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of an input; only valid when it requires grad.
  Tensor& grad_mut(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  Tensor zero_;
};

enum class Activation { kIdentity, kRelu, kTanh, kSoftplus };

// Structural ops.
Var linear(const Var& x, const Var& weight, const Var& bias);  // x·Wᵀ + b
Var activate(const Var& z, Activation act);
Var slice_cols(const Var& z, std::size_t begin, std::size_t end);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& a, double scale, double shift = 0.0);  // scale·a + shift
Var mean(const Var& a);
Var sum(const Var& a);
Var row_sum(const Var& a);

// Per-example loss kernels: [B, k] inputs, [B] outputs.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
/// Cross-entropy whose softmax denominator only covers columns with mask=true.
Var masked_cross_entropy(const Var& logits, std::span<const int> labels,
                         const std::vector<bool>& mask);
/// Mean over columns of the stabilized sigmoid binary cross-entropy.
Var bce_with_logits(const Var& logits, const Tensor& targets);
/// KL(softmax(target) ‖ softmax(pred)) per row; differentiable in both.
Var kl_divergence(const Var& target_logits, const Var& pred_logits);
/// Row mean of squared differences.
Var squared_error(const Var& a, const Var& b);
/// softmax(logits)[y] per row.
Var true_class_prob(const Var& logits, std::span<const int> labels);

// Value helpers shared with the non-differentiable paths.

/// x·Wᵀ + b where every output element is an independent dot product, so a
/// row's result never depends on the batch size or on other output rows.
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
double activation_value(Activation act, double z);
double sigmoid(double z);
double softplus(double z);
Tensor sigmoid(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits);

}  // namespace arcil::ad
