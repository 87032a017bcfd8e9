#pragma once

#include "arcil/autodiff.hpp"
#include "arcil/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace arcil {

using ad::Activation;

std::string activation_name(Activation act);
Activation parse_activation(const std::string& name);

struct Layer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Flattened parameters. Each layer contributes its weight (row-major) then
/// its bias, in layer order.
struct ParamView {
  struct Slot {
    std::size_t offset = 0;
    std::size_t out = 0;
    std::size_t in = 0;
    std::size_t weight_count() const { return out * in; }
    std::size_t count() const { return out * in + out; }
  };

  std::vector<double> values;
  std::vector<Slot> layout;

  std::size_t size() const { return values.size(); }
  bool same_layout(const ParamView& other) const;
  std::span<double> weight(std::size_t layer);
  std::span<const double> weight(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  /// Zero-filled view with the same layout.
  ParamView zeros_like() const;
};

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  Activation hidden_activation = Activation::kRelu;
  std::size_t first_task_classes = 0;
  std::uint64_t seed = 0;
};

/// Feed-forward dense classifier whose output layer is partitioned into task
/// heads by cumulative class counts.
class Network {
 public:
  Network(std::size_t input_dim, std::vector<Layer> layers, std::vector<std::size_t> head_boundaries,
          std::uint64_t seed = 0);

  /// Uniform(−1/√fan_in, 1/√fan_in) initialization for every layer.
  static Network create(const NetworkSpec& spec);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_classes() const { return head_boundaries_.back(); }
  std::size_t n_tasks() const { return head_boundaries_.size(); }
  const std::vector<std::size_t>& head_boundaries() const { return head_boundaries_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t param_count() const;

  /// Pre-softmax logits, [batch, n_classes].
  Tensor forward(const Tensor& x) const;
  /// Activations feeding the output layer, [batch, width].
  Tensor features(const Tensor& x) const;

  struct Bound {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
  };
  /// Puts the parameters on a tape; `trainable` makes them gradient leaves.
  Bound bind(ad::Tape& tape, bool trainable) const;
  ad::Var forward(const Bound& params, const ad::Var& x) const;

  ParamView params() const;
  void set_params(const ParamView& view);
  /// Collects parameter gradients after a backward sweep over `params`.
  ParamView gradient(const Bound& params) const;

  void check_input(const Tensor& x) const;

  /// Order-sensitive FNV-1a hash over shapes and parameter bits.
  std::uint64_t checksum() const;

 private:
  std::size_t input_dim_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> head_boundaries_;
  std::uint64_t seed_;
};

using FrozenNetwork = std::shared_ptr<const Network>;

/// Deep immutable copy, usable as a teacher.
FrozenNetwork snapshot(const Network& net);

/// Differentiable per-example loss of a logits batch, returning shape [batch].
using PerExampleLoss = std::function<ad::Var(ad::Tape&, const ad::Var& logits)>;

struct ParamGrad {
  double loss = 0.0;
  ParamView grad;
};

struct InputGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Gradient of the batch-mean loss with respect to every parameter.
ParamGrad grad_params(const Network& net, const PerExampleLoss& loss, const Tensor& x);
/// Gradient of the batch-mean loss with respect to the inputs.
InputGrad grad_input(const Network& net, const PerExampleLoss& loss, const Tensor& x);

struct HessianOptions {
  double step = 1e-4;
  std::size_t cap = 128;
};

/// Input Hessian of the loss at a single example, by central differences of
/// exact input gradients, symmetrized as (H + Hᵀ)/2.
Tensor hessian_input(const Network& net, const PerExampleLoss& loss, const Tensor& x,
                     const HessianOptions& opts = {});

/// θ ← θ − lr·(g + weight_decay·θ).
ParamView sgd_step(const ParamView& params, const ParamView& grads, double lr, double weight_decay);

double default_head_init_scale(const Network& net);

/// Appends `n_new_classes` output rows initialized from a seeded
/// uniform(−init_scale, init_scale); existing logits are untouched.
Network expand_head(const Network& net, std::size_t n_new_classes, double init_scale, std::uint64_t seed);

}  // namespace arcil
