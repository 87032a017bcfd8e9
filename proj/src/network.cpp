#include "arcil/network.hpp"

#include "arcil/error.hpp"
#include "arcil/rng.hpp"

#include <bit>
#include <cmath>

namespace arcil {

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  throw ArgumentError("unknown activation '" + name + "'");
}

// ---- ParamView --------------------------------------------------------------

bool ParamView::same_layout(const ParamView& other) const {
  if (layout.size() != other.layout.size() || values.size() != other.values.size()) return false;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Slot& a = layout[i];
    const Slot& b = other.layout[i];
    if (a.offset != b.offset || a.out != b.out || a.in != b.in) return false;
  }
  return true;
}

std::span<double> ParamView::weight(std::size_t layer) {
  const Slot& s = layout.at(layer);
  return {values.data() + s.offset, s.weight_count()};
}

std::span<const double> ParamView::weight(std::size_t layer) const {
  const Slot& s = layout.at(layer);
  return {values.data() + s.offset, s.weight_count()};
}

std::span<double> ParamView::bias(std::size_t layer) {
  const Slot& s = layout.at(layer);
  return {values.data() + s.offset + s.weight_count(), s.out};
}

std::span<const double> ParamView::bias(std::size_t layer) const {
  const Slot& s = layout.at(layer);
  return {values.data() + s.offset + s.weight_count(), s.out};
}

ParamView ParamView::zeros_like() const {
  ParamView z;
  z.layout = layout;
  z.values.assign(values.size(), 0.0);
  return z;
}

// ---- Network ----------------------------------------------------------------

Network::Network(std::size_t input_dim, std::vector<Layer> layers,
                 std::vector<std::size_t> head_boundaries, std::uint64_t seed)
    : input_dim_(input_dim),
      layers_(std::move(layers)),
      head_boundaries_(std::move(head_boundaries)),
      seed_(seed) {
  if (input_dim_ == 0) throw DimensionError("network input_dim must be positive");
  if (layers_.empty()) throw DimensionError("network needs at least one layer");
  std::size_t prev = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.weight.rows() == 0) {
      throw DimensionError("layer " + std::to_string(i) + " has malformed weight/bias");
    }
    if (l.in_dim() != prev) {
      throw DimensionError("layer " + std::to_string(i) + " expects " + std::to_string(l.in_dim()) +
                           " inputs but receives " + std::to_string(prev));
    }
    if (l.bias.size() != l.out_dim()) {
      throw DimensionError("layer " + std::to_string(i) + " bias length mismatch");
    }
    prev = l.out_dim();
  }
  if (head_boundaries_.empty()) throw DimensionError("network needs at least one task head");
  for (std::size_t i = 0; i < head_boundaries_.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : head_boundaries_[i - 1];
    if (head_boundaries_[i] <= lo) throw DimensionError("head boundaries must be strictly increasing");
  }
  if (head_boundaries_.back() != prev) {
    throw DimensionError("last head boundary " + std::to_string(head_boundaries_.back()) +
                         " does not match output width " + std::to_string(prev));
  }
}

Network Network::create(const NetworkSpec& spec) {
  if (spec.first_task_classes == 0) throw ArgumentError("first task needs at least one class");
  Rng rng(derive_seed(spec.seed, Purpose::kInit));
  std::vector<Layer> layers;
  std::size_t prev = spec.input_dim;
  auto make = [&](std::size_t out, Activation act) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
    Layer l{Tensor({out, prev}), Tensor({out}), act};
    for (double& w : l.weight.data()) w = uniform(rng, -scale, scale);
    for (double& b : l.bias.data()) b = uniform(rng, -scale, scale);
    layers.push_back(std::move(l));
    prev = out;
  };
  for (std::size_t h : spec.hidden) make(h, spec.hidden_activation);
  make(spec.first_task_classes, Activation::kIdentity);
  return Network(spec.input_dim, std::move(layers), {spec.first_task_classes}, spec.seed);
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Network::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim_) {
    throw DimensionError("network expects [batch, " + std::to_string(input_dim_) + "] input, got " +
                         shape_string(x.shape()));
  }
}

Tensor Network::forward(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (const Layer& l : layers_) {
    h = ad::linear_forward(h, l.weight, l.bias);
    if (l.activation != Activation::kIdentity) {
      for (double& v : h.data()) v = ad::activation_value(l.activation, v);
    }
  }
  return h;
}

Tensor Network::features(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    h = ad::linear_forward(h, l.weight, l.bias);
    for (double& v : h.data()) v = ad::activation_value(l.activation, v);
  }
  return h;
}

Network::Bound Network::bind(ad::Tape& tape, bool trainable) const {
  Bound b;
  for (const Layer& l : layers_) {
    b.weights.push_back(trainable ? tape.variable(l.weight) : tape.constant(l.weight));
    b.biases.push_back(trainable ? tape.variable(l.bias) : tape.constant(l.bias));
  }
  return b;
}

ad::Var Network::forward(const Bound& params, const ad::Var& x) const {
  check_input(x.value());
  ad::Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = ad::activate(ad::linear(h, params.weights[i], params.biases[i]), layers_[i].activation);
  }
  return h;
}

ParamView Network::params() const {
  ParamView v;
  v.values.reserve(param_count());
  for (const Layer& l : layers_) {
    v.layout.push_back({v.values.size(), l.out_dim(), l.in_dim()});
    v.values.insert(v.values.end(), l.weight.data().begin(), l.weight.data().end());
    v.values.insert(v.values.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return v;
}

void Network::set_params(const ParamView& view) {
  if (!view.same_layout(params())) throw DimensionError("parameter layout does not match network");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto w = view.weight(i);
    auto b = view.bias(i);
    std::copy(w.begin(), w.end(), layers_[i].weight.data().begin());
    std::copy(b.begin(), b.end(), layers_[i].bias.data().begin());
  }
}

ParamView Network::gradient(const Bound& bound) const {
  ParamView g = params().zeros_like();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!bound.weights[i].requires_grad()) continue;
    const auto gw = bound.weights[i].grad().data();
    const auto gb = bound.biases[i].grad().data();
    std::copy(gw.begin(), gw.end(), g.weight(i).begin());
    std::copy(gb.begin(), gb.end(), g.bias(i).begin());
  }
  return g;
}

std::uint64_t Network::checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mix(input_dim_);
  for (std::size_t b : head_boundaries_) mix(b);
  for (const Layer& l : layers_) {
    mix(l.out_dim());
    mix(l.in_dim());
    mix(static_cast<std::uint64_t>(l.activation));
    for (double v : l.weight.data()) mix(std::bit_cast<std::uint64_t>(v));
    for (double v : l.bias.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

FrozenNetwork snapshot(const Network& net) { return std::make_shared<const Network>(net); }

// ---- gradients ----------------------------------------------------------------

namespace {

struct LossPass {
  ad::Var per_example;
  ad::Var mean;
};

LossPass run_loss(const Network& net, const PerExampleLoss& loss, ad::Tape& tape,
                  const Network::Bound& bound, const ad::Var& x) {
  const ad::Var logits = net.forward(bound, x);
  for (std::size_t r = 0; r < logits.value().rows(); ++r) {
    for (double v : logits.value().row(r)) {
      if (!std::isfinite(v)) throw NumericError("non-finite logits at batch index " + std::to_string(r), r);
    }
  }
  const ad::Var per = loss(tape, logits);
  const Tensor& pv = per.value();
  if (pv.rank() != 1 || pv.size() != x.value().rows()) {
    throw DimensionError("per-example loss must have shape [batch], got " + shape_string(pv.shape()));
  }
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!std::isfinite(pv[i])) throw NumericError("non-finite loss at batch index " + std::to_string(i), i);
  }
  return {per, ad::mean(per)};
}

}  // namespace

ParamGrad grad_params(const Network& net, const PerExampleLoss& loss, const Tensor& x) {
  net.check_input(x);
  ad::Tape tape;
  const auto bound = net.bind(tape, true);
  const ad::Var xv = tape.constant(x);
  const LossPass pass = run_loss(net, loss, tape, bound, xv);
  ParamGrad out;
  out.loss = pass.mean.value().item();
  if (pass.mean.requires_grad()) {
    tape.backward(pass.mean);
    out.grad = net.gradient(bound);
  } else {
    out.grad = net.params().zeros_like();
  }
  return out;
}

InputGrad grad_input(const Network& net, const PerExampleLoss& loss, const Tensor& x) {
  net.check_input(x);
  ad::Tape tape;
  const auto bound = net.bind(tape, false);
  const ad::Var xv = tape.variable(x);
  const LossPass pass = run_loss(net, loss, tape, bound, xv);
  InputGrad out;
  out.loss = pass.mean.value().item();
  tape.backward(pass.mean);
  out.grad = xv.grad();
  return out;
}

Tensor hessian_input(const Network& net, const PerExampleLoss& loss, const Tensor& x,
                     const HessianOptions& opts) {
  const std::size_t d = net.input_dim();
  if (d > opts.cap) {
    throw CapacityError("input_dim " + std::to_string(d) + " exceeds Hessian cap " + std::to_string(opts.cap));
  }
  if (x.size() != d) throw DimensionError("hessian_input expects a single example of " + std::to_string(d) + " values");
  if (!(opts.step > 0.0)) throw ArgumentError("finite-difference step must be positive");
  const Tensor base = x.reshaped({1, d});
  Tensor h({d, d});
  for (std::size_t k = 0; k < d; ++k) {
    Tensor plus = base, minus = base;
    plus[k] += opts.step;
    minus[k] -= opts.step;
    const Tensor gp = grad_input(net, loss, plus).grad;
    const Tensor gm = grad_input(net, loss, minus).grad;
    const double denom = plus[k] - minus[k];
    for (std::size_t i = 0; i < d; ++i) h(i, k) = (gp[i] - gm[i]) / denom;
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  }
  if (!h.all_finite()) throw NumericError("non-finite input Hessian");
  return h;
}

ParamView sgd_step(const ParamView& params, const ParamView& grads, double lr, double weight_decay) {
  if (params.size() != grads.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
  }
  ParamView out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double theta = params.values[i];
    out.values[i] = theta - lr * (grads.values[i] + weight_decay * theta);
  }
  return out;
}

double default_head_init_scale(const Network& net) {
  return 1.0 / std::sqrt(static_cast<double>(net.layers().back().in_dim()));
}

Network expand_head(const Network& net, std::size_t n_new_classes, double init_scale, std::uint64_t seed) {
  if (n_new_classes == 0) throw ArgumentError("expand_head needs at least one new class");
  if (init_scale < 0.0 || !std::isfinite(init_scale)) throw ArgumentError("init_scale must be finite and nonnegative");
  std::vector<Layer> layers = net.layers();
  Layer& head = layers.back();
  const std::size_t old_out = head.out_dim(), in = head.in_dim(), new_out = old_out + n_new_classes;
  std::vector<double> w(head.weight.data().begin(), head.weight.data().end());
  std::vector<double> b(head.bias.data().begin(), head.bias.data().end());
  Rng rng(seed);
  for (std::size_t i = 0; i < n_new_classes * in; ++i) w.push_back(init_scale > 0 ? uniform(rng, -init_scale, init_scale) : 0.0);
  for (std::size_t i = 0; i < n_new_classes; ++i) b.push_back(init_scale > 0 ? uniform(rng, -init_scale, init_scale) : 0.0);
  head.weight = Tensor({new_out, in}, std::move(w));
  head.bias = Tensor({new_out}, std::move(b));
  std::vector<std::size_t> bounds = net.head_boundaries();
  bounds.push_back(new_out);
  return Network(net.input_dim(), std::move(layers), std::move(bounds), net.seed());
}

}  // namespace arcil
