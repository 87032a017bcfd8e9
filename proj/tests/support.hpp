#pragma once

#include "arcil/autodiff.hpp"
#include "arcil/network.hpp"
#include "arcil/rng.hpp"
#include "arcil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace arcil::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

/// Dense net with the given widths (input first, classes last) and one task
/// head per entry of `heads` (cumulative boundaries). Empty heads means one.
inline Network random_net(std::uint64_t seed, const std::vector<std::size_t>& widths, Activation hidden,
                          std::vector<std::size_t> heads = {}, double scale = 1.0) {
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const double s = scale / std::sqrt(static_cast<double>(widths[i - 1]));
    Layer l{random_tensor({widths[i], widths[i - 1]}, rng, -s, s), random_tensor({widths[i]}, rng, -s, s),
            i + 1 == widths.size() ? Activation::kIdentity : hidden};
    layers.push_back(std::move(l));
  }
  if (heads.empty()) heads = {widths.back()};
  return Network(widths.front(), std::move(layers), std::move(heads), seed);
}

/// Single affine layer with the given weight rows and zero bias.
inline Network linear_net(const Tensor& weight, std::vector<std::size_t> heads = {}) {
  Layer l{weight, Tensor({weight.rows()}), Activation::kIdentity};
  if (heads.empty()) heads = {weight.rows()};
  return Network(weight.cols(), {l}, std::move(heads));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Batch-mean of a per-example loss evaluated without gradients.
inline double mean_loss(const Network& net, const PerExampleLoss& loss, const Tensor& x) {
  ad::Tape tape;
  const ad::Var out = loss(tape, tape.constant(net.forward(x)));
  double s = 0.0;
  for (double v : out.value().values()) s += v;
  return s / static_cast<double>(out.value().size());
}

/// Largest relative error between the reverse-mode parameter gradient and
/// central differences.
inline double param_grad_error(const Network& net, const PerExampleLoss& loss, const Tensor& x, double h = 1e-4) {
  const ParamGrad g = grad_params(net, loss, x);
  ParamView p = net.params();
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Network probe = net;
    const double keep = p.values[i];
    p.values[i] = keep + h;
    probe.set_params(p);
    const double up = mean_loss(probe, loss, x);
    p.values[i] = keep - h;
    probe.set_params(p);
    const double down = mean_loss(probe, loss, x);
    p.values[i] = keep;
    worst = std::max(worst, rel_err(g.grad.values[i], (up - down) / (2 * h)));
  }
  return worst;
}

inline double input_grad_error(const Network& net, const PerExampleLoss& loss, const Tensor& x, double h = 1e-4) {
  const InputGrad g = grad_input(net, loss, x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor up = x, down = x;
    up[i] += h;
    down[i] -= h;
    const double fd = (mean_loss(net, loss, up) - mean_loss(net, loss, down)) / (2 * h);
    // grad_input differentiates the batch mean.
    worst = std::max(worst, rel_err(g.grad[i], fd));
  }
  return worst;
}

inline PerExampleLoss ce_loss(std::vector<int> labels) {
  return [labels](ad::Tape&, const ad::Var& logits) { return ad::softmax_cross_entropy(logits, labels); };
}

/// Logit `col` of each row as the per-example scalar.
inline PerExampleLoss logit_loss(std::size_t col) {
  return [col](ad::Tape&, const ad::Var& logits) { return ad::row_sum(ad::slice_cols(logits, col, col + 1)); };
}

inline std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng));
  return y;
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("arcil_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace arcil::testing
