#include "arcil/autodiff.hpp"

#include "arcil/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace arcil::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (std::size_t i : inputs) needs = needs || nodes_[i].requires_grad;
  if (!needs) return constant(std::move(value));
  nodes_.push_back(Node{std::move(value), Tensor(), true, std::move(inputs), std::move(fn)});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    throw ContractError("gradient requested before backward()");
  }
  return n.grad;
}

Tensor& Tape::grad_mut(std::size_t id) { return nodes_[id].grad; }

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw ContractError("backward root belongs to another tape");
  if (nodes_[root.id_].value.size() != 1) {
    throw DimensionError("backward root must be a single value, got " +
                         shape_string(nodes_[root.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
  nodes_[root.id_].grad[0] = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backward) n.backward(*this, id);
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected [batch, k], got " + shape_string(a.shape()));
  }
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t cols, const char* op) {
  if (labels.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) {
      throw LabelError(std::string(op) + ": label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(cols) + ")");
    }
  }
}

// log-sum-exp of one row, restricted to masked columns when a mask is given.
double row_lse(std::span<const double> z, const std::vector<bool>* mask) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!mask || (*mask)[j]) m = std::max(m, z[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!mask || (*mask)[j]) s += std::exp(z[j] - m);
  }
  return m + std::log(s);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double activation_value(Activation act, double z) {
  switch (act) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kSoftplus: return softplus(z);
  }
  return z;
}

Tensor sigmoid(const Tensor& logits) {
  Tensor out = logits;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double lse = row_lse(row, nullptr);
    for (double& v : row) v = std::exp(v - lse);
  }
  return out;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t batch = x.rows(), out_dim = weight.rows(), in_dim = weight.cols();
  if (x.cols() != in_dim || bias.size() != out_dim) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  Tensor out({batch, out_dim});
  const auto n = static_cast<Eigen::Index>(in_dim);
  for (std::size_t r = 0; r < batch; ++r) {
    const Eigen::Map<const Eigen::VectorXd> xr(x.row(r).data(), n);
    auto orow = out.row(r);
    for (std::size_t j = 0; j < out_dim; ++j) {
      const Eigen::Map<const Eigen::VectorXd> wj(weight.row(j).data(), n);
      orow[j] = xr.dot(wj) + bias[j];
    }
  }
  return out;
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_matrix(x, "linear");
  const Tensor& w = weight.value();
  if (w.rank() != 2 || x.value().cols() != w.cols() || bias.value().size() != w.rows()) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(bias.shape()));
  }
  Tensor out = linear_forward(x.value(), w, bias.value());
  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.tape().record(std::move(out), {xi, wi, bi}, [xi, wi, bi](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(xi)) t.grad_mut(xi).mat().noalias() += g * t.value(wi).mat();
    if (t.requires_grad(wi)) t.grad_mut(wi).mat().noalias() += g.transpose() * t.value(xi).mat();
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_mut(bi);
      Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) +=
          g.colwise().sum();
    }
  });
}

Var activate(const Var& z, Activation act) {
  if (act == Activation::kIdentity) return z;
  Tensor out = z.value();
  for (double& v : out.data()) v = activation_value(act, v);
  const std::size_t zi = z.id();
  return z.tape().record(std::move(out), {zi}, [zi, act](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto in = t.value(zi).data();
    const auto y = t.value(self).data();
    auto gz = t.grad_mut(zi).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (act) {
        case Activation::kRelu: gz[i] += in[i] > 0.0 ? g[i] : 0.0; break;
        case Activation::kTanh: gz[i] += g[i] * (1.0 - y[i] * y[i]); break;
        case Activation::kSoftplus: gz[i] += g[i] * sigmoid(in[i]); break;
        case Activation::kIdentity: gz[i] += g[i]; break;
      }
    }
  });
}

Var slice_cols(const Var& z, std::size_t begin, std::size_t end) {
  require_matrix(z, "slice_cols");
  const std::size_t k = z.value().cols();
  if (begin >= end || end > k) {
    throw ArgumentError("slice_cols: bad column range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") of " + std::to_string(k));
  }
  const std::size_t rows = z.value().rows(), w = end - begin;
  Tensor out({rows, w});
  out.mat() = z.value().mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w));
  const std::size_t zi = z.id();
  return z.tape().record(std::move(out), {zi}, [zi, begin, w](Tape& t, std::size_t self) {
    t.grad_mut(zi).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w)) +=
        t.grad(self).mat();
  });
}

namespace {

template <typename Fwd, typename Bwd>
Var elementwise2(const Var& a, const Var& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(ov[i], bv[i]);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi, bwd](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto av = t.value(ai).data();
    const auto bv2 = t.value(bi).data();
    const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [da, db] = bwd(av[i], bv2[i]);
      if (ga) t.grad_mut(ai)[i] += g[i] * da;
      if (gb) t.grad_mut(bi)[i] += g[i] * db;
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(const Var& a, const Var& b) {
  return elementwise2(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Var affine(const Var& a, double scale, double shift) {
  Tensor out = a.value();
  for (double& v : out.data()) v = scale * v + shift;
  const std::size_t ai = a.id();
  return a.tape().record(std::move(out), {ai}, [ai, scale](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    auto ga = t.grad_mut(ai).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ai = a.id();
  return a.tape().record(Tensor::scalar(s), {ai}, [ai](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_mut(ai).data()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw UndefinedValueError("mean of an empty tensor");
  return affine(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(const Var& a) {
  require_matrix(a, "row_sum");
  const std::size_t rows = a.value().rows();
  Tensor out({rows});
  Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(rows)) =
      a.value().mat().rowwise().sum();
  const std::size_t ai = a.id();
  return a.tape().record(std::move(out), {ai}, [ai](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (double& v : ga.row(r)) v += g[r];
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const Tensor& z = logits.value();
  const std::size_t k = z.cols();
  return masked_cross_entropy(logits, labels, std::vector<bool>(k, true));
}

Var masked_cross_entropy(const Var& logits, std::span<const int> labels,
                         const std::vector<bool>& mask) {
  require_matrix(logits, "cross_entropy");
  const Tensor& z = logits.value();
  const std::size_t rows = z.rows(), k = z.cols();
  if (mask.size() != k) throw DimensionError("cross_entropy: mask width mismatch");
  check_labels(labels, rows, k, "cross_entropy");
  std::vector<int> y(labels.begin(), labels.end());
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[static_cast<std::size_t>(y[r])]) {
      throw LabelError("cross_entropy: label " + std::to_string(y[r]) + " at row " +
                       std::to_string(r) + " is not in the present class set");
    }
    const auto row = z.row(r);
    out[r] = row_lse(row, &mask) - row[static_cast<std::size_t>(y[r])];
  }
  const std::size_t zi = logits.id();
  return logits.tape().record(std::move(out), {zi}, [zi, y, mask](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& zv = t.value(zi);
    Tensor& gz = t.grad_mut(zi);
    for (std::size_t r = 0; r < zv.rows(); ++r) {
      const auto row = zv.row(r);
      const double lse = row_lse(row, &mask);
      auto grow = gz.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (!mask[j]) continue;
        const double p = std::exp(row[j] - lse);
        grow[j] += g[r] * (p - (static_cast<int>(j) == y[r] ? 1.0 : 0.0));
      }
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  require_matrix(logits, "bce_with_logits");
  const Tensor& z = logits.value();
  if (!z.same_shape(targets)) {
    throw DimensionError("bce_with_logits: targets " + shape_string(targets.shape()) +
                         " vs logits " + shape_string(z.shape()));
  }
  for (double t : targets.data()) {
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("bce_with_logits: target outside [0, 1]");
  }
  const std::size_t rows = z.rows(), k = z.cols();
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const auto zr = z.row(r);
    const auto tr = targets.row(r);
    for (std::size_t j = 0; j < k; ++j) s += softplus(zr[j]) - zr[j] * tr[j];
    out[r] = s / static_cast<double>(k);
  }
  const std::size_t zi = logits.id();
  return logits.tape().record(std::move(out), {zi}, [zi, targets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& zv = t.value(zi);
    Tensor& gz = t.grad_mut(zi);
    const double inv_k = 1.0 / static_cast<double>(zv.cols());
    for (std::size_t r = 0; r < zv.rows(); ++r) {
      const auto zr = zv.row(r);
      const auto tr = targets.row(r);
      auto gr = gz.row(r);
      for (std::size_t j = 0; j < zr.size(); ++j) gr[j] += g[r] * (sigmoid(zr[j]) - tr[j]) * inv_k;
    }
  });
}

Var kl_divergence(const Var& target_logits, const Var& pred_logits) {
  require_matrix(pred_logits, "kl_divergence");
  require_same_shape(target_logits, pred_logits, "kl_divergence");
  const Tensor& a = target_logits.value();
  const Tensor& b = pred_logits.value();
  const std::size_t rows = a.rows();
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ar = a.row(r), br = b.row(r);
    const double la = row_lse(ar, nullptr), lb = row_lse(br, nullptr);
    double kl = 0.0;
    for (std::size_t j = 0; j < ar.size(); ++j) {
      const double logp = ar[j] - la, logq = br[j] - lb;
      kl += std::exp(logp) * (logp - logq);
    }
    // Rounding can leave a tiny negative value for identical distributions.
    out[r] = std::max(kl, 0.0);
  }
  const std::size_t ai = target_logits.id(), bi = pred_logits.id();
  return pred_logits.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
    for (std::size_t r = 0; r < av.rows(); ++r) {
      const auto ar = av.row(r), br = bv.row(r);
      const double la = row_lse(ar, nullptr), lb = row_lse(br, nullptr);
      double kl = 0.0;
      for (std::size_t j = 0; j < ar.size(); ++j) {
        const double logp = ar[j] - la, logq = br[j] - lb;
        kl += std::exp(logp) * (logp - logq);
      }
      for (std::size_t j = 0; j < ar.size(); ++j) {
        const double logp = ar[j] - la, logq = br[j] - lb;
        const double p = std::exp(logp), q = std::exp(logq);
        if (gb) t.grad_mut(bi).row(r)[j] += g[r] * (q - p);
        if (ga) t.grad_mut(ai).row(r)[j] += g[r] * p * ((logp - logq) - kl);
      }
    }
  });
}

Var squared_error(const Var& a, const Var& b) {
  require_matrix(a, "squared_error");
  require_same_shape(a, b, "squared_error");
  const std::size_t rows = a.value().rows(), k = a.value().cols();
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ar = a.value().row(r), br = b.value().row(r);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (ar[j] - br[j]) * (ar[j] - br[j]);
    out[r] = s / static_cast<double>(k);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    const double scale = 2.0 / static_cast<double>(av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
      for (std::size_t j = 0; j < av.cols(); ++j) {
        const double d = scale * g[r] * (av(r, j) - bv(r, j));
        if (t.requires_grad(ai)) t.grad_mut(ai)(r, j) += d;
        if (t.requires_grad(bi)) t.grad_mut(bi)(r, j) -= d;
      }
    }
  });
}

Var true_class_prob(const Var& logits, std::span<const int> labels) {
  require_matrix(logits, "true_class_prob");
  const Tensor& z = logits.value();
  check_labels(labels, z.rows(), z.cols(), "true_class_prob");
  std::vector<int> y(labels.begin(), labels.end());
  Tensor out({z.rows()});
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    out[r] = std::exp(row[static_cast<std::size_t>(y[r])] - row_lse(row, nullptr));
  }
  const std::size_t zi = logits.id();
  return logits.tape().record(std::move(out), {zi}, [zi, y](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& zv = t.value(zi);
    Tensor& gz = t.grad_mut(zi);
    for (std::size_t r = 0; r < zv.rows(); ++r) {
      const auto row = zv.row(r);
      const double lse = row_lse(row, nullptr);
      const double py = std::exp(row[static_cast<std::size_t>(y[r])] - lse);
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double pj = std::exp(row[j] - lse);
        gz.row(r)[j] += g[r] * py * ((static_cast<int>(j) == y[r] ? 1.0 : 0.0) - pj);
      }
    }
  });
}

}  // namespace arcil::ad
