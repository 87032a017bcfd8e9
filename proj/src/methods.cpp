#include "arcil/methods.hpp"

#include "arcil/error.hpp"
#include "arcil/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace arcil {

namespace {

struct MethodEntry {
  MethodKind kind;
  const char* name;
  MethodFamily family;
};

constexpr MethodEntry kMethods[] = {
    {MethodKind::kPgdAt, "pgd-at", MethodFamily::kAdversarialTraining},
    {MethodKind::kTrades, "trades", MethodFamily::kAdversarialTraining},
    {MethodKind::kMart, "mart", MethodFamily::kAdversarialTraining},
    {MethodKind::kIArd, "i-ard", MethodFamily::kAdversarialDistillation},
    {MethodKind::kIRslad, "i-rslad", MethodFamily::kAdversarialDistillation},
    {MethodKind::kIAdaad, "i-adaad", MethodFamily::kAdversarialDistillation},
    {MethodKind::kRLwf, "r-lwf", MethodFamily::kNonRehearsal},
    {MethodKind::kRLwfMc, "r-lwf-mc", MethodFamily::kNonRehearsal},
    {MethodKind::kREwcOn, "r-ewc-on", MethodFamily::kNonRehearsal},
    {MethodKind::kRSi, "r-si", MethodFamily::kNonRehearsal},
    {MethodKind::kREr, "r-er", MethodFamily::kRehearsal},
    {MethodKind::kRErAce, "r-er-ace", MethodFamily::kRehearsal},
    {MethodKind::kRDer, "r-der", MethodFamily::kRehearsal},
    {MethodKind::kRDerPlusPlus, "r-der++", MethodFamily::kRehearsal},
    {MethodKind::kRIcarl, "r-icarl", MethodFamily::kRehearsal},
    {MethodKind::kFlair, "flair", MethodFamily::kFlair},
    {MethodKind::kFlairPlus, "flair+", MethodFamily::kFlair},
};

const MethodEntry& entry(MethodKind kind) {
  for (const auto& e : kMethods) {
    if (e.kind == kind) return e;
  }
  throw ArgumentError("unknown method kind");
}

}  // namespace

std::string method_name(MethodKind kind) { return entry(kind).name; }

MethodKind parse_method(const std::string& name) {
  for (const auto& e : kMethods) {
    if (name == e.name) return e.kind;
  }
  throw ConfigError("unknown method '" + name + "'");
}

MethodFamily method_family(MethodKind kind) { return entry(kind).family; }

std::vector<MethodKind> all_methods() {
  std::vector<MethodKind> out;
  for (const auto& e : kMethods) out.push_back(e.kind);
  return out;
}

std::string buffer_kind_name(BufferKind kind) {
  switch (kind) {
    case BufferKind::kNone: return "none";
    case BufferKind::kHerding: return "herding";
    case BufferKind::kReservoir: return "reservoir";
    case BufferKind::kReservoirWithLogits: return "reservoir-with-logits";
  }
  return "none";
}

BufferKind parse_buffer_kind(const std::string& name) {
  if (name == "none") return BufferKind::kNone;
  if (name == "herding") return BufferKind::kHerding;
  if (name == "reservoir") return BufferKind::kReservoir;
  if (name == "reservoir-with-logits") return BufferKind::kReservoirWithLogits;
  throw ConfigError("unknown buffer kind '" + name + "'");
}

std::string fpd_metric_name(FpdMetric m) { return m == FpdMetric::kKl ? "kl" : "mse"; }

FpdMetric parse_fpd_metric(const std::string& name) {
  if (name == "kl") return FpdMetric::kKl;
  if (name == "mse") return FpdMetric::kMse;
  throw ConfigError("unknown fpd metric '" + name + "'");
}

bool uses_teacher(MethodKind kind) {
  switch (method_family(kind)) {
    case MethodFamily::kAdversarialTraining: return false;
    case MethodFamily::kAdversarialDistillation:
    case MethodFamily::kFlair: return true;
    case MethodFamily::kNonRehearsal: return kind == MethodKind::kRLwf || kind == MethodKind::kRLwfMc;
    case MethodFamily::kRehearsal: return kind == MethodKind::kRIcarl;
  }
  return false;
}

std::vector<BufferKind> allowed_buffers(MethodKind kind) {
  switch (kind) {
    case MethodKind::kREr:
    case MethodKind::kRErAce: return {BufferKind::kReservoir, BufferKind::kReservoirWithLogits};
    case MethodKind::kRDer:
    case MethodKind::kRDerPlusPlus: return {BufferKind::kReservoirWithLogits};
    case MethodKind::kRIcarl: return {BufferKind::kHerding};
    case MethodKind::kFlair:
    case MethodKind::kFlairPlus: return {BufferKind::kNone, BufferKind::kHerding};
    default: return {BufferKind::kNone};
  }
}

void MethodConfig::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("alpha must be a finite nonnegative real");
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be a finite nonnegative real");
  if (!(ewc_decay >= 0.0 && ewc_decay <= 1.0)) throw ConfigError("ewc decay must lie in [0, 1]");
  if (!(si_damping > 0.0) || !std::isfinite(si_damping)) throw ConfigError("si damping must be positive");
  const auto ok = allowed_buffers(kind);
  if (std::find(ok.begin(), ok.end(), buffer_kind) == ok.end()) {
    throw ConfigError("method '" + method_name(kind) + "' cannot use buffer kind '" + buffer_kind_name(buffer_kind) +
                      "'");
  }
  attack.validate();
}

MethodConfig default_method_config(MethodKind kind) {
  MethodConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case MethodKind::kTrades:
    case MethodKind::kMart: cfg.alpha = 6.0; break;
    case MethodKind::kIArd:
    case MethodKind::kIRslad:
    case MethodKind::kIAdaad:
      cfg.alpha = 1.0;
      cfg.beta = 1.0;
      break;
    case MethodKind::kRLwf: cfg.alpha = 1.0; break;
    case MethodKind::kREwcOn:
    case MethodKind::kRSi: cfg.alpha = 1.0; break;
    case MethodKind::kRDer: cfg.alpha = 0.3; break;
    case MethodKind::kRDerPlusPlus:
      cfg.alpha = 0.1;
      cfg.beta = 0.5;
      break;
    case MethodKind::kFlair:
    case MethodKind::kFlairPlus:
      cfg.alpha = 0.5;
      cfg.beta = 2.0;
      break;
    default: break;
  }
  cfg.buffer_kind = allowed_buffers(kind).front();
  cfg.augment = kind == MethodKind::kFlairPlus;
  return cfg;
}

// ---- regularizer state ----------------------------------------------------------

ParamView remap_params(const ParamView& from, const ParamView& like) {
  ParamView out = like.zeros_like();
  if (from.layout.size() != like.layout.size()) throw DimensionError("parameter views have different depths");
  for (std::size_t l = 0; l < like.layout.size(); ++l) {
    const auto& fs = from.layout[l];
    const auto& ts = like.layout[l];
    const std::size_t rows = std::min(fs.out, ts.out);
    const std::size_t cols = std::min(fs.in, ts.in);
    auto src_w = from.weight(l);
    auto dst_w = out.weight(l);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) dst_w[r * ts.in + c] = src_w[r * fs.in + c];
    }
    auto src_b = from.bias(l);
    auto dst_b = out.bias(l);
    for (std::size_t r = 0; r < rows; ++r) dst_b[r] = src_b[r];
  }
  return out;
}

void begin_task(RegState& reg, const Network& student) {
  const ParamView cur = student.params();
  if (!reg.initialized) {
    reg.fisher = cur.zeros_like();
    reg.omega = cur.zeros_like();
    reg.initialized = true;
  } else {
    reg.fisher = remap_params(reg.fisher, cur);
    reg.omega = remap_params(reg.omega, cur);
  }
  reg.anchor = cur;
  reg.path = cur.zeros_like();
}

ad::Var reg_penalty(const StudentGraph& s, const ParamView& weights, const ParamView& anchor) {
  const ParamView cur = s.net.params();
  if (!weights.same_layout(cur) || !anchor.same_layout(cur)) {
    throw ContractError("regularizer state layout does not match the student");
  }
  ad::Var total = s.tape.constant(Tensor::scalar(0.0));
  for (std::size_t l = 0; l < cur.layout.size(); ++l) {
    const auto& slot = cur.layout[l];
    auto term = [&](const ad::Var& p, std::span<const double> w, std::span<const double> a,
                    std::vector<std::size_t> shape) {
      const ad::Var d = ad::sub(p, s.tape.constant(Tensor(shape, std::vector<double>(a.begin(), a.end()))));
      const ad::Var wd = ad::mul(s.tape.constant(Tensor(shape, std::vector<double>(w.begin(), w.end()))), ad::mul(d, d));
      return ad::sum(wd);
    };
    total = ad::add(total, term(s.params.weights[l], weights.weight(l), anchor.weight(l), {slot.out, slot.in}));
    total = ad::add(total, term(s.params.biases[l], weights.bias(l), anchor.bias(l), {slot.out}));
  }
  return total;
}

void update_ewc(RegState& reg, const Network& student, const Tensor& x_adv, std::span<const int> labels,
                double decay) {
  if (!reg.initialized) begin_task(reg, student);
  const ParamView cur = student.params();
  if (!reg.fisher.same_layout(cur)) reg.fisher = remap_params(reg.fisher, cur);
  if (labels.size() != x_adv.rows()) throw DimensionError("ewc update: label count does not match inputs");
  std::vector<double> stat(cur.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t idx = i;
    const Tensor xi = x_adv.gather_rows(std::span<const std::size_t>(&idx, 1));
    const int yi = labels[i];
    const PerExampleLoss loss = [yi](ad::Tape&, const ad::Var& logits) {
      return ad::softmax_cross_entropy(logits, std::span<const int>(&yi, 1));
    };
    const ParamGrad g = grad_params(student, loss, xi);
    for (std::size_t k = 0; k < stat.size(); ++k) stat[k] += g.grad.values[k] * g.grad.values[k];
  }
  const double n = labels.empty() ? 1.0 : static_cast<double>(labels.size());
  for (std::size_t k = 0; k < stat.size(); ++k) {
    reg.fisher.values[k] = decay * reg.fisher.values[k] + stat[k] / n;
  }
}

void si_step(RegState& reg, const ParamView& grad, const ParamView& before, const ParamView& after) {
  if (!grad.same_layout(before) || !before.same_layout(after)) throw DimensionError("si step: layout mismatch");
  if (!reg.path.same_layout(before)) reg.path = remap_params(reg.path, before);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    reg.path.values[k] -= grad.values[k] * (after.values[k] - before.values[k]);
  }
}

void si_consolidate(RegState& reg, const Network& student, double damping) {
  const ParamView cur = student.params();
  if (!reg.initialized) begin_task(reg, student);
  if (!reg.omega.same_layout(cur)) reg.omega = remap_params(reg.omega, cur);
  if (!reg.anchor.same_layout(cur)) reg.anchor = remap_params(reg.anchor, cur);
  if (!reg.path.same_layout(cur)) reg.path = remap_params(reg.path, cur);
  for (std::size_t k = 0; k < cur.size(); ++k) {
    const double moved = cur.values[k] - reg.anchor.values[k];
    reg.omega.values[k] += std::max(reg.path.values[k], 0.0) / (moved * moved + damping);
  }
  reg.path = cur.zeros_like();
}

// ---- loss builders ------------------------------------------------------------

namespace {

void require_adv(const Batch& batch, const Tensor& x_adv) {
  if (x_adv.rank() != 2 || x_adv.rows() != batch.size() || x_adv.cols() != batch.x.cols() || batch.size() == 0) {
    throw ContractError("adversarial batch missing or shaped " + shape_string(x_adv.shape()) + " for a batch of " +
                        shape_string(batch.x.shape()));
  }
}

losses::ColumnRange old_columns(const Network& student) {
  return losses::task_columns(student.head_boundaries(), 0, student.n_tasks() - 1);
}

losses::ColumnRange new_columns(const Network& student) {
  return losses::task_columns(student.head_boundaries(), student.n_tasks() - 1, student.n_tasks());
}

// A teacher only applies once the student has an old slice; its width must
// match that slice.
bool has_teacher(const Network& student, const Network* teacher) {
  if (teacher == nullptr) return false;
  if (student.n_tasks() < 2 || teacher->n_classes() != old_columns(student).width()) {
    throw ContractError("teacher width " + std::to_string(teacher->n_classes()) +
                        " does not match the student's old slice");
  }
  return true;
}

ad::Var old_slice(const StudentGraph& s, const ad::Var& logits) {
  const auto cols = old_columns(s.net);
  return ad::slice_cols(logits, cols.begin, cols.end);
}

ad::Var new_slice_bce(const StudentGraph& s, const ad::Var& logits, std::span<const int> labels) {
  const auto cols = new_columns(s.net);
  return losses::bce_multilabel(ad::slice_cols(logits, cols.begin, cols.end),
                                losses::one_hot_slice(labels, cols.begin, cols.width()));
}

ad::Var teacher_logits(const StudentGraph& s, const Network& teacher, const Tensor& x) {
  return s.tape.constant(teacher.forward(x));
}

ad::Var plus(const ad::Var& base, double coef, const ad::Var& term) { return ad::add(base, ad::affine(term, coef)); }

// Stored logits predate later head growth, so each row is matched on its own
// leading columns and averaged over its own width.
ad::Var stored_logit_mse(const StudentGraph& s, const ad::Var& logits, const BufferBatch& buffer) {
  const std::size_t n = buffer.size();
  const std::size_t w = buffer.z.cols();
  const ad::Var head = ad::slice_cols(logits, 0, w);
  const ad::Var target = s.tape.constant(buffer.z);
  const bool ragged =
      !buffer.z_width.empty() && std::any_of(buffer.z_width.begin(), buffer.z_width.end(), [&](std::size_t k) { return k != w; });
  if (!ragged) return losses::mse(head, target);
  if (buffer.z_width.size() != n) throw ContractError("stored logit widths do not match the buffer batch");
  Tensor mask({n, w});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t k = buffer.z_width[r];
    if (k == 0 || k > w) throw ContractError("stored logit width out of range");
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * static_cast<double>(n));
    for (std::size_t c = 0; c < k; ++c) mask(r, c) = scale;
  }
  const ad::Var diff = ad::mul(ad::sub(head, target), s.tape.constant(std::move(mask)));
  return ad::sum(ad::mul(diff, diff));
}

}  // namespace

ad::Var loss_at_family(const MethodConfig& cfg, const StudentGraph& s, const Batch& batch, const Tensor& x_adv) {
  require_adv(batch, x_adv);
  switch (cfg.kind) {
    case MethodKind::kPgdAt: return losses::ce(s.logits(x_adv), batch.y);
    case MethodKind::kTrades: {
      const ad::Var clean = s.logits(batch.x);
      return plus(losses::ce(clean, batch.y), cfg.alpha, losses::kl_div(clean, s.logits(x_adv)));
    }
    case MethodKind::kMart: {
      const ad::Var clean = s.logits(batch.x);
      const ad::Var adv = s.logits(x_adv);
      const ad::Var bce = losses::bce_multilabel(adv, losses::one_hot_slice(batch.y, 0, s.net.n_classes()));
      const ad::Var weight = ad::affine(ad::true_class_prob(clean, batch.y), -1.0, 1.0);
      return plus(bce, cfg.alpha, ad::mean(ad::mul(weight, ad::kl_divergence(clean, adv))));
    }
    default: throw ArgumentError("'" + method_name(cfg.kind) + "' is not an adversarial-training method");
  }
}

ad::Var loss_iad_family(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher, const Batch& batch,
                        const Tensor& x_adv) {
  require_adv(batch, x_adv);
  if (method_family(cfg.kind) != MethodFamily::kAdversarialDistillation) {
    throw ArgumentError("'" + method_name(cfg.kind) + "' is not an adversarial-distillation method");
  }
  const ad::Var adv = s.logits(x_adv);
  const ad::Var base = losses::ce(adv, batch.y);
  if (!has_teacher(s.net, teacher)) return base;
  const ad::Var t_clean = teacher_logits(s, *teacher, batch.x);
  const ad::Var adv_term = losses::kl_div(
      cfg.kind == MethodKind::kIAdaad ? teacher_logits(s, *teacher, x_adv) : t_clean, old_slice(s, adv));
  if (cfg.kind == MethodKind::kIArd) return plus(base, cfg.beta, adv_term);
  const ad::Var clean_term = losses::kl_div(t_clean, old_slice(s, s.logits(batch.x)));
  const ad::Var mix = ad::add(ad::affine(adv_term, cfg.alpha), ad::affine(clean_term, 1.0 - cfg.alpha));
  return plus(base, cfg.beta, mix);
}

ad::Var loss_rcil_nonrehearsal(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher,
                               const RegState* reg, const Batch& batch, const Tensor& x_adv) {
  require_adv(batch, x_adv);
  switch (cfg.kind) {
    case MethodKind::kREwcOn:
    case MethodKind::kRSi: {
      if (reg == nullptr || !reg->initialized) {
        throw ContractError("'" + method_name(cfg.kind) + "' needs an initialized regularizer state");
      }
      const ad::Var base = losses::ce(s.logits(x_adv), batch.y);
      const ParamView& w = cfg.kind == MethodKind::kREwcOn ? reg->fisher : reg->omega;
      return plus(base, cfg.alpha, reg_penalty(s, w, reg->anchor));
    }
    case MethodKind::kRLwf: {
      const ad::Var base = losses::ce(s.logits(x_adv), batch.y);
      if (!has_teacher(s.net, teacher)) return base;
      return plus(base, cfg.alpha,
                  losses::kl_div(teacher_logits(s, *teacher, batch.x), old_slice(s, s.logits(batch.x))));
    }
    case MethodKind::kRLwfMc: {
      const ad::Var base = new_slice_bce(s, s.logits(x_adv), batch.y);
      if (!has_teacher(s.net, teacher)) return base;
      return ad::add(base, losses::bce_multilabel(old_slice(s, s.logits(batch.x)),
                                                  ad::sigmoid(teacher->forward(batch.x))));
    }
    default: throw ArgumentError("'" + method_name(cfg.kind) + "' is not a non-rehearsal method");
  }
}

ad::Var loss_rcil_rehearsal(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher,
                            const Batch& batch, const BufferBatch& buffer, const Tensor& x_adv,
                            const Tensor& x_adv_buffer) {
  require_adv(batch, x_adv);
  if (method_family(cfg.kind) != MethodFamily::kRehearsal) {
    throw ArgumentError("'" + method_name(cfg.kind) + "' is not a rehearsal method");
  }
  if (cfg.kind == MethodKind::kRIcarl) {
    if (cfg.buffer_kind != BufferKind::kHerding) throw ConfigError("r-icarl needs a herding buffer");
    const ad::Var base = new_slice_bce(s, s.logits(x_adv), batch.y);
    if (!has_teacher(s.net, teacher)) return base;
    return ad::add(base,
                   losses::bce_multilabel(old_slice(s, s.logits(batch.x)), ad::sigmoid(teacher->forward(batch.x))));
  }
  const bool needs_logits = cfg.kind == MethodKind::kRDer || cfg.kind == MethodKind::kRDerPlusPlus;
  if (needs_logits ? cfg.buffer_kind != BufferKind::kReservoirWithLogits
                   : cfg.buffer_kind != BufferKind::kReservoir && cfg.buffer_kind != BufferKind::kReservoirWithLogits) {
    throw ConfigError("'" + method_name(cfg.kind) + "' cannot use buffer kind '" + buffer_kind_name(cfg.buffer_kind) +
                      "'");
  }

  const ad::Var adv = s.logits(x_adv);
  ad::Var base;
  if (cfg.kind == MethodKind::kRErAce) {
    base = losses::ace(adv, batch.y, std::set<int>(batch.y.begin(), batch.y.end()));
  } else {
    base = losses::ce(adv, batch.y);
  }
  if (buffer.empty()) return base;
  if (x_adv_buffer.rank() != 2 || x_adv_buffer.rows() != buffer.size()) {
    throw ContractError("adversarial buffer batch missing or misshaped");
  }
  const ad::Var buf = s.logits(x_adv_buffer);
  switch (cfg.kind) {
    case MethodKind::kREr:
    case MethodKind::kRErAce: return ad::add(base, losses::ce(buf, buffer.y));
    case MethodKind::kRDer:
    case MethodKind::kRDerPlusPlus: {
      if (buffer.z.rows() != buffer.size() || buffer.z.cols() == 0 || buffer.z.cols() > s.net.n_classes()) {
        throw ContractError("buffer batch carries no usable stored logits");
      }
      const ad::Var distill = stored_logit_mse(s, buf, buffer);
      const ad::Var out = plus(base, cfg.alpha, distill);
      if (cfg.kind == MethodKind::kRDer) return out;
      return plus(out, cfg.beta, losses::ce(buf, buffer.y));
    }
    default: break;
  }
  throw ArgumentError("unhandled rehearsal method");
}

ad::Var loss_adsl(const StudentGraph& s, const Network* teacher, const Tensor& x_adv, std::span<const int> labels,
                  double alpha) {
  const ad::Var adv = s.logits(x_adv);
  const ad::Var base = new_slice_bce(s, adv, labels);
  if (!has_teacher(s.net, teacher)) return base;
  return plus(base, alpha, losses::bce_multilabel(old_slice(s, adv), ad::sigmoid(teacher->forward(x_adv))));
}

ad::Var loss_fpd(const StudentGraph& s, const Network* teacher, const Tensor& x, const Tensor& x_adv,
                 FpdMetric metric) {
  if (!has_teacher(s.net, teacher)) throw ContractError("flatness-preserving distillation needs a teacher");
  if (!x.same_shape(x_adv)) throw ContractError("clean and adversarial batches differ in shape");
  const ad::Var d_student = ad::sub(old_slice(s, s.logits(x_adv)), old_slice(s, s.logits(x)));
  Tensor d_teacher = teacher->forward(x_adv);
  const Tensor t_clean = teacher->forward(x);
  for (std::size_t i = 0; i < d_teacher.size(); ++i) d_teacher[i] -= t_clean[i];
  if (metric == FpdMetric::kMse) return losses::mse(d_student, s.tape.constant(d_teacher));
  return losses::kl_div(s.tape.constant(d_teacher), d_student);
}

ad::Var loss_flair(const StudentGraph& s, const Network* teacher, const Tensor& x, const Tensor& x_adv,
                   std::span<const int> labels, double alpha, double beta, FpdMetric metric) {
  const ad::Var adsl = loss_adsl(s, teacher, x_adv, labels, alpha);
  if (!has_teacher(s.net, teacher)) return adsl;
  return plus(adsl, beta, loss_fpd(s, teacher, x, x_adv, metric));
}

ad::Var method_loss(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher, const RegState* reg,
                    const Batch& batch, const Tensor& x_adv, const BufferBatch& buffer, const Tensor& x_adv_buffer) {
  switch (method_family(cfg.kind)) {
    case MethodFamily::kAdversarialTraining: return loss_at_family(cfg, s, batch, x_adv);
    case MethodFamily::kAdversarialDistillation: return loss_iad_family(cfg, s, teacher, batch, x_adv);
    case MethodFamily::kNonRehearsal: return loss_rcil_nonrehearsal(cfg, s, teacher, reg, batch, x_adv);
    case MethodFamily::kRehearsal: return loss_rcil_rehearsal(cfg, s, teacher, batch, buffer, x_adv, x_adv_buffer);
    case MethodFamily::kFlair:
      require_adv(batch, x_adv);
      return loss_flair(s, teacher, batch.x, x_adv, batch.y, cfg.alpha, cfg.beta, cfg.fpd_metric);
  }
  throw ArgumentError("unhandled method family");
}

}  // namespace arcil
