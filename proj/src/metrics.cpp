#include "arcil/metrics.hpp"

#include "arcil/error.hpp"
#include "arcil/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace arcil {

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

namespace {

void require_nonempty(const Dataset& data) {
  if (data.empty()) throw UndefinedValueError("accuracy of an empty dataset is undefined");
}

std::vector<bool> correct_rows(const Network& model, const Tensor& x, const std::vector<int>& labels) {
  const auto pred = argmax_rows(model.forward(x));
  std::vector<bool> ok(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ok[i] = pred[i] == labels[i];
  return ok;
}

double percent(const std::vector<bool>& ok) {
  const auto hits = static_cast<double>(std::count(ok.begin(), ok.end(), true));
  return 100.0 * hits / static_cast<double>(ok.size());
}

}  // namespace

double accuracy(const Network& model, const Dataset& data) {
  require_nonempty(data);
  model.check_input(data.inputs);
  return percent(correct_rows(model, data.inputs, data.labels));
}

double robust_accuracy(const Network& model, const Dataset& data, const AttackConfig& attack) {
  require_nonempty(data);
  if (attack.n_steps == 0) throw ConfigError("robust accuracy needs at least one attack step");
  attack.validate();
  std::vector<bool> ok = correct_rows(model, data.inputs, data.labels);
  for (std::size_t r = 0; r < attack.n_restarts; ++r) {
    AttackConfig single = attack;
    single.n_restarts = 1;
    single.seed = derive_seed(attack.seed, Purpose::kRestart, {r});
    const Tensor x_adv = pgd(model, data.inputs, data.labels, single);
    const auto adv_ok = correct_rows(model, x_adv, data.labels);
    for (std::size_t i = 0; i < ok.size(); ++i) ok[i] = ok[i] && adv_ok[i];
  }
  return percent(ok);
}

AttackConfig pgd20_config(double epsilon, std::uint64_t seed, std::optional<std::pair<double, double>> clamp_range) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.step_size = epsilon / 4.0;
  cfg.n_steps = 20;
  cfg.random_start = true;
  cfg.clamp_range = clamp_range;
  cfg.seed = seed;
  return cfg;
}

AttackConfig aa_proxy_config(double epsilon, std::uint64_t seed, std::optional<std::pair<double, double>> clamp_range) {
  AttackConfig cfg = pgd20_config(epsilon, seed, clamp_range);
  cfg.n_restarts = 5;
  return cfg;
}

// ---- accuracy matrix ----------------------------------------------------------

AccuracyMatrix::AccuracyMatrix(std::size_t n_tasks) : n_(n_tasks), ra_(n_tasks * n_tasks), ca_(n_tasks * n_tasks) {}

std::size_t AccuracyMatrix::index(std::size_t i, std::size_t j) const {
  if (i >= n_ || j > i) {
    throw ArgumentError("accuracy matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") outside the lower triangle of " + std::to_string(n_) + " tasks");
  }
  return i * n_ + j;
}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double robust, double clean) {
  const std::size_t k = index(i, j);
  if (ra_[k]) throw ContractError("accuracy matrix entry written twice");
  for (double v : {robust, clean}) {
    if (!(v >= 0.0 && v <= 100.0)) throw ArgumentError("accuracy outside [0, 100]");
  }
  ra_[k] = robust;
  ca_[k] = clean;
}

bool AccuracyMatrix::has(std::size_t i, std::size_t j) const { return ra_[index(i, j)].has_value(); }

double AccuracyMatrix::robust(std::size_t i, std::size_t j) const {
  const auto& v = ra_[index(i, j)];
  if (!v) throw UndefinedValueError("accuracy matrix entry not yet written");
  return *v;
}

double AccuracyMatrix::clean(std::size_t i, std::size_t j) const {
  const auto& v = ca_[index(i, j)];
  if (!v) throw UndefinedValueError("accuracy matrix entry not yet written");
  return *v;
}

double r_bwt(const AccuracyMatrix& m) {
  const std::size_t t = m.n_tasks();
  if (t < 2) throw UndefinedValueError("backward transfer needs at least two tasks");
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < t; ++j) sum += m.robust(t - 1, j) - m.robust(j, j);
  return sum / static_cast<double>(t - 1);
}

// ---- flatness -------------------------------------------------------------------

std::string scalar_def_name(ScalarDef s) { return s == ScalarDef::kCrossEntropy ? "ce" : "max-logit"; }

ScalarDef parse_scalar_def(const std::string& name) {
  if (name == "ce") return ScalarDef::kCrossEntropy;
  if (name == "max-logit") return ScalarDef::kMaxLogit;
  throw ConfigError("unknown flatness scalar '" + name + "'");
}

PerExampleLoss scalar_loss(ScalarDef def, std::span<const int> labels) {
  std::vector<int> y(labels.begin(), labels.end());
  if (def == ScalarDef::kCrossEntropy) {
    return [y](ad::Tape&, const ad::Var& logits) { return ad::softmax_cross_entropy(logits, y); };
  }
  return [](ad::Tape& tape, const ad::Var& logits) {
    const Tensor& v = logits.value();
    Tensor pick(v.shape(), 0.0);
    const auto best = argmax_rows(v);
    for (std::size_t r = 0; r < v.rows(); ++r) pick(r, static_cast<std::size_t>(best[r])) = 1.0;
    return ad::row_sum(ad::mul(logits, tape.constant(std::move(pick))));
  };
}

namespace {

std::vector<std::size_t> flatness_sample(const Dataset& data, const FlatnessOptions& opts) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (opts.full_testset || idx.size() <= opts.subsample) return idx;
  // One stream for every task, so equally sized tasks share sample positions.
  Rng rng(derive_seed(opts.seed, Purpose::kFlatness));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opts.subsample);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor example_grad(const Network& net, const PerExampleLoss& loss, const Tensor& x) {
  return grad_input(net, loss, x).grad;
}

double l2_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

FlatnessReport flatness_forgetting(const std::vector<const Network*>& models, const std::vector<Dataset>& testsets,
                                   const FlatnessOptions& opts) {
  if (models.empty()) throw ArgumentError("flatness needs at least one model");
  if (testsets.size() != models.size()) throw ArgumentError("flatness needs one test set per model");
  const Network& last = *models.back();
  for (const Network* m : models) {
    if (m == nullptr) throw ArgumentError("null model");
    if (m->input_dim() != last.input_dim()) throw DimensionError("flatness models disagree on input_dim");
  }

  FlatnessReport report;
  bool hessian_ok = last.input_dim() <= opts.hessian.cap;
  if (!hessian_ok) {
    report.hf_note = "input_dim " + std::to_string(last.input_dim()) + " exceeds Hessian cap " +
                     std::to_string(opts.hessian.cap);
  }
  const std::size_t earlier = models.size() - 1;
  double gf_sum = 0.0, hf_sum = 0.0;
  for (std::size_t i = 0; i < earlier; ++i) {
    const Dataset& data = testsets[i];
    require_nonempty(data);
    const auto idx = flatness_sample(data, opts);
    double g_task = 0.0, h_task = 0.0;
    for (std::size_t k : idx) {
      const Tensor x = data.inputs.gather_rows(std::span<const std::size_t>(&k, 1));
      const int y = data.labels[k];
      const PerExampleLoss s = scalar_loss(opts.scalar, std::span<const int>(&y, 1));
      g_task += l2_distance(example_grad(last, s, x), example_grad(*models[i], s, x));
      if (hessian_ok) {
        h_task += l2_distance(hessian_input(last, s, x, opts.hessian), hessian_input(*models[i], s, x, opts.hessian));
      }
    }
    const double n = static_cast<double>(idx.size());
    report.gf_per_task.push_back(g_task / n);
    gf_sum += g_task / n;
    if (hessian_ok) {
      report.hf_per_task.emplace_back(h_task / n);
      hf_sum += h_task / n;
    } else {
      report.hf_per_task.emplace_back(std::nullopt);
    }
  }
  if (earlier > 0) {
    report.gf = gf_sum / static_cast<double>(earlier);
    if (hessian_ok) report.hf = hf_sum / static_cast<double>(earlier);
  } else if (hessian_ok) {
    report.hf = 0.0;
  }
  return report;
}

// ---- landscape ------------------------------------------------------------------

LandscapeGrid landscape_grid(const Network& model, const Tensor& x, int y, const AttackConfig& attack, double extent,
                             std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ArgumentError("landscape grid needs n >= 2");
  if (!(extent >= 0.0) || !std::isfinite(extent)) throw ArgumentError("landscape extent must be finite and >= 0");
  const std::size_t d = model.input_dim();
  if (x.size() != d) throw DimensionError("landscape expects a single example");
  const Tensor base = x.reshaped({1, d});

  const Tensor x_adv = pgd(model, base, std::span<const int>(&y, 1), attack);
  std::vector<double> u(d), v(d);
  double norm = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    u[k] = x_adv[k] - base[k];
    norm = std::max(norm, std::abs(u[k]));
  }
  for (double& e : u) e = norm > 0.0 ? e / norm : 0.0;
  Rng rng(derive_seed(seed, Purpose::kLandscape));
  std::bernoulli_distribution coin(0.5);
  for (double& e : v) e = coin(rng) ? 1.0 : -1.0;

  LandscapeGrid grid;
  grid.n = n;
  grid.extent = extent;
  grid.seed = seed;
  const double half = static_cast<double>(n - 1);
  for (std::size_t a = 0; a < n; ++a) {
    grid.offsets.push_back(extent * (2.0 * static_cast<double>(a) - half) / half);
  }
  Tensor points({n * n, d});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      auto row = points.row(a * n + b);
      for (std::size_t k = 0; k < d; ++k) row[k] = base[k] + u[k] * grid.offsets[a] + v[k] * grid.offsets[b];
    }
  }
  const std::vector<int> labels(n * n, y);
  ad::Tape tape;
  grid.values = ad::softmax_cross_entropy(tape.constant(model.forward(points)), labels).value().values();
  return grid;
}

std::string landscape_csv_text(const LandscapeGrid& grid) {
  std::string out;
  char buf[48];
  std::snprintf(buf, sizeof buf, "# extent=%.6g", grid.extent);
  out += buf;
  out += " direction_seed=" + std::to_string(grid.seed) + " n=" + std::to_string(grid.n) + "\n";
  for (std::size_t a = 0; a < grid.n; ++a) {
    for (std::size_t b = 0; b < grid.n; ++b) {
      std::snprintf(buf, sizeof buf, "%s%.6g", b == 0 ? "" : ",", grid.at(a, b));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void save_landscape_csv(const LandscapeGrid& grid, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write '" + path + "'");
  f << landscape_csv_text(grid);
}

}  // namespace arcil
