#include "arcil/attacks.hpp"

#include "arcil/error.hpp"
#include "arcil/losses.hpp"
#include "arcil/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace arcil {

std::string objective_name(AttackObjective o) {
  switch (o) {
    case AttackObjective::kCe: return "ce";
    case AttackObjective::kKlVsClean: return "kl-vs-clean";
    case AttackObjective::kBceNewSlice: return "bce-newslice";
  }
  return "ce";
}

AttackObjective parse_objective(const std::string& name) {
  if (name == "ce") return AttackObjective::kCe;
  if (name == "kl-vs-clean") return AttackObjective::kKlVsClean;
  if (name == "bce-newslice") return AttackObjective::kBceNewSlice;
  throw ConfigError("unknown attack objective '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be finite and >= 0");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ConfigError("attack step_size must be finite and >= 0");
  if (n_restarts == 0) throw ConfigError("attack n_restarts must be positive");
  if (clamp_range && !(clamp_range->first < clamp_range->second)) {
    throw ConfigError("attack clamp range needs lo < hi");
  }
}

namespace {

double parse_plain(const std::string& s, const std::string& whole) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("not a real literal: '" + whole + "'");
  return v;
}

}  // namespace

double parse_real_literal(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (c != ' ' && c != '\t') s += c;
  }
  if (s.empty()) throw ConfigError("empty real literal");
  const auto slash = s.find('/');
  if (slash == std::string::npos) return parse_plain(s, text);
  const double num = parse_plain(s.substr(0, slash), text);
  const double den = parse_plain(s.substr(slash + 1), text);
  if (den == 0.0) throw ConfigError("zero denominator in '" + text + "'");
  return num / den;
}

namespace {

struct ObjectiveEval {
  Tensor values;  // [batch]
  Tensor grad;    // [batch, d], per-example gradients
};

ObjectiveEval evaluate(const Network& model, const Tensor& x_eval, std::span<const int> labels,
                       AttackObjective objective, const Tensor* clean_logits, bool with_grad) {
  ad::Tape tape;
  const auto bound = model.bind(tape, false);
  const ad::Var xv = with_grad ? tape.variable(x_eval) : tape.constant(x_eval);
  const ad::Var logits = model.forward(bound, xv);
  ad::Var per;
  switch (objective) {
    case AttackObjective::kCe:
      per = ad::softmax_cross_entropy(logits, labels);
      break;
    case AttackObjective::kKlVsClean:
      per = ad::kl_divergence(tape.constant(*clean_logits), logits);
      break;
    case AttackObjective::kBceNewSlice: {
      const auto cols = losses::task_columns(model.head_boundaries(), model.n_tasks() - 1, model.n_tasks());
      per = ad::bce_with_logits(ad::slice_cols(logits, cols.begin, cols.end),
                                losses::one_hot_slice(labels, cols.begin, cols.width()));
      break;
    }
  }
  ObjectiveEval out{per.value(), Tensor()};
  if (with_grad) {
    if (per.requires_grad()) {
      tape.backward(ad::sum(per));
      out.grad = xv.grad();
    } else {
      out.grad = Tensor(x_eval.shape(), 0.0);
    }
  }
  return out;
}

void check_objective(const Network& model, AttackObjective objective) {
  if (objective == AttackObjective::kBceNewSlice && model.n_tasks() < 2) {
    throw ConfigError("bce-newslice objective needs a model with at least two task heads");
  }
}

double project(double v, double center, const AttackConfig& cfg) {
  v = std::clamp(v, center - cfg.epsilon, center + cfg.epsilon);
  if (cfg.clamp_range) v = std::clamp(v, cfg.clamp_range->first, cfg.clamp_range->second);
  return v;
}

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// Row-wise keep-the-best update: rows of `cand` whose value strictly exceeds
// the incumbent replace it.
void keep_best(Tensor& best, Tensor& best_vals, const Tensor& cand, const Tensor& cand_vals) {
  for (std::size_t r = 0; r < best_vals.size(); ++r) {
    if (cand_vals[r] > best_vals[r]) {
      best_vals[r] = cand_vals[r];
      auto src = cand.row(r);
      std::copy(src.begin(), src.end(), best.row(r).begin());
    }
  }
}

}  // namespace

Tensor attack_objective(const Network& model, const Tensor& x_eval, const Tensor& x_clean,
                        std::span<const int> labels, AttackObjective objective) {
  check_objective(model, objective);
  model.check_input(x_eval);
  Tensor clean;
  if (objective == AttackObjective::kKlVsClean) clean = model.forward(x_clean);
  return evaluate(model, x_eval, labels, objective, &clean, false).values;
}

Tensor pgd(const Network& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  check_objective(model, cfg.objective);
  model.check_input(x);
  if (labels.size() != x.rows()) throw DimensionError("pgd: label count does not match batch");
  if (!x.all_finite()) throw NumericError("pgd: non-finite input");
  if (cfg.epsilon == 0.0) return x;

  Tensor clean;
  if (cfg.objective == AttackObjective::kKlVsClean) clean = model.forward(x);

  Tensor best;
  Tensor best_vals;
  for (std::size_t restart = 0; restart < cfg.n_restarts; ++restart) {
    Rng rng(derive_seed(cfg.seed, Purpose::kRestart, {restart}));
    Tensor cur = x;
    if (cfg.random_start) {
      for (std::size_t i = 0; i < cur.size(); ++i) {
        cur[i] = project(x[i] + uniform(rng, -cfg.epsilon, cfg.epsilon), x[i], cfg);
      }
    } else {
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = project(cur[i], x[i], cfg);
    }
    Tensor run_best = cur;
    Tensor run_vals;
    for (std::size_t step = 0; step < cfg.n_steps; ++step) {
      ObjectiveEval ev = evaluate(model, cur, labels, cfg.objective, &clean, true);
      if (step == 0) {
        run_vals = ev.values;
      } else {
        keep_best(run_best, run_vals, cur, ev.values);
      }
      for (std::size_t i = 0; i < cur.size(); ++i) {
        cur[i] = project(cur[i] + cfg.step_size * sign(ev.grad[i]), x[i], cfg);
      }
    }
    const ObjectiveEval last = evaluate(model, cur, labels, cfg.objective, &clean, false);
    if (cfg.n_steps == 0) {
      run_vals = last.values;
    } else {
      keep_best(run_best, run_vals, cur, last.values);
    }
    if (restart == 0) {
      best = std::move(run_best);
      best_vals = std::move(run_vals);
    } else {
      keep_best(best, best_vals, run_best, run_vals);
    }
  }
  return best;
}

Tensor fgsm(const Network& model, const Tensor& x, std::span<const int> labels, double epsilon,
            AttackObjective objective, std::optional<std::pair<double, double>> clamp_range) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.step_size = epsilon;
  cfg.n_steps = 1;
  cfg.random_start = false;
  cfg.objective = objective;
  cfg.clamp_range = clamp_range;
  return pgd(model, x, labels, cfg);
}

}  // namespace arcil
