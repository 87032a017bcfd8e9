#include "arcil/runner.hpp"

#include "arcil/checkpoint.hpp"
#include "arcil/digest.hpp"
#include "arcil/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace arcil {

namespace fs = std::filesystem;

std::string eval_attack_name(EvalAttack a) { return a == EvalAttack::kPgd20 ? "pgd20" : "aa-proxy"; }

EvalAttack parse_eval_attack(const std::string& name) {
  if (name == "pgd20") return EvalAttack::kPgd20;
  if (name == "aa-proxy") return EvalAttack::kAaProxy;
  throw ConfigError("unknown evaluation attack '" + name + "'");
}

double ExperimentConfig::epsilon() const { return parse_real_literal(epsilon_text); }

void ExperimentConfig::validate() const {
  if (dataset == "gaussian") {
    if (n_classes < 2 || input_dim < 2) throw ConfigError("gaussian data needs classes >= 2 and input_dim >= 2");
    if (train_per_class == 0 || test_per_class == 0) throw ConfigError("per-class sample counts must be positive");
  } else if (dataset == "csv") {
    for (const auto& p : {train_path, test_path}) {
      if (p.empty() || !fs::exists(p)) throw ConfigError("dataset file '" + p + "' does not exist");
    }
  } else {
    throw ConfigError("dataset must be 'gaussian' or 'csv', got '" + dataset + "'");
  }
  if (n_tasks == 0) throw ConfigError("tasks must be positive");
  if (dataset == "gaussian") {
    const std::size_t per = classes_per_task ? classes_per_task : n_classes / n_tasks;
    if ((classes_per_task == 0 && n_classes % n_tasks != 0) || per == 0 || per * n_tasks > n_classes) {
      throw ConfigError(std::to_string(n_classes) + " classes do not split into " + std::to_string(n_tasks) + " tasks");
    }
  }
  const double eps = epsilon();
  if (!(eps >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (eval_steps == 0) throw ConfigError("eval_steps must be positive");
  method.validate();
  schedule.validate();
  if (method.buffer_kind != BufferKind::kNone && buffer_capacity == 0) {
    throw ConfigError("buffer kind '" + buffer_kind_name(method.buffer_kind) + "' needs buffer_capacity > 0");
  }
  if (method.augment) {
    for (AugmentOp op : augment_policy.op_pool) {
      if (is_image_op(op) && !image_shape) throw ConfigError("augmentation op '" + augment_op_name(op) + "' needs image_shape");
    }
  }
  if (landscape_n < 2) throw ConfigError("landscape_n must be at least 2");
}

// ---- config parsing -------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

class KeyValues {
 public:
  explicit KeyValues(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
      if (!values_.emplace(key, value).second) {
        throw ConfigError("config line " + std::to_string(no) + ": key '" + key + "' repeated");
      }
    }
  }

  std::optional<std::string> take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = it->second;
    values_.erase(it);
    return v;
  }

  void finish() const {
    if (!values_.empty()) throw ConfigError("unknown config key '" + values_.begin()->first + "'");
  }

 private:
  std::map<std::string, std::string> values_;
};

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a nonnegative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "' needs a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_real_literal(v);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "' needs a real number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' needs true or false, got '" + v + "'");
}

ImageShape to_image_shape(const std::string& v) {
  const auto parts = split_list(v, 'x');
  if (parts.size() != 3) throw ConfigError("image_shape must read HxWxC, got '" + v + "'");
  return {to_size("image_shape", parts[0]), to_size("image_shape", parts[1]), to_size("image_shape", parts[2])};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  KeyValues kv(text);
  ExperimentConfig cfg;
  cfg.source_text = text;
  auto str = [&](const char* key, std::string& out) {
    if (auto v = kv.take(key)) out = *v;
  };
  auto size = [&](const char* key, std::size_t& out) {
    if (auto v = kv.take(key)) out = to_size(key, *v);
  };
  auto real = [&](const char* key, double& out) {
    if (auto v = kv.take(key)) out = to_real(key, *v);
  };
  auto flag = [&](const char* key, bool& out) {
    if (auto v = kv.take(key)) out = to_bool(key, *v);
  };

  str("dataset", cfg.dataset);
  size("classes", cfg.n_classes);
  size("input_dim", cfg.input_dim);
  real("separation", cfg.separation);
  size("train_per_class", cfg.train_per_class);
  size("test_per_class", cfg.test_per_class);
  str("train_path", cfg.train_path);
  str("test_path", cfg.test_path);
  if (auto v = kv.take("image_shape")) cfg.image_shape = to_image_shape(*v);

  size("tasks", cfg.n_tasks);
  size("classes_per_task", cfg.classes_per_task);
  if (auto v = kv.take("class_order")) {
    for (const auto& s : split_list(*v)) cfg.class_order.push_back(static_cast<int>(to_size("class_order", s)));
  }
  if (auto v = kv.take("hidden")) {
    cfg.hidden.clear();
    for (const auto& s : split_list(*v)) cfg.hidden.push_back(to_size("hidden", s));
  }
  if (auto v = kv.take("activation")) {
    try {
      cfg.activation = parse_activation(*v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  const std::string method = kv.take("method").value_or("pgd-at");
  cfg.method = default_method_config(parse_method(method));
  real("alpha", cfg.method.alpha);
  real("beta", cfg.method.beta);
  size("buffer_capacity", cfg.buffer_capacity);
  if (auto v = kv.take("buffer")) {
    cfg.method.buffer_kind = parse_buffer_kind(*v);
  } else if (cfg.buffer_capacity > 0) {
    const auto ok = allowed_buffers(cfg.method.kind);
    if (std::find(ok.begin(), ok.end(), BufferKind::kHerding) != ok.end()) cfg.method.buffer_kind = BufferKind::kHerding;
  }
  if (auto v = kv.take("fpd_metric")) cfg.method.fpd_metric = parse_fpd_metric(*v);
  real("ewc_decay", cfg.method.ewc_decay);
  real("si_damping", cfg.method.si_damping);
  flag("augment", cfg.method.augment);

  str("epsilon", cfg.epsilon_text);
  const double eps = cfg.epsilon();
  auto& attack = cfg.method.attack;
  attack.epsilon = eps;
  attack.step_size = eps / 4.0;
  attack.n_steps = 10;
  attack.random_start = true;
  attack.clamp_range = std::pair{0.0, 1.0};
  attack.objective = cfg.method.kind == MethodKind::kTrades ? AttackObjective::kKlVsClean : AttackObjective::kCe;
  real("attack_step", attack.step_size);
  size("attack_steps", attack.n_steps);
  size("attack_restarts", attack.n_restarts);
  flag("random_start", attack.random_start);
  if (auto v = kv.take("attack_objective")) attack.objective = parse_objective(*v);

  if (auto v = kv.take("eval_attack")) cfg.eval_attack = parse_eval_attack(*v);
  size("eval_steps", cfg.eval_steps);
  if (auto v = kv.take("eval_step")) cfg.eval_step_size = to_real("eval_step", *v);

  std::size_t epochs = 1, batch = 64;
  double lr = 0.1, wd = 1e-5;
  size("epochs", epochs);
  size("batch_size", batch);
  real("lr", lr);
  real("weight_decay", wd);
  cfg.schedule = Schedule::scaled(epochs, lr, batch, wd);
  real("lr_decay", cfg.schedule.decay);
  if (auto v = kv.take("milestones")) {
    cfg.schedule.milestones.clear();
    for (const auto& s : split_list(*v)) cfg.schedule.milestones.push_back(to_size("milestones", s));
  }

  if (auto v = kv.take("augment_ops")) {
    cfg.augment_policy.op_pool.clear();
    for (const auto& s : split_list(*v)) cfg.augment_policy.op_pool.push_back(parse_augment_op(s));
  }
  real("augment_magnitude", cfg.augment_policy.magnitude);
  size("augment_n_ops", cfg.augment_policy.n_ops);

  if (auto v = kv.take("flatness_scalar")) cfg.flatness.scalar = parse_scalar_def(*v);
  size("flatness_subsample", cfg.flatness.subsample);
  flag("flatness_full", cfg.flatness.full_testset);
  real("hessian_step", cfg.flatness.hessian.step);
  size("hessian_cap", cfg.flatness.hessian.cap);

  size("landscape_points", cfg.landscape_points);
  real("landscape_extent", cfg.landscape_extent);
  size("landscape_n", cfg.landscape_n);

  if (auto v = kv.take("seed")) cfg.seed = static_cast<std::uint64_t>(to_size("seed", *v));
  str("output_dir", cfg.output_dir);
  kv.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::vector<ExperimentConfig> grid_configs(const ExperimentConfig& base, const std::vector<double>& values) {
  std::vector<ExperimentConfig> out;
  for (double a : values) {
    for (double b : values) {
      ExperimentConfig c = base;
      c.method.alpha = a;
      c.method.beta = b;
      if (!base.output_dir.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "alpha_%g_beta_%g", a, b);
        c.output_dir = (fs::path(base.output_dir) / buf).string();
      }
      c.source_text = base.source_text + "# grid point\nalpha = " + std::to_string(a) + "\nbeta = " + std::to_string(b) + "\n";
      c.validate();
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---- running --------------------------------------------------------------------

double RunReport::final_robust_mean() const {
  if (tasks_completed == 0) throw UndefinedValueError("no task has been evaluated");
  const std::size_t i = tasks_completed - 1;
  double s = 0.0;
  for (std::size_t j = 0; j <= i; ++j) s += matrix.robust(i, j);
  return s / static_cast<double>(i + 1);
}

double RunReport::final_clean_mean() const {
  if (tasks_completed == 0) throw UndefinedValueError("no task has been evaluated");
  const std::size_t i = tasks_completed - 1;
  double s = 0.0;
  for (std::size_t j = 0; j <= i; ++j) s += matrix.clean(i, j);
  return s / static_cast<double>(i + 1);
}

namespace {

std::pair<Dataset, Dataset> load_data(const ExperimentConfig& cfg) {
  if (cfg.dataset == "gaussian") {
    return gen_gaussian_split(cfg.n_classes, cfg.input_dim, cfg.separation, cfg.train_per_class, cfg.test_per_class,
                              derive_seed(cfg.seed, Purpose::kData));
  }
  Dataset train = load_csv_dataset(cfg.train_path);
  Dataset test = load_csv_dataset(cfg.test_path);
  if (train.dim() != test.dim()) throw ConfigError("train and test files differ in feature count");
  const std::size_t k = std::max(train.n_classes, test.n_classes);
  train.n_classes = test.n_classes = k;
  train.image_shape = test.image_shape = cfg.image_shape;
  train.validate();
  test.validate();
  return {std::move(train), std::move(test)};
}

AttackConfig eval_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  const double eps = cfg.epsilon();
  AttackConfig a = cfg.eval_attack == EvalAttack::kPgd20 ? pgd20_config(eps, seed) : aa_proxy_config(eps, seed);
  a.n_steps = cfg.eval_steps;
  if (cfg.eval_step_size) a.step_size = *cfg.eval_step_size;
  return a;
}

bool is_reg_method(MethodKind k) { return k == MethodKind::kREwcOn || k == MethodKind::kRSi; }

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  RunReport report;
  report.matrix = AccuracyMatrix(cfg.n_tasks);
  report.config_text = cfg.source_text;
  report.config_hash = sha256_hex(cfg.source_text);
  report.method = method_name(cfg.method.kind);
  report.flatness_scalar = scalar_def_name(cfg.flatness.scalar);

  const bool writing = !cfg.output_dir.empty();
  if (writing) {
    fs::create_directories(fs::path(cfg.output_dir) / "checkpoints");
    fs::create_directories(fs::path(cfg.output_dir) / "datasets");
    fs::remove(fs::path(cfg.output_dir) / "task_log.csv");
  }
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  try {
    auto [train, test] = load_data(cfg);
    const TaskStream train_stream = split_dataset(train, cfg.n_tasks, cfg.classes_per_task, cfg.class_order, cfg.seed);
    const TaskStream test_stream = split_dataset(test, cfg.n_tasks, cfg.classes_per_task, cfg.class_order, cfg.seed);

    MethodConfig mc = cfg.method;
    BufferState buffer = make_buffer(mc.buffer_kind, cfg.buffer_capacity, cfg.seed);
    RegState reg;
    std::vector<Network> models;
    const auto range = std::pair{0.0, 1.0};

    for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
      Network student = t == 0 ? Network::create({train.dim(), cfg.hidden, cfg.activation,
                                                  train_stream.classes_in(0), derive_seed(cfg.seed, Purpose::kInit)})
                               : expand_head(models.back(), train_stream.classes_in(t),
                                             default_head_init_scale(models.back()),
                                             derive_seed(cfg.seed, Purpose::kHeadInit, {t}));
      const FrozenNetwork teacher = t == 0 ? nullptr : snapshot(models.back());
      const std::uint64_t teacher_sum = teacher ? teacher->checksum() : 0;
      if (is_reg_method(mc.kind)) begin_task(reg, student);

      TaskContext ctx;
      ctx.task_index = t;
      ctx.seed = cfg.seed;
      ctx.image_shape = cfg.image_shape;
      ctx.range = range;
      ctx.augment_policy = cfg.augment_policy;
      const TaskResult result = run_task(std::move(student), teacher.get(), train_stream.tasks[t], buffer, mc,
                                         cfg.schedule, is_reg_method(mc.kind) ? &reg : nullptr, ctx);
      if (teacher && teacher->checksum() != teacher_sum) throw ContractError("teacher changed during training");
      const Network& model = result.model;

      const Dataset& task_train = train_stream.tasks[t];
      if (buffer.kind == BufferKind::kHerding) buffer_update_herding(buffer.herding, model, task_train);
      if (mc.kind == MethodKind::kREwcOn) {
        AttackConfig a = mc.attack;
        a.seed = derive_seed(cfg.seed, Purpose::kAttack, {t, cfg.schedule.epochs, 0, 2});
        update_ewc(reg, model, pgd(model, task_train.inputs, task_train.labels, a), task_train.labels, mc.ewc_decay);
      }
      if (mc.kind == MethodKind::kRSi) si_consolidate(reg, model, mc.si_damping);
      if (buffer.kind != BufferKind::kNone && buffer.capacity() != cfg.buffer_capacity) {
        throw ContractError("buffer capacity drifted from its configured value");
      }
      report.buffer.push_back({t + 1, buffer.size(), buffer.capacity()});

      for (std::size_t j = 0; j <= t; ++j) {
        const Dataset& td = test_stream.tasks[j];
        const double clean = accuracy(model, td);
        const double robust = robust_accuracy(model, td, eval_config(cfg, derive_seed(cfg.seed, Purpose::kEvalAttack, {t, j})));
        report.matrix.set(t, j, robust, clean);
      }
      report.log.insert(report.log.end(), result.log.begin(), result.log.end());
      if (writing) {
        append_task_log((fs::path(cfg.output_dir) / "task_log.csv").string(), result.log);
        save_checkpoint(model, (fs::path(cfg.output_dir) / "checkpoints" / ("task_" + std::to_string(t + 1) + ".ckpt")).string());
        save_csv_dataset(test_stream.tasks[t],
                         (fs::path(cfg.output_dir) / "datasets" / ("test_task_" + std::to_string(t + 1) + ".csv")).string());
      }
      models.push_back(result.model);
      report.tasks_completed = t + 1;
    }

    if (cfg.n_tasks >= 2) report.r_bwt = r_bwt(report.matrix);
    std::vector<const Network*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    FlatnessOptions fo = cfg.flatness;
    fo.seed = derive_seed(cfg.seed, Purpose::kFlatness);
    report.flatness = flatness_forgetting(ptrs, test_stream.tasks, fo);

    const Dataset& first = test_stream.tasks.front();
    for (std::size_t k = 0; k < std::min(cfg.landscape_points, first.size()); ++k) {
      const Tensor x = first.inputs.gather_rows(std::span<const std::size_t>(&k, 1));
      report.landscapes.push_back(landscape_grid(models.back(), x, first.labels[k],
                                                 eval_config(cfg, derive_seed(cfg.seed, Purpose::kLandscape, {k, 1})),
                                                 cfg.landscape_extent, cfg.landscape_n,
                                                 derive_seed(cfg.seed, Purpose::kLandscape, {k})));
    }
  } catch (const std::exception& e) {
    report.status = "aborted";
    report.error = e.what();
    report.wall_clock_seconds = elapsed();
    if (writing) {
      try {
        emit_report(report, cfg.output_dir);
      } catch (const std::exception&) {
        // The original failure is the one worth surfacing.
      }
    }
    throw;
  }
  report.wall_clock_seconds = elapsed();
  if (writing) emit_report(report, cfg.output_dir);
  return report;
}

// ---- report emission ------------------------------------------------------------

double round_sig6(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

namespace {

using nlohmann::ordered_json;

ordered_json num(double v) { return round_sig6(v); }

ordered_json opt_num(const std::optional<double>& v) { return v ? num(*v) : ordered_json(nullptr); }

std::string format6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string matrix_csv(const AccuracyMatrix& m, bool robust) {
  std::string out;
  for (std::size_t i = 0; i < m.n_tasks(); ++i) {
    for (std::size_t j = 0; j < m.n_tasks(); ++j) {
      if (j > 0) out += ',';
      if (j <= i && m.has(i, j)) out += format6(robust ? m.robust(i, j) : m.clean(i, j));
    }
    out += '\n';
  }
  return out;
}

ordered_json matrix_json(const AccuracyMatrix& m, bool robust) {
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < m.n_tasks(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t j = 0; j < m.n_tasks(); ++j) {
      if (j <= i && m.has(i, j)) {
        row.push_back(num(robust ? m.robust(i, j) : m.clean(i, j)));
      } else {
        row.push_back(nullptr);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

void emit_report(const RunReport& report, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);

  ordered_json j;
  j["version"] = kVersionTag;
  j["status"] = report.status;
  if (!report.error.empty()) j["error"] = report.error;
  j["method"] = report.method;
  j["config_hash"] = report.config_hash;
  j["config"] = report.config_text;
  j["tasks_completed"] = report.tasks_completed;
  j["accuracy"] = {{"robust", matrix_json(report.matrix, true)}, {"clean", matrix_json(report.matrix, false)}};
  if (report.tasks_completed > 0) {
    j["final_robust_mean"] = num(report.final_robust_mean());
    j["final_clean_mean"] = num(report.final_clean_mean());
  }
  j["r_bwt"] = opt_num(report.r_bwt);
  if (!report.r_bwt) j["r_bwt_note"] = "undefined for fewer than two completed tasks";
  if (report.flatness) {
    const auto& f = *report.flatness;
    ordered_json per_gf = ordered_json::array(), per_hf = ordered_json::array();
    for (double v : f.gf_per_task) per_gf.push_back(num(v));
    for (const auto& v : f.hf_per_task) per_hf.push_back(opt_num(v));
    j["flatness"] = {{"scalar", report.flatness_scalar}, {"gf", num(f.gf)},     {"hf", opt_num(f.hf)},
                     {"hf_note", f.hf_note},              {"gf_per_task", per_gf}, {"hf_per_task", per_hf}};
  } else {
    j["flatness"] = nullptr;
  }
  ordered_json buf = ordered_json::array();
  for (const auto& b : report.buffer) buf.push_back({{"task", b.task}, {"size", b.size}, {"capacity", b.capacity}});
  j["buffer"] = buf;
  ordered_json log = ordered_json::array();
  for (const auto& r : report.log) {
    log.push_back({{"task", r.task},
                   {"epoch", r.epoch},
                   {"train_loss", num(r.train_loss)},
                   {"clean_acc", num(r.clean_acc)},
                   {"robust_acc", num(r.robust_acc)}});
  }
  j["task_log"] = log;
  ordered_json grids = ordered_json::array();
  for (std::size_t k = 0; k < report.landscapes.size(); ++k) {
    const auto& g = report.landscapes[k];
    const std::string name = "landscape_" + std::to_string(k) + ".csv";
    write_file_atomic((root / name).string(), landscape_csv_text(g));
    grids.push_back({{"file", name}, {"extent", num(g.extent)}, {"n", g.n}, {"direction_seed", g.seed}});
  }
  j["landscapes"] = grids;
  j["wall_clock_seconds"] = num(report.wall_clock_seconds);

  std::string log_csv = "task,epoch,train_loss,clean_acc,robust_acc\n";
  for (const auto& r : report.log) {
    log_csv += std::to_string(r.task) + "," + std::to_string(r.epoch) + "," + format6(r.train_loss) + "," +
               format6(r.clean_acc) + "," + format6(r.robust_acc) + "\n";
  }
  write_file_atomic((root / "config.txt").string(), report.config_text);
  write_file_atomic((root / "accuracy_robust.csv").string(), matrix_csv(report.matrix, true));
  write_file_atomic((root / "accuracy_clean.csv").string(), matrix_csv(report.matrix, false));
  write_file_atomic((root / "task_log.csv").string(), log_csv);
  write_file_atomic((root / "report.json").string(), j.dump(2) + "\n");
}

}  // namespace arcil
