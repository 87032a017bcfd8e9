#pragma once

#include "arcil/continual.hpp"
#include "arcil/data.hpp"
#include "arcil/methods.hpp"
#include "arcil/metrics.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace arcil {

inline constexpr const char* kVersionTag = "arcil-0.1.0";

enum class EvalAttack { kPgd20, kAaProxy };
std::string eval_attack_name(EvalAttack a);
EvalAttack parse_eval_attack(const std::string& name);

struct ExperimentConfig {
  // Data: either a generated Gaussian stream or CSV train/test files.
  std::string dataset = "gaussian";
  std::size_t n_classes = 10;
  std::size_t input_dim = 16;
  double separation = 14.0;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::string train_path;
  std::string test_path;
  std::optional<ImageShape> image_shape;

  std::size_t n_tasks = 5;
  std::size_t classes_per_task = 0;
  std::vector<int> class_order;

  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::kRelu;

  MethodConfig method;

  std::string epsilon_text = "8/255";
  EvalAttack eval_attack = EvalAttack::kPgd20;
  std::size_t eval_steps = 20;
  std::optional<double> eval_step_size;  // default ε/4

  Schedule schedule = Schedule::scaled(1, 0.1, 64);
  std::size_t buffer_capacity = 0;
  AugmentPolicy augment_policy;

  FlatnessOptions flatness;
  std::size_t landscape_points = 0;
  double landscape_extent = 0.1;
  std::size_t landscape_n = 11;

  std::uint64_t seed = 0;
  std::string output_dir;

  /// The exact text this config was parsed from.
  std::string source_text;

  double epsilon() const;
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
/// keys are ConfigErrors.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// One config per (α, β) pair of the grid, output directories suffixed.
std::vector<ExperimentConfig> grid_configs(const ExperimentConfig& base, const std::vector<double>& values);

struct TaskBufferRecord {
  std::size_t task = 0;
  std::size_t size = 0;
  std::size_t capacity = 0;
};

struct RunReport {
  AccuracyMatrix matrix;
  std::optional<double> r_bwt;
  std::optional<FlatnessReport> flatness;
  std::vector<TaskLogRow> log;
  std::vector<TaskBufferRecord> buffer;
  std::vector<LandscapeGrid> landscapes;
  std::string config_text;
  std::string config_hash;
  std::string method;
  std::string flatness_scalar;
  double wall_clock_seconds = 0.0;
  std::string status = "complete";
  std::string error;
  std::size_t tasks_completed = 0;

  double final_robust_mean() const;
  double final_clean_mean() const;
};

/// Trains every task in order, evaluates each matrix row after its task,
/// then computes backward transfer and flatness forgetting. With a
/// non-empty output_dir it writes checkpoints, test splits and the report;
/// a failing run flushes a partial report before rethrowing.
RunReport run_experiment(const ExperimentConfig& cfg);

/// report.json, the accuracy matrices, the task log and landscape grids.
void emit_report(const RunReport& report, const std::string& dir);

/// Rounds to six significant digits, the precision of every emitted number.
double round_sig6(double v);

}  // namespace arcil
