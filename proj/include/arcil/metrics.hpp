#pragma once

#include "arcil/attacks.hpp"
#include "arcil/data.hpp"
#include "arcil/network.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace arcil {

/// Row-wise argmax; ties go to the lowest column.
std::vector<int> argmax_rows(const Tensor& logits);

/// Percentage of rows whose argmax equals the label.
double accuracy(const Network& model, const Dataset& data);

/// Percentage of examples that stay correct on the clean input and under
/// every PGD restart.
double robust_accuracy(const Network& model, const Dataset& data, const AttackConfig& attack);

/// PGD-20 at the given radius with step ε/4 and a random start.
AttackConfig pgd20_config(double epsilon, std::uint64_t seed,
                          std::optional<std::pair<double, double>> clamp_range = std::pair{0.0, 1.0});

/// Five-restart PGD-20, the stand-in for an external attack ensemble.
AttackConfig aa_proxy_config(double epsilon, std::uint64_t seed,
                             std::optional<std::pair<double, double>> clamp_range = std::pair{0.0, 1.0});

/// Robust (RA) and clean (CA) accuracy of task j's test set after training
/// task i, i ≥ j, zero-based. Each entry is written exactly once.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t n_tasks = 0);

  std::size_t n_tasks() const { return n_; }
  void set(std::size_t i, std::size_t j, double robust, double clean);
  bool has(std::size_t i, std::size_t j) const;
  double robust(std::size_t i, std::size_t j) const;
  double clean(std::size_t i, std::size_t j) const;

 private:
  std::size_t index(std::size_t i, std::size_t j) const;
  std::size_t n_;
  std::vector<std::optional<double>> ra_;
  std::vector<std::optional<double>> ca_;
};

/// Mean change of each earlier task's robust accuracy between when it was
/// learned and the end of training.
double r_bwt(const AccuracyMatrix& m);

enum class ScalarDef { kCrossEntropy, kMaxLogit };
std::string scalar_def_name(ScalarDef s);
ScalarDef parse_scalar_def(const std::string& name);

struct FlatnessOptions {
  ScalarDef scalar = ScalarDef::kCrossEntropy;
  std::size_t subsample = 64;
  bool full_testset = false;
  std::uint64_t seed = 0;
  HessianOptions hessian;
};

struct FlatnessReport {
  double gf = 0.0;
  std::optional<double> hf;  // empty when the input exceeds the Hessian cap
  std::vector<double> gf_per_task;
  std::vector<std::optional<double>> hf_per_task;
  std::string hf_note;
};

/// Mean over earlier tasks and their sampled test points of the distance
/// between the final model's input gradient (Hessian, Frobenius) of the
/// chosen scalar and the same quantity under the model that finished that
/// task. models[i] is the model after task i; testsets[i] is task i's data.
FlatnessReport flatness_forgetting(const std::vector<const Network*>& models, const std::vector<Dataset>& testsets,
                                   const FlatnessOptions& opts = {});

/// The differentiated scalar per example for a model: CE at the true label or
/// the largest logit.
PerExampleLoss scalar_loss(ScalarDef def, std::span<const int> labels);

struct LandscapeGrid {
  std::size_t n = 0;
  double extent = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> offsets;  // the n step values along each axis
  std::vector<double> values;   // row a, column b: offsets[a] along u, offsets[b] along v

  double at(std::size_t a, std::size_t b) const { return values[a * n + b]; }
};

/// CE over a plane through x spanned by the PGD direction (scaled to unit
/// L∞) and a seeded ±1 direction.
LandscapeGrid landscape_grid(const Network& model, const Tensor& x, int y, const AttackConfig& attack, double extent,
                             std::size_t n, std::uint64_t seed);

/// Comment header with the extent and direction seed, then n rows of n values.
std::string landscape_csv_text(const LandscapeGrid& grid);
void save_landscape_csv(const LandscapeGrid& grid, const std::string& path);

}  // namespace arcil
