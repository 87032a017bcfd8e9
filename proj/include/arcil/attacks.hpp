#pragma once

#include "arcil/network.hpp"
#include "arcil/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace arcil {

enum class AttackObjective {
  kCe,           // cross-entropy over the full head
  kKlVsClean,    // KL(softmax(f(x)) ‖ softmax(f(x_adv))), f(x) held fixed
  kBceNewSlice,  // multilabel BCE of the newest task's columns against 1_y
};

std::string objective_name(AttackObjective o);
AttackObjective parse_objective(const std::string& name);

struct AttackConfig {
  double epsilon = 0.0;
  double step_size = 0.0;
  std::size_t n_steps = 0;
  bool random_start = false;
  AttackObjective objective = AttackObjective::kCe;
  std::optional<std::pair<double, double>> clamp_range;
  std::size_t n_restarts = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parses "0.1", "1e-3" or an exact rational "8/255" into the nearest double.
double parse_real_literal(const std::string& text);

/// Per-example attack objective at `x_eval` (shape [batch]); `x_clean` anchors
/// the kl-vs-clean objective.
Tensor attack_objective(const Network& model, const Tensor& x_eval, const Tensor& x_clean,
                        std::span<const int> labels, AttackObjective objective);

/// L∞ PGD with optional uniform random start, signed-gradient ascent steps
/// and projection onto the ε-ball (and clamp range). Returns, per example,
/// the visited point with the highest objective over all restarts.
Tensor pgd(const Network& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg);

/// Single full-radius signed step from x.
Tensor fgsm(const Network& model, const Tensor& x, std::span<const int> labels, double epsilon,
            AttackObjective objective = AttackObjective::kCe,
            std::optional<std::pair<double, double>> clamp_range = std::nullopt);

}  // namespace arcil
