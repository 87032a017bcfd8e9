#pragma once

#include "arcil/autodiff.hpp"
#include "arcil/tensor.hpp"

#include <cstddef>
#include <set>
#include <span>
#include <vector>

// Batch-mean loss primitives. Every loss consumes logits; squashing to
// probabilities happens inside the loss.
namespace arcil::losses {

/// A column block of a logits batch; `class_offset` is the global index of
/// its first column.
struct LogitSlice {
  Tensor logits;
  std::size_t class_offset = 0;
};

/// Column range [begin, end) for tasks i+1..j given cumulative boundaries.
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width() const { return end - begin; }
};
ColumnRange task_columns(const std::vector<std::size_t>& boundaries, std::size_t i, std::size_t j);

/// One-hot targets restricted to [begin, begin + width). Labels outside the
/// range produce an all-zero row.
Tensor one_hot_slice(std::span<const int> labels, std::size_t begin, std::size_t width);

ad::Var ce(const ad::Var& logits, std::span<const int> labels);
ad::Var bce_multilabel(const ad::Var& logits, const Tensor& targets);
/// Mean over the batch of KL(softmax(target) ‖ softmax(pred)).
ad::Var kl_div(const ad::Var& target_logits, const ad::Var& pred_logits);
ad::Var mse(const ad::Var& a, const ad::Var& b);
/// Cross-entropy with the softmax denominator restricted to `present`.
ad::Var ace(const ad::Var& logits, std::span<const int> labels, const std::set<int>& present);

double ce(const Tensor& logits, std::span<const int> labels);
double bce_multilabel(const Tensor& logits, const Tensor& targets);
double kl_div(const Tensor& target_logits, const Tensor& pred_logits);
double mse(const Tensor& a, const Tensor& b);
double ace(const Tensor& logits, std::span<const int> labels, const std::set<int>& present);

}  // namespace arcil::losses
