#include "arcil/losses.hpp"

#include "arcil/error.hpp"

namespace arcil::losses {

ColumnRange task_columns(const std::vector<std::size_t>& boundaries, std::size_t i, std::size_t j) {
  if (!(i < j) || j > boundaries.size()) {
    throw ArgumentError("task slice (" + std::to_string(i) + ", " + std::to_string(j) + ") invalid for " +
                        std::to_string(boundaries.size()) + " tasks");
  }
  return {i == 0 ? 0 : boundaries[i - 1], boundaries[j - 1]};
}

Tensor one_hot_slice(std::span<const int> labels, std::size_t begin, std::size_t width) {
  Tensor t({labels.size(), width});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const long rel = static_cast<long>(labels[r]) - static_cast<long>(begin);
    if (rel >= 0 && rel < static_cast<long>(width)) t(r, static_cast<std::size_t>(rel)) = 1.0;
  }
  return t;
}

ad::Var ce(const ad::Var& logits, std::span<const int> labels) {
  return ad::mean(ad::softmax_cross_entropy(logits, labels));
}

ad::Var bce_multilabel(const ad::Var& logits, const Tensor& targets) {
  return ad::mean(ad::bce_with_logits(logits, targets));
}

ad::Var kl_div(const ad::Var& target_logits, const ad::Var& pred_logits) {
  return ad::mean(ad::kl_divergence(target_logits, pred_logits));
}

ad::Var mse(const ad::Var& a, const ad::Var& b) { return ad::mean(ad::squared_error(a, b)); }

ad::Var ace(const ad::Var& logits, std::span<const int> labels, const std::set<int>& present) {
  const std::size_t k = logits.value().cols();
  std::vector<bool> mask(k, false);
  for (int c : present) {
    if (c < 0 || static_cast<std::size_t>(c) >= k) {
      throw LabelError("ace: present class " + std::to_string(c) + " outside logits width");
    }
    mask[static_cast<std::size_t>(c)] = true;
  }
  return ad::mean(ad::masked_cross_entropy(logits, labels, mask));
}

namespace {

template <typename F>
double eval(F&& f) {
  ad::Tape tape;
  return f(tape).value().item();
}

}  // namespace

double ce(const Tensor& logits, std::span<const int> labels) {
  return eval([&](ad::Tape& t) { return ce(t.constant(logits), labels); });
}

double bce_multilabel(const Tensor& logits, const Tensor& targets) {
  return eval([&](ad::Tape& t) { return bce_multilabel(t.constant(logits), targets); });
}

double kl_div(const Tensor& target_logits, const Tensor& pred_logits) {
  return eval([&](ad::Tape& t) { return kl_div(t.constant(target_logits), t.constant(pred_logits)); });
}

double mse(const Tensor& a, const Tensor& b) {
  return eval([&](ad::Tape& t) { return mse(t.constant(a), t.constant(b)); });
}

double ace(const Tensor& logits, std::span<const int> labels, const std::set<int>& present) {
  return eval([&](ad::Tape& t) { return ace(t.constant(logits), labels, present); });
}

}  // namespace arcil::losses
