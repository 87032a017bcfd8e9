#pragma once

#include "arcil/data.hpp"
#include "arcil/losses.hpp"
#include "arcil/methods.hpp"
#include "arcil/network.hpp"
#include "arcil/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace arcil {

/// Class-disjoint tasks. Labels are rewritten to head positions, so task t
/// holds labels in [boundaries[t-1], boundaries[t]).
struct TaskStream {
  std::vector<Dataset> tasks;
  std::vector<int> class_order;  // class_order[k] is the source class at head position k
  std::vector<std::size_t> boundaries;

  std::size_t n_tasks() const { return tasks.size(); }
  std::size_t classes_in(std::size_t t) const;
};

/// classes_per_task = 0 divides every class evenly across tasks; an empty
/// class_order is the identity.
TaskStream split_dataset(const Dataset& data, std::size_t n_tasks, std::size_t classes_per_task,
                         const std::vector<int>& class_order, std::uint64_t seed);

/// Columns for tasks i+1..j of a logits batch.
losses::LogitSlice slice(const Tensor& logits, const std::vector<std::size_t>& boundaries, std::size_t i,
                         std::size_t j);

/// Greedy herding order over the rows of `features`: each step adds the row
/// that keeps the running mean closest to the full mean, lowest index on ties.
std::vector<std::size_t> herding_select(const Tensor& features, std::size_t m);

struct HerdingBuffer {
  struct ClassExemplars {
    int label = 0;
    Tensor x{std::vector<std::size_t>{0, 0}};  // herding order, best first
  };

  std::size_t capacity = 0;
  std::vector<ClassExemplars> classes;  // sorted by label

  std::size_t size() const;
  /// Slots per class when `n_classes` classes share the capacity; the
  /// remainder goes to the lowest-indexed classes.
  std::vector<std::size_t> quotas(std::size_t n_classes) const;
  Dataset as_dataset(std::size_t n_classes) const;
};

/// Herds every class of `task_data` on the model's penultimate features and
/// truncates all classes to the rebalanced quotas.
void buffer_update_herding(HerdingBuffer& buffer, const Network& model, const Dataset& task_data);

struct ReservoirBuffer {
  struct Slot {
    std::vector<double> x;
    int y = 0;
    std::vector<double> z;  // logits at insertion time; empty when not kept
  };

  std::size_t capacity = 0;
  std::size_t seen = 0;
  std::vector<Slot> slots;

  std::size_t size() const { return slots.size(); }
};

/// Classic reservoir step: the n-th element offered is kept with
/// probability capacity/n, replacing a uniformly chosen slot.
void reservoir_update(ReservoirBuffer& buffer, std::span<const double> x, int y, std::span<const double> logits,
                      Rng& rng);

/// Up to `n` distinct slots drawn uniformly.
BufferBatch sample_reservoir(const ReservoirBuffer& buffer, std::size_t n, Rng& rng);

/// Stepwise learning rate: lr · decay^(milestones passed).
struct Schedule {
  std::size_t epochs = 0;
  double lr = 0.1;
  std::vector<std::size_t> milestones;
  double decay = 0.1;
  std::size_t batch_size = 64;
  double weight_decay = 1e-5;

  /// Milestones at 24, 31 and 40 of 50 epochs, rescaled to `epochs`.
  static Schedule scaled(std::size_t epochs, double lr, std::size_t batch_size, double weight_decay = 1e-5);
  double lr_at(std::size_t epoch) const;
  void validate() const;
};

struct TaskLogRow {
  std::size_t task = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
};

/// Replay state carried across tasks.
struct BufferState {
  BufferKind kind = BufferKind::kNone;
  HerdingBuffer herding;
  ReservoirBuffer reservoir;
  Rng rng{0};

  std::size_t size() const;
  std::size_t capacity() const;
};

BufferState make_buffer(BufferKind kind, std::size_t capacity, std::uint64_t seed);

struct TaskContext {
  std::size_t task_index = 0;  // zero-based
  std::uint64_t seed = 0;
  std::optional<ImageShape> image_shape;
  std::optional<std::pair<double, double>> range;
  AugmentPolicy augment_policy;
};

struct TaskResult {
  Network model;
  std::vector<TaskLogRow> log;
};

/// Trains the student on one task: per batch, optional augmentation, PGD
/// against the student, the method loss and one SGD step. Herding buffers
/// are merged into the sampling pool; reservoir buffers contribute a
/// separate minibatch and absorb each current batch after the step.
TaskResult run_task(Network student, const Network* teacher, const Dataset& task_data, BufferState& buffer,
                    const MethodConfig& cfg, const Schedule& schedule, RegState* reg, const TaskContext& ctx);

/// Appends rows to a CSV log, writing the header when the file is new.
void append_task_log(const std::string& path, const std::vector<TaskLogRow>& rows);

}  // namespace arcil
