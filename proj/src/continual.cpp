#include "arcil/continual.hpp"

#include "arcil/attacks.hpp"
#include "arcil/error.hpp"
#include "arcil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace arcil {

std::size_t TaskStream::classes_in(std::size_t t) const {
  if (t >= boundaries.size()) throw ArgumentError("task index out of range");
  return boundaries[t] - (t == 0 ? 0 : boundaries[t - 1]);
}

TaskStream split_dataset(const Dataset& data, std::size_t n_tasks, std::size_t classes_per_task,
                         const std::vector<int>& class_order, std::uint64_t seed) {
  if (n_tasks == 0) throw ArgumentError("split needs at least one task");
  const std::size_t total = data.n_classes;
  if (classes_per_task == 0) {
    if (total % n_tasks != 0) {
      throw ArgumentError(std::to_string(total) + " classes do not divide into " + std::to_string(n_tasks) + " tasks");
    }
    classes_per_task = total / n_tasks;
  }
  if (classes_per_task == 0 || n_tasks * classes_per_task > total) {
    throw ArgumentError("cannot take " + std::to_string(n_tasks) + " tasks of " + std::to_string(classes_per_task) +
                        " classes from " + std::to_string(total));
  }
  std::vector<int> order = class_order;
  if (order.empty()) {
    order.resize(total);
    std::iota(order.begin(), order.end(), 0);
  }
  {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> ident(total);
    std::iota(ident.begin(), ident.end(), 0);
    if (sorted != ident) throw ArgumentError("class order must be a permutation of the dataset's classes");
  }
  std::vector<int> position(total, -1);
  for (std::size_t k = 0; k < n_tasks * classes_per_task; ++k) position[static_cast<std::size_t>(order[k])] = static_cast<int>(k);

  TaskStream stream;
  stream.class_order.assign(order.begin(), order.begin() + static_cast<long>(n_tasks * classes_per_task));
  std::vector<std::vector<std::size_t>> rows(n_tasks);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int pos = position[static_cast<std::size_t>(data.labels[i])];
    if (pos >= 0) rows[static_cast<std::size_t>(pos) / classes_per_task].push_back(i);
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    Rng rng(derive_seed(seed, Purpose::kShuffle, {t}));
    std::shuffle(rows[t].begin(), rows[t].end(), rng);
    Dataset task = data.subset(rows[t]);
    for (int& y : task.labels) y = position[static_cast<std::size_t>(y)];
    task.n_classes = (t + 1) * classes_per_task;
    stream.tasks.push_back(std::move(task));
    stream.boundaries.push_back((t + 1) * classes_per_task);
  }
  return stream;
}

losses::LogitSlice slice(const Tensor& logits, const std::vector<std::size_t>& boundaries, std::size_t i,
                         std::size_t j) {
  const auto cols = losses::task_columns(boundaries, i, j);
  if (logits.cols() != boundaries.back()) throw DimensionError("logit width does not match head boundaries");
  Tensor out({logits.rows(), cols.width()});
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = 0; c < cols.width(); ++c) out(r, c) = logits(r, cols.begin + c);
  }
  return {std::move(out), cols.begin};
}

// ---- herding --------------------------------------------------------------------

std::vector<std::size_t> herding_select(const Tensor& features, std::size_t m) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n == 0) throw ArgumentError("herding over an empty class");
  if (m > n) throw ArgumentError("herding cannot pick " + std::to_string(m) + " of " + std::to_string(n) + " examples");
  // Scaled so integer features stay integer: at step k the distance
  // ‖μ − (S + f)/(k+1)‖ is proportional to ‖(k+1)·Σ − n·S − n·f‖.
  std::vector<double> total(d, 0.0), chosen_sum(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) total[c] += features(r, c);
  }
  const double nn = static_cast<double>(n);
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> order;
  order.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double kk = static_cast<double>(k + 1);
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (taken[r]) continue;
      double score = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = kk * total[c] - nn * chosen_sum[c] - nn * features(r, c);
        score += diff * diff;
      }
      if (best == n || score < best_score) {
        best = r;
        best_score = score;
      }
    }
    taken[best] = true;
    order.push_back(best);
    for (std::size_t c = 0; c < d; ++c) chosen_sum[c] += features(best, c);
  }
  return order;
}

std::size_t HerdingBuffer::size() const {
  std::size_t s = 0;
  for (const auto& c : classes) s += c.x.rows();
  return s;
}

std::vector<std::size_t> HerdingBuffer::quotas(std::size_t n_classes) const {
  std::vector<std::size_t> q(n_classes, 0);
  if (n_classes == 0) return q;
  for (std::size_t i = 0; i < n_classes; ++i) q[i] = capacity / n_classes + (i < capacity % n_classes ? 1 : 0);
  return q;
}

Dataset HerdingBuffer::as_dataset(std::size_t n_classes) const {
  Dataset out;
  out.n_classes = n_classes;
  for (const auto& c : classes) {
    if (c.x.rows() == 0) continue;
    out.inputs = out.labels.empty() ? c.x : Tensor::concat_rows(out.inputs, c.x);
    out.labels.insert(out.labels.end(), c.x.rows(), c.label);
  }
  return out;
}

void buffer_update_herding(HerdingBuffer& buffer, const Network& model, const Dataset& task_data) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < task_data.size(); ++i) by_class[task_data.labels[i]].push_back(i);
  for (const auto& c : buffer.classes) {
    if (by_class.count(c.label)) throw ArgumentError("herding buffer already holds class " + std::to_string(c.label));
  }
  std::size_t n_total = buffer.classes.size() + by_class.size();
  for (const auto& [label, rows] : by_class) {
    HerdingBuffer::ClassExemplars ex;
    ex.label = label;
    ex.x = task_data.inputs.gather_rows(rows);
    buffer.classes.push_back(std::move(ex));
  }
  std::sort(buffer.classes.begin(), buffer.classes.end(),
            [](const auto& a, const auto& b) { return a.label < b.label; });
  const auto quota = buffer.quotas(n_total);
  for (std::size_t i = 0; i < buffer.classes.size(); ++i) {
    auto& c = buffer.classes[i];
    if (by_class.count(c.label)) {
      const std::size_t keep = std::min(quota[i], c.x.rows());
      const auto order = herding_select(model.features(c.x), keep);
      c.x = c.x.gather_rows(order);
    } else if (c.x.rows() > quota[i]) {
      std::vector<std::size_t> prefix(quota[i]);
      std::iota(prefix.begin(), prefix.end(), 0);
      c.x = c.x.gather_rows(prefix);
    }
  }
  if (buffer.size() > buffer.capacity) throw ContractError("herding buffer exceeds its capacity");
}

// ---- reservoir ------------------------------------------------------------------

void reservoir_update(ReservoirBuffer& buffer, std::span<const double> x, int y, std::span<const double> logits,
                      Rng& rng) {
  ++buffer.seen;
  ReservoirBuffer::Slot slot{std::vector<double>(x.begin(), x.end()), y,
                             std::vector<double>(logits.begin(), logits.end())};
  if (buffer.slots.size() < buffer.capacity) {
    buffer.slots.push_back(std::move(slot));
    return;
  }
  if (buffer.capacity == 0) return;
  std::uniform_int_distribution<std::size_t> pick(0, buffer.seen - 1);
  const std::size_t j = pick(rng);
  if (j < buffer.capacity) buffer.slots[j] = std::move(slot);
}

BufferBatch sample_reservoir(const ReservoirBuffer& buffer, std::size_t n, Rng& rng) {
  BufferBatch out;
  if (buffer.slots.empty() || n == 0) return out;
  std::vector<std::size_t> idx(buffer.slots.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(n, idx.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  const std::size_t d = buffer.slots.front().x.size();
  std::size_t zw = 0;
  for (std::size_t i : idx) zw = std::max(zw, buffer.slots[i].z.size());
  out.x = Tensor({take, d});
  if (zw > 0) out.z = Tensor({take, zw});
  for (std::size_t r = 0; r < take; ++r) {
    const auto& s = buffer.slots[idx[r]];
    std::copy(s.x.begin(), s.x.end(), out.x.row(r).begin());
    out.y.push_back(s.y);
    if (zw > 0) {
      std::copy(s.z.begin(), s.z.end(), out.z.row(r).begin());
      out.z_width.push_back(s.z.size());
    }
  }
  return out;
}

// ---- schedule -------------------------------------------------------------------

Schedule Schedule::scaled(std::size_t epochs, double lr, std::size_t batch_size, double weight_decay) {
  Schedule s;
  s.epochs = epochs;
  s.lr = lr;
  s.batch_size = batch_size;
  s.weight_decay = weight_decay;
  for (double m : {24.0, 31.0, 40.0}) {
    s.milestones.push_back(static_cast<std::size_t>(std::lround(m * static_cast<double>(epochs) / 50.0)));
  }
  return s;
}

double Schedule::lr_at(std::size_t epoch) const {
  double out = lr;
  for (std::size_t m : milestones) {
    if (epoch >= m) out *= decay;
  }
  return out;
}

void Schedule::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw ConfigError("lr decay must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be >= 0");
}

// ---- buffers --------------------------------------------------------------------

std::size_t BufferState::size() const {
  switch (kind) {
    case BufferKind::kNone: return 0;
    case BufferKind::kHerding: return herding.size();
    default: return reservoir.size();
  }
}

std::size_t BufferState::capacity() const {
  switch (kind) {
    case BufferKind::kNone: return 0;
    case BufferKind::kHerding: return herding.capacity;
    default: return reservoir.capacity;
  }
}

BufferState make_buffer(BufferKind kind, std::size_t capacity, std::uint64_t seed) {
  BufferState b;
  b.kind = kind;
  if (kind == BufferKind::kNone) return b;
  if (capacity == 0) throw ConfigError("buffer kind '" + buffer_kind_name(kind) + "' needs a positive capacity");
  b.herding.capacity = capacity;
  b.reservoir.capacity = capacity;
  b.rng.seed(derive_seed(seed, Purpose::kBuffer));
  return b;
}

// ---- training loop --------------------------------------------------------------

namespace {

double fraction_correct(const Tensor& logits, const std::vector<int>& y) {
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i] ? 1 : 0;
  return static_cast<double>(hits);
}

}  // namespace

TaskResult run_task(Network student, const Network* teacher, const Dataset& task_data, BufferState& buffer,
                    const MethodConfig& cfg, const Schedule& schedule, RegState* reg, const TaskContext& ctx) {
  cfg.validate();
  schedule.validate();
  if (cfg.buffer_kind != buffer.kind) throw ConfigError("buffer state does not match the method's buffer kind");
  TaskResult result{student, {}};
  if (schedule.epochs == 0) return result;

  Dataset pool = task_data;
  if (buffer.kind == BufferKind::kHerding && buffer.size() > 0) {
    pool = task_data.merged(buffer.herding.as_dataset(student.n_classes()));
  }
  if (pool.empty()) throw ArgumentError("task " + std::to_string(ctx.task_index + 1) + " has no training data");
  student.check_input(pool.inputs);
  const bool reservoir = buffer.kind == BufferKind::kReservoir || buffer.kind == BufferKind::kReservoirWithLogits;
  const bool keep_logits = buffer.kind == BufferKind::kReservoirWithLogits;
  const bool needs_reg = cfg.kind == MethodKind::kREwcOn || cfg.kind == MethodKind::kRSi;
  if (needs_reg && reg == nullptr) throw ContractError("method '" + method_name(cfg.kind) + "' needs regularizer state");

  const std::size_t n = pool.size();
  const std::size_t t = ctx.task_index;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(ctx.seed, Purpose::kShuffle, {t, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, clean_hits = 0.0, robust_hits = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += schedule.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + schedule.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      Batch batch;
      batch.x = pool.inputs.gather_rows(rows);
      for (std::size_t i : rows) batch.y.push_back(pool.labels[i]);
      if (cfg.augment) {
        AugmentPolicy policy = ctx.augment_policy;
        policy.seed = derive_seed(ctx.seed, Purpose::kAugment, {t, epoch, batch_index});
        batch.x = augment(batch.x, policy, ctx.image_shape, ctx.range);
      }

      AttackConfig attack = cfg.attack;
      attack.seed = derive_seed(ctx.seed, Purpose::kAttack, {t, epoch, batch_index, 0});
      const Tensor x_adv = pgd(student, batch.x, batch.y, attack);

      BufferBatch replay;
      Tensor x_adv_replay({0, student.input_dim()});
      if (reservoir) {
        replay = sample_reservoir(buffer.reservoir, batch.size(), buffer.rng);
        if (!replay.empty()) {
          AttackConfig replay_attack = cfg.attack;
          if (replay_attack.objective == AttackObjective::kBceNewSlice) replay_attack.objective = AttackObjective::kCe;
          replay_attack.seed = derive_seed(ctx.seed, Purpose::kAttack, {t, epoch, batch_index, 1});
          x_adv_replay = pgd(student, replay.x, replay.y, replay_attack);
        }
      }

      const Tensor clean_logits = student.forward(batch.x);
      clean_hits += fraction_correct(clean_logits, batch.y);
      robust_hits += fraction_correct(student.forward(x_adv), batch.y);

      ad::Tape tape;
      const auto bound = student.bind(tape, true);
      const StudentGraph graph{student, bound, tape};
      const ad::Var loss = method_loss(cfg, graph, teacher, reg, batch, x_adv, replay, x_adv_replay);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite " + method_name(cfg.kind) + " loss " + std::to_string(value) + " at task " +
                               std::to_string(t + 1) + ", epoch " + std::to_string(epoch + 1) + ", batch " +
                               std::to_string(batch_index),
                           batch_index);
      }
      ParamView grad = student.params().zeros_like();
      if (loss.requires_grad()) {
        tape.backward(loss);
        grad = student.gradient(bound);
      }
      for (double g : grad.values) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient at task " + std::to_string(t + 1) + ", epoch " +
                                 std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index) +
                                 " (loss " + std::to_string(value) + ")",
                             batch_index);
        }
      }
      const ParamView before = student.params();
      const ParamView after = sgd_step(before, grad, lr, schedule.weight_decay);
      student.set_params(after);
      if (cfg.kind == MethodKind::kRSi) si_step(*reg, grad, before, after);
      loss_sum += value * static_cast<double>(batch.size());

      if (reservoir) {
        for (std::size_t r = 0; r < batch.size(); ++r) {
          const std::span<const double> z = keep_logits ? clean_logits.row(r) : std::span<const double>();
          reservoir_update(buffer.reservoir, batch.x.row(r), batch.y[r], z, buffer.rng);
        }
      }
    }
    const double nn = static_cast<double>(n);
    result.log.push_back({t + 1, epoch + 1, loss_sum / nn, 100.0 * clean_hits / nn, 100.0 * robust_hits / nn});
  }
  result.model = std::move(student);
  return result;
}

void append_task_log(const std::string& path, const std::vector<TaskLogRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f) throw ArgumentError("cannot append to '" + path + "'");
  if (fresh) f << "task,epoch,train_loss,clean_acc,robust_acc\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%.6g,%.6g\n", r.task, r.epoch, r.train_loss, r.clean_acc,
                  r.robust_acc);
    f << buf;
  }
}

}  // namespace arcil
