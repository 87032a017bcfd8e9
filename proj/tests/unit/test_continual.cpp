#include "arcil/continual.hpp"
#include "arcil/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>

using namespace arcil;
using namespace arcil::testing;

namespace {

// Exhaustive greedy herding in exact integer arithmetic: each step scores
// every unselected row by ‖(k+1)·Σ_all − n·(Σ_sel + f_i)‖², which orders
// candidates exactly as the distance of the running mean to the full mean.
std::vector<std::size_t> herding_oracle(const std::vector<std::vector<std::int64_t>>& f, std::size_t m) {
  const std::size_t n = f.size(), d = f[0].size();
  std::vector<std::int64_t> total(d, 0), sel(d, 0);
  for (const auto& row : f) {
    for (std::size_t k = 0; k < d; ++k) total[k] += row[k];
  }
  std::vector<bool> used(n, false);
  std::vector<std::size_t> out;
  for (std::size_t step = 0; step < m; ++step) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::size_t arg = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      std::int64_t score = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const std::int64_t diff = static_cast<std::int64_t>(step + 1) * total[k] -
                                  static_cast<std::int64_t>(n) * (sel[k] + f[i][k]);
        score += diff * diff;
      }
      if (score < best) {
        best = score;
        arg = i;
      }
    }
    used[arg] = true;
    out.push_back(arg);
    for (std::size_t k = 0; k < d; ++k) sel[k] += f[arg][k];
  }
  return out;
}

Tensor to_tensor(const std::vector<std::vector<std::int64_t>>& f) {
  Tensor t({f.size(), f[0].size()});
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t k = 0; k < f[i].size(); ++k) t(i, k) = static_cast<double>(f[i][k]);
  }
  return t;
}

Dataset labelled(const std::vector<int>& labels, std::size_t d, std::uint64_t seed, std::size_t n_classes) {
  Rng rng(seed);
  Dataset data;
  data.inputs = random_tensor({labels.size(), d}, rng, 0, 1);
  data.labels = labels;
  data.n_classes = n_classes;
  data.range = std::pair{0.0, 1.0};
  return data;
}

}  // namespace

TEST_SUITE("continual") {

TEST_CASE("even split into two-class tasks") {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c) labels.insert(labels.end(), 3, c);
  const Dataset data = labelled(labels, 4, 1, 10);
  const TaskStream s = split_dataset(data, 5, 0, {}, 7);
  CHECK(s.n_tasks() == 5);
  CHECK(s.boundaries == std::vector<std::size_t>{2, 4, 6, 8, 10});
  std::multiset<std::vector<double>> rows_in, rows_out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.inputs.row(i);
    rows_in.insert(std::vector<double>(r.begin(), r.end()));
  }
  for (std::size_t t = 0; t < 5; ++t) {
    const std::set<int> got(s.tasks[t].labels.begin(), s.tasks[t].labels.end());
    CHECK(got == std::set<int>{static_cast<int>(2 * t), static_cast<int>(2 * t + 1)});
    CHECK(s.classes_in(t) == 2);
    for (std::size_t i = 0; i < s.tasks[t].size(); ++i) {
      auto r = s.tasks[t].inputs.row(i);
      rows_out.insert(std::vector<double>(r.begin(), r.end()));
    }
  }
  CHECK(rows_in == rows_out);
}

TEST_CASE("single task keeps the whole dataset") {
  const Dataset data = labelled({0, 1, 2, 1, 0}, 3, 2, 3);
  const TaskStream s = split_dataset(data, 1, 0, {}, 0);
  CHECK(s.tasks[0].size() == 5);
  CHECK(s.boundaries == std::vector<std::size_t>{3});
}

TEST_CASE("class order remaps labels to head positions") {
  const Dataset data = labelled({0, 1, 2, 3}, 2, 3, 4);
  const TaskStream s = split_dataset(data, 2, 2, {3, 1, 0, 2}, 0);
  // Source class 3 sits at head position 0.
  for (std::size_t i = 0; i < s.tasks[0].size(); ++i) {
    const auto r = s.tasks[0].inputs.row(i);
    const int src = s.class_order[static_cast<std::size_t>(s.tasks[0].labels[i])];
    bool found = false;
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (data.labels[j] == src && std::equal(r.begin(), r.end(), data.inputs.row(j).begin())) found = true;
    }
    CHECK(found);
  }
  CHECK_THROWS_AS(split_dataset(data, 3, 0, {}, 0), ArgumentError);
  CHECK_THROWS_AS(split_dataset(data, 2, 2, {0, 0, 1, 2}, 0), ArgumentError);
}

TEST_CASE("logit slices") {
  const Tensor z = Tensor::matrix({{1, 2, 3, 4}});
  const std::vector<std::size_t> b{2, 4};
  CHECK(slice(z, b, 0, 1).logits == Tensor::matrix({{1, 2}}));
  CHECK(slice(z, b, 1, 2).logits == Tensor::matrix({{3, 4}}));
  CHECK(slice(z, b, 1, 2).class_offset == 2);
  CHECK(slice(z, b, 0, 2).logits == z);
}

TEST_CASE("herding examples") {
  CHECK(herding_select(Tensor::matrix({{0}, {1}, {2}}), 2) == std::vector<std::size_t>{1, 0});
  const auto all = herding_select(Tensor::matrix({{3, 1}, {0, 2}, {5, 5}, {1, 1}}), 4);
  std::vector<std::size_t> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(herding_select(Tensor::matrix({{1, 1}, {1, 1}, {1, 1}, {1, 1}}), 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("herding agrees with exhaustive greedy search") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + seed % 9, d = 1 + seed % 3;
    std::vector<std::vector<std::int64_t>> f(n, std::vector<std::int64_t>(d));
    for (auto& row : f) {
      for (auto& v : row) v = std::uniform_int_distribution<int>(-2, 2)(rng);
    }
    for (std::size_t m = 1; m <= n; ++m) CHECK(herding_select(to_tensor(f), m) == herding_oracle(f, m));
  }
}

TEST_CASE("quota arithmetic") {
  HerdingBuffer b;
  b.capacity = 10;
  CHECK(b.quotas(2) == std::vector<std::size_t>{5, 5});
  CHECK(b.quotas(4) == std::vector<std::size_t>{3, 3, 2, 2});
  CHECK(b.quotas(3) == std::vector<std::size_t>{4, 3, 3});
}

TEST_CASE("herding buffer across tasks") {
  const Network model = random_net(1, {3, 5, 4}, Activation::kRelu, {2, 4});
  HerdingBuffer b;
  b.capacity = 10;
  std::vector<int> t1(12, 0);
  std::fill(t1.begin() + 6, t1.end(), 1);
  buffer_update_herding(b, model, labelled(t1, 3, 5, 4));
  REQUIRE(b.classes.size() == 2);
  CHECK(b.classes[0].x.rows() == 5);
  CHECK(b.classes[1].x.rows() == 5);
  const Tensor first0 = b.classes[0].x;

  std::vector<int> t2(12, 2);
  std::fill(t2.begin() + 6, t2.end(), 3);
  buffer_update_herding(b, model, labelled(t2, 3, 6, 4));
  CHECK(b.size() == 10);
  CHECK(b.classes[0].x.rows() == 3);
  CHECK(b.classes[3].x.rows() == 2);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(b.classes[0].x(r, c) == first0(r, c));
  }
  CHECK_THROWS_AS(buffer_update_herding(b, model, labelled(t2, 3, 6, 4)), ArgumentError);

  HerdingBuffer big;
  big.capacity = 100;
  buffer_update_herding(big, model, labelled(t1, 3, 5, 4));
  CHECK(big.size() == 12);
}

TEST_CASE("reservoir keeps everything below capacity") {
  ReservoirBuffer b;
  b.capacity = 10;
  Rng rng(1);
  for (int i = 0; i < 7; ++i) {
    const std::vector<double> x{static_cast<double>(i)};
    reservoir_update(b, x, i, {}, rng);
  }
  CHECK(b.size() == 7);
  CHECK(b.seen == 7);
  for (int i = 0; i < 7; ++i) CHECK(b.slots[static_cast<std::size_t>(i)].y == i);
}

TEST_CASE("reservoir replacement frequency") {
  const std::size_t cap = 5;
  const int trials = 10000;
  int replaced = 0;
  for (int t = 0; t < trials; ++t) {
    ReservoirBuffer b;
    b.capacity = cap;
    Rng rng(derive_seed(42, Purpose::kBuffer, {static_cast<std::uint64_t>(t)}));
    for (std::size_t i = 0; i <= cap; ++i) {
      const std::vector<double> x{static_cast<double>(i)};
      reservoir_update(b, x, static_cast<int>(i), {}, rng);
    }
    for (const auto& s : b.slots) replaced += s.y == static_cast<int>(cap) ? 1 : 0;
  }
  const double freq = static_cast<double>(replaced) / trials;
  CHECK(std::abs(freq - 5.0 / 6.0) < 0.02);
}

TEST_CASE("stored logits are copies") {
  ReservoirBuffer b;
  b.capacity = 2;
  Rng rng(0);
  std::vector<double> z{1.0, 2.0};
  const std::vector<double> x{0.5};
  reservoir_update(b, x, 0, z, rng);
  z[0] = 99.0;
  CHECK(b.slots[0].z == std::vector<double>{1.0, 2.0});
  const BufferBatch batch = sample_reservoir(b, 4, rng);
  CHECK(batch.size() == 1);
  CHECK(batch.z(0, 0) == 1.0);
}

TEST_CASE("reservoir sampling draws distinct slots") {
  ReservoirBuffer b;
  b.capacity = 20;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{static_cast<double>(i)};
    reservoir_update(b, x, i, {}, rng);
  }
  const BufferBatch batch = sample_reservoir(b, 8, rng);
  const std::set<int> ys(batch.y.begin(), batch.y.end());
  CHECK(ys.size() == 8);
}

TEST_CASE("learning-rate schedule") {
  const Schedule s = Schedule::scaled(50, 0.1, 32);
  CHECK(s.milestones == std::vector<std::size_t>{24, 31, 40});
  CHECK(s.lr_at(0) == 0.1);
  CHECK(s.lr_at(24) == doctest::Approx(0.01));
  CHECK(s.lr_at(45) == doctest::Approx(1e-4));
  CHECK(Schedule::scaled(10, 0.1, 32).milestones == std::vector<std::size_t>{5, 6, 8});
  Schedule bad = s;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("run_task contracts") {
  const Dataset data = labelled({0, 1, 0, 1, 0, 1, 0, 1}, 3, 9, 2);
  const Network student = random_net(2, {3, 6, 2}, Activation::kRelu);
  MethodConfig cfg = default_method_config(MethodKind::kFlair);
  cfg.attack.epsilon = 0.1;
  cfg.attack.step_size = 0.025;
  cfg.attack.n_steps = 3;
  cfg.attack.clamp_range = std::pair{0.0, 1.0};
  TaskContext ctx;
  ctx.seed = 5;
  ctx.range = std::pair{0.0, 1.0};
  BufferState none = make_buffer(BufferKind::kNone, 0, 5);

  Schedule zero = Schedule::scaled(0, 0.1, 4);
  CHECK(run_task(student, nullptr, data, none, cfg, zero, nullptr, ctx).model.params().values == student.params().values);

  const Schedule sched = Schedule::scaled(3, 0.1, 4);
  const TaskResult a = run_task(student, nullptr, data, none, cfg, sched, nullptr, ctx);
  const TaskResult b = run_task(student, nullptr, data, none, cfg, sched, nullptr, ctx);
  CHECK(a.model.params().values == b.model.params().values);
  CHECK(a.log.size() == 3);
  CHECK_FALSE(a.model.params().values == student.params().values);

  // Without a teacher FLAIR trains on the new-slice term alone.
  MethodConfig bare = cfg;
  bare.alpha = 0;
  bare.beta = 0;
  CHECK(run_task(student, nullptr, data, none, bare, sched, nullptr, ctx).model.params().values ==
        a.model.params().values);

  // A teacher is read but never written.
  const Network grown = expand_head(a.model, 2, 0.1, 3);
  const Dataset next = labelled({2, 3, 2, 3, 2, 3}, 3, 10, 4);
  const std::uint64_t sum = a.model.checksum();
  run_task(grown, &a.model, next, none, cfg, sched, nullptr, ctx);
  CHECK(a.model.checksum() == sum);

  MethodConfig ewc = default_method_config(MethodKind::kREwcOn);
  ewc.attack = cfg.attack;
  CHECK_THROWS_AS(run_task(student, nullptr, data, none, ewc, sched, nullptr, ctx), ContractError);
  BufferState herd = make_buffer(BufferKind::kHerding, 4, 1);
  CHECK_THROWS_AS(run_task(student, nullptr, data, herd, cfg, sched, nullptr, ctx), ConfigError);
}

TEST_CASE("non-finite losses abort with the task, epoch and batch") {
  Dataset data = labelled({0, 1, 0, 1}, 2, 1, 2);
  data.range.reset();
  std::vector<Layer> layers{{Tensor::matrix({{1e308, 1e308}, {-1e308, -1e308}}), Tensor({2}), Activation::kIdentity}};
  const Network net(2, layers, {2});
  MethodConfig cfg = default_method_config(MethodKind::kPgdAt);
  TaskContext ctx;
  BufferState none = make_buffer(BufferKind::kNone, 0, 0);
  try {
    for (double& v : data.inputs.data()) v = 10.0;
    run_task(net, nullptr, data, none, cfg, Schedule::scaled(1, 0.1, 2), nullptr, ctx);
    FAIL("expected a numeric abort");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("task 1, epoch 1, batch 0") != std::string::npos);
  }
}

TEST_CASE("reservoir capacity is constant across a task sequence") {
  Network student = random_net(4, {3, 6, 2}, Activation::kRelu);
  MethodConfig cfg = default_method_config(MethodKind::kRDer);
  cfg.attack.epsilon = 0.05;
  cfg.attack.step_size = 0.02;
  cfg.attack.n_steps = 2;
  BufferState buf = make_buffer(BufferKind::kReservoirWithLogits, 10, 3);
  TaskContext ctx;
  ctx.seed = 3;
  for (std::size_t t = 0; t < 5; ++t) {
    if (t > 0) student = expand_head(student, 2, 0.1, t);
    const int lo = static_cast<int>(2 * t);
    ctx.task_index = t;
    const Dataset data = labelled({lo, lo + 1, lo, lo + 1, lo, lo + 1, lo, lo + 1}, 3, 50 + t, 2 * t + 2);
    student = run_task(student, nullptr, data, buf, cfg, Schedule::scaled(2, 0.05, 4), nullptr, ctx).model;
    CHECK(buf.capacity() == 10);
    CHECK(buf.size() <= 10);
  }
  CHECK(buf.size() == 10);
}

TEST_CASE("task log appends with a single header") {
  const std::string dir = temp_dir("tasklog");
  const std::string path = dir + "/log.csv";
  append_task_log(path, {{1, 1, 0.5, 50, 25}});
  append_task_log(path, {{2, 1, 0.25, 75, 30}});
  const std::string text = read_file(path);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.rfind("task,epoch,train_loss,clean_acc,robust_acc\n", 0) == 0);
}

}  // TEST_SUITE
