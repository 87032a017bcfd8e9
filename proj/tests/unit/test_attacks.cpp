#include "arcil/attacks.hpp"
#include "arcil/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace arcil;
using namespace arcil::testing;

namespace {

AttackConfig pgd_cfg(double eps, std::size_t steps, bool random_start, std::uint64_t seed = 0) {
  AttackConfig c;
  c.epsilon = eps;
  c.step_size = eps / 4;
  c.n_steps = steps;
  c.random_start = random_start;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("zero radius returns the input exactly") {
  const Network net = random_net(1, {4, 6, 3}, Activation::kRelu);
  Rng rng(2);
  const Tensor x = random_tensor({5, 4}, rng, 0.0, 1.0);
  const auto y = random_labels(5, 3, rng);
  AttackConfig c = pgd_cfg(0.0, 5, true);
  CHECK(pgd(net, x, y, c) == x);
  CHECK(fgsm(net, x, y, 0.0) == x);
}

TEST_CASE("one signed step on a two-class linear model") {
  const Network net = linear_net(Tensor::matrix({{1, 0}, {-1, 0}}));
  AttackConfig c = pgd_cfg(0.1, 1, false);
  c.step_size = 0.1;
  const std::vector<int> y{0};
  const Tensor adv = pgd(net, Tensor::matrix({{0, 0}}), y, c);
  CHECK(adv[0] == doctest::Approx(-0.1));
  CHECK(adv[1] == 0.0);
}

TEST_CASE("projection, clamp and best-iterate properties") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Network net = random_net(seed, {5, 8, 4}, Activation::kRelu, {2, 4}, 3.0);
    Rng rng(seed + 50);
    const Tensor x = random_tensor({6, 5}, rng, 0.0, 1.0);
    const auto y = random_labels(6, 4, rng);
    for (AttackObjective obj : {AttackObjective::kCe, AttackObjective::kKlVsClean, AttackObjective::kBceNewSlice}) {
      AttackConfig c = pgd_cfg(0.1, 7, false, seed);
      c.objective = obj;
      c.clamp_range = std::pair{0.0, 1.0};
      const Tensor adv = pgd(net, x, y, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::abs(adv[i] - x[i]) <= 0.1 + 1e-12);
        CHECK(adv[i] >= 0.0);
        CHECK(adv[i] <= 1.0);
      }
      const Tensor before = attack_objective(net, x, x, y, obj);
      const Tensor after = attack_objective(net, adv, x, y, obj);
      for (std::size_t r = 0; r < 6; ++r) CHECK(after[r] >= before[r]);
    }
  }
}

TEST_CASE("same seed gives the same perturbation") {
  const Network net = random_net(4, {5, 8, 3}, Activation::kTanh);
  Rng rng(5);
  const Tensor x = random_tensor({4, 5}, rng, 0.0, 1.0);
  const auto y = random_labels(4, 3, rng);
  AttackConfig c = pgd_cfg(0.05, 5, true, 77);
  c.n_restarts = 3;
  CHECK(pgd(net, x, y, c) == pgd(net, x, y, c));
  AttackConfig other = c;
  other.seed = 78;
  CHECK_FALSE(pgd(net, x, y, c) == pgd(net, x, y, other));
}

TEST_CASE("fgsm is one full-radius pgd step") {
  const Network net = random_net(6, {3, 5, 2}, Activation::kRelu);
  Rng rng(7);
  const Tensor x = random_tensor({4, 3}, rng, 0.0, 1.0);
  const auto y = random_labels(4, 2, rng);
  AttackConfig c = pgd_cfg(0.2, 1, false);
  c.step_size = 0.2;
  CHECK(fgsm(net, x, y, 0.2) == pgd(net, x, y, c));
}

TEST_CASE("fgsm reaches the best corner of a binary linear model") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t d = 1 + seed % 4;
    Layer l{random_tensor({2, d}, rng), random_tensor({2}, rng), Activation::kIdentity};
    const Network net(d, {l}, {2});
    const Tensor x = random_tensor({1, d}, rng);
    const std::vector<int> y{static_cast<int>(seed % 2)};
    const double eps = 0.3;
    const double got = attack_objective(net, fgsm(net, x, y, eps), x, y, AttackObjective::kCe)[0];
    double best = -1.0;
    for (std::size_t mask = 0; mask < (1u << d); ++mask) {
      Tensor c = x;
      for (std::size_t k = 0; k < d; ++k) c[k] += (mask >> k & 1) ? eps : -eps;
      best = std::max(best, attack_objective(net, c, x, y, AttackObjective::kCe)[0]);
    }
    CHECK(got >= best - 1e-12);
  }
}

TEST_CASE("rational radius literals") {
  CHECK(parse_real_literal("8/255") == 8.0 / 255.0);
  CHECK(parse_real_literal("0.1") == 0.1);
  CHECK(parse_real_literal("1e-3") == 1e-3);
  CHECK_THROWS(parse_real_literal("1/0"));
  CHECK_THROWS(parse_real_literal("abc"));
}

TEST_CASE("invalid attack configs are rejected") {
  const Network net = random_net(1, {2, 2}, Activation::kRelu);
  const std::vector<int> y{0};
  AttackConfig c = pgd_cfg(-0.1, 1, false);
  CHECK_THROWS(pgd(net, Tensor::matrix({{0, 0}}), y, c));
  c = pgd_cfg(0.1, 1, false);
  c.n_restarts = 0;
  CHECK_THROWS(pgd(net, Tensor::matrix({{0, 0}}), y, c));
}

}  // TEST_SUITE
