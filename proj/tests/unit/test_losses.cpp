#include "arcil/losses.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace arcil;
using namespace arcil::testing;
namespace L = arcil::losses;

namespace {

// Central-difference check of d(loss)/d(a) for a loss of one logits input.
double logits_grad_error(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& a) {
  ad::Tape tape;
  const ad::Var v = tape.variable(a);
  const ad::Var out = f(v);
  tape.backward(out);
  const Tensor g = v.grad();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Tensor up = a, down = a;
    up[i] += 1e-4;
    down[i] -= 1e-4;
    ad::Tape t1, t2;
    const double fu = f(t1.constant(up)).value().item();
    const double fd = f(t2.constant(down)).value().item();
    worst = std::max(worst, rel_err(g[i], (fu - fd) / 2e-4));
  }
  return worst;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("cross-entropy examples") {
  CHECK(L::ce(Tensor::matrix({{0, 0}}), std::vector<int>{0}) == doctest::Approx(std::log(2.0)));
  const double sat = L::ce(Tensor::matrix({{1000, 0}}), std::vector<int>{0});
  CHECK(std::isfinite(sat));
  CHECK(sat == doctest::Approx(0.0));
  const double a = L::ce(Tensor::matrix({{1, 2, 3}}), std::vector<int>{2});
  const double b = L::ce(Tensor::matrix({{0.5, -1, 0}}), std::vector<int>{0});
  CHECK(L::ce(Tensor::matrix({{1, 2, 3}, {0.5, -1, 0}}), std::vector<int>{2, 0}) == doctest::Approx((a + b) / 2));
}

TEST_CASE("binary cross-entropy examples") {
  CHECK(L::bce_multilabel(Tensor::matrix({{0}}), Tensor::matrix({{1}})) == doctest::Approx(std::log(2.0)));
  CHECK(L::bce_multilabel(Tensor::matrix({{0}}), Tensor::matrix({{0.5}})) == doctest::Approx(std::log(2.0)));
  // Sigmoid targets are a stationary point in the logits.
  const Tensor z = Tensor::matrix({{0.3, -2.0, 1.5}});
  ad::Tape tape;
  const ad::Var v = tape.variable(z);
  tape.backward(L::bce_multilabel(v, ad::sigmoid(z)));
  for (double g : v.grad().values()) CHECK(g == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("KL divergence examples") {
  const Tensor t = Tensor::matrix({{0.2, -1, 3}});
  CHECK(L::kl_div(t, t) == 0.0);
  const Tensor p = Tensor::matrix({{1, 0, -1}});
  const Tensor shifted = Tensor::matrix({{5.2, 4, 8}});
  CHECK(L::kl_div(shifted, p) == doctest::Approx(L::kl_div(t, p)).epsilon(1e-12));
  const double expect = (2.0 / 3) * std::log(4.0 / 3) + (1.0 / 3) * std::log(2.0 / 3);
  CHECK(L::kl_div(Tensor::matrix({{std::log(2.0), 0}}), Tensor::matrix({{0, 0}})) == doctest::Approx(expect));
  CHECK(expect == doctest::Approx(0.056633).epsilon(1e-5));
}

TEST_CASE("mean squared error examples") {
  const Tensor a = Tensor::matrix({{1, 1}});
  const Tensor b = Tensor::matrix({{0, 0}});
  CHECK(L::mse(a, a) == 0.0);
  CHECK(L::mse(a, b) == 1.0);
  Rng rng(1);
  const Tensor c = random_tensor({3, 4}, rng);
  const Tensor d = random_tensor({3, 4}, rng);
  CHECK(L::mse(c, d) == L::mse(d, c));
}

TEST_CASE("asymmetric cross-entropy examples") {
  const Tensor z = Tensor::matrix({{0.4, -0.2, 1.1}, {2, 0, -1}});
  const std::vector<int> y{2, 0};
  CHECK(L::ace(z, y, {0, 1, 2}) == L::ce(z, y));
  CHECK(L::ace(Tensor::matrix({{0, 0, 100}}), std::vector<int>{0}, {0, 1}) == doctest::Approx(std::log(2.0)));
  CHECK(L::ace(Tensor::matrix({{3, -1, 7}}), std::vector<int>{1}, {1}) == doctest::Approx(0.0));
}

TEST_CASE("losses are nonnegative and stable at large logits") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = trial < 10 ? 5.0 : 1e4;
    const Tensor a = random_tensor({4, 5}, rng, -scale, scale);
    const Tensor b = random_tensor({4, 5}, rng, -scale, scale);
    const Tensor t = random_tensor({4, 5}, rng, 0.0, 1.0);
    const auto y = random_labels(4, 5, rng);
    for (double v : {L::ce(a, y), L::bce_multilabel(a, t), L::kl_div(a, b), L::mse(a, b), L::ace(a, y, {0, 1, 2, 3, 4})}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("batch permutation leaves ce and bce unchanged") {
  Rng rng(9);
  const Tensor z = random_tensor({5, 3}, rng, -3, 3);
  const Tensor t = random_tensor({5, 3}, rng, 0, 1);
  const auto y = random_labels(5, 3, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<int> yp;
  for (std::size_t i : perm) yp.push_back(y[i]);
  CHECK(L::ce(z.gather_rows(perm), yp) == doctest::Approx(L::ce(z, y)).epsilon(1e-14));
  CHECK(L::bce_multilabel(z.gather_rows(perm), t.gather_rows(perm)) ==
        doctest::Approx(L::bce_multilabel(z, t)).epsilon(1e-14));
}

TEST_CASE("loss gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Tensor a = random_tensor({3, 4}, rng, -3, 3);
    const Tensor b = random_tensor({3, 4}, rng, -3, 3);
    const Tensor t = random_tensor({3, 4}, rng, 0, 1);
    const auto y = random_labels(3, 4, rng);
    std::set<int> present(y.begin(), y.end());
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::ce(v, y); }, a) < 1e-4);
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::bce_multilabel(v, t); }, a) < 1e-4);
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::ace(v, y, present); }, a) < 1e-4);
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::kl_div(v, v.tape().constant(b)); }, a) < 1e-4);
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::kl_div(v.tape().constant(b), v); }, a) < 1e-4);
    CHECK(logits_grad_error([&](const ad::Var& v) { return L::mse(v, v.tape().constant(b)); }, a) < 1e-4);
  }
}

TEST_CASE("task column ranges and one-hot slices") {
  const std::vector<std::size_t> bounds{2, 4, 6};
  CHECK(L::task_columns(bounds, 0, 1).begin == 0);
  CHECK(L::task_columns(bounds, 0, 1).end == 2);
  CHECK(L::task_columns(bounds, 1, 3).begin == 2);
  CHECK(L::task_columns(bounds, 1, 3).end == 6);
  const Tensor oh = L::one_hot_slice(std::vector<int>{3, 0}, 2, 2);
  CHECK(oh == Tensor::matrix({{0, 1}, {0, 0}}));
}

}  // TEST_SUITE
