#include "arcil/data.hpp"
#include "arcil/error.hpp"
#include "arcil/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace arcil;
using namespace arcil::testing;

namespace {

std::string write_text(const std::string& name, const std::string& text) {
  const std::string path = temp_dir("data_" + name) + "/" + name;
  std::ofstream(path) << text;
  return path;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    load_csv_dataset(write_text("bad.csv", text));
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_SUITE("data-augment") {

TEST_CASE("gaussian generator shape, balance and determinism") {
  const Dataset a = gen_gaussian_tasks(4, 6, 3.0, 25, 11);
  const Dataset b = gen_gaussian_tasks(4, 6, 3.0, 25, 11);
  CHECK(a.size() == 100);
  CHECK(a.dim() == 6);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  for (int c = 0; c < 4; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 25);
  for (double v : a.inputs.values()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK_NOTHROW(a.validate());
  CHECK_FALSE(gen_gaussian_tasks(4, 6, 3.0, 25, 12).inputs == a.inputs);
}

TEST_CASE("split generator keeps the requested counts") {
  const auto [train, test] = gen_gaussian_split(3, 4, 5.0, 20, 7, 1);
  CHECK(train.size() == 60);
  CHECK(test.size() == 21);
  for (int c = 0; c < 3; ++c) CHECK(std::count(test.labels.begin(), test.labels.end(), c) == 7);
}

TEST_CASE("zero separation leaves classifiers at chance") {
  const std::size_t k = 10;
  const Dataset data = gen_gaussian_tasks(k, 8, 0.0, 1000, 3);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Network net = random_net(seed, {8, 16, k}, Activation::kRelu, {}, 3.0);
    CHECK(std::abs(accuracy(net, data) / 100.0 - 1.0 / k) < 0.03);
  }
}

TEST_CASE("csv round trip, including gzip") {
  const Dataset a = gen_gaussian_tasks(3, 4, 2.0, 5, 1);
  const std::string dir = temp_dir("csv_roundtrip");
  for (const std::string name : {"/d.csv", "/d.csv.gz"}) {
    save_csv_dataset(a, dir + name);
    const Dataset b = load_csv_dataset(dir + name);
    CHECK(b.inputs == a.inputs);
    CHECK(b.labels == a.labels);
    CHECK(b.n_classes == 3);
  }
}

TEST_CASE("csv examples and errors") {
  const Dataset two = load_csv_dataset(write_text("two.csv", "label,f0,f1\n0,0.1,0.2\n1,0.3,0.4\n"));
  CHECK(two.size() == 2);
  CHECK(two.dim() == 2);
  CHECK(two.inputs(1, 0) == 0.3);

  CHECK(parse_error_line("label,f0,f1\n0,0.1,0.2\n1,0.3\n") == 3);
  CHECK(parse_error_line("label,f0\n0,abc\n") == 2);
  CHECK(parse_error_line("label,f0\n0,1.5\n") == 2);
  CHECK(parse_error_line("label,f0\n-1,0.5\n") == 2);
  CHECK(parse_error_line("x,f0\n0,0.5\n") == 1);

  const Dataset empty = load_csv_dataset(write_text("empty.csv", "label,f0,f1\n"));
  CHECK(empty.empty());
  CHECK(empty.dim() == 2);
  const Network net = random_net(1, {2, 3}, Activation::kRelu);
  CHECK_THROWS_AS(accuracy(net, empty), UndefinedValueError);
  CHECK_THROWS(load_csv_dataset("/nonexistent/file.csv"));
}

TEST_CASE("zero magnitude is the identity") {
  Rng rng(1);
  const Tensor x = random_tensor({4, 12}, rng, 0, 1);
  AugmentPolicy p;
  p.magnitude = 0.0;
  p.op_pool = {AugmentOp::kGaussianNoise, AugmentOp::kScale, AugmentOp::kShift, AugmentOp::kFlipH, AugmentOp::kCutout};
  CHECK(augment(x, p, ImageShape{2, 2, 3}, std::pair{0.0, 1.0}) == x);
}

TEST_CASE("horizontal flip is an involution") {
  Rng rng(2);
  const ImageShape shape{3, 4, 2};
  const Tensor x = random_tensor({5, shape.size()}, rng, 0, 1);
  const Tensor once = flip_h(x, shape);
  CHECK_FALSE(once == x);
  CHECK(flip_h(once, shape) == x);
  // Pixel (0, 0) channel 1 lands at (0, 3).
  CHECK(once(0, 3 * 2 + 1) == x(0, 1));
}

TEST_CASE("augmentation keeps shape and range over random draws") {
  Rng rng(3);
  const ImageShape shape{4, 4, 1};
  AugmentPolicy p;
  p.op_pool = {AugmentOp::kGaussianNoise, AugmentOp::kScale, AugmentOp::kShift, AugmentOp::kFlipH, AugmentOp::kCutout};
  for (int draw = 0; draw < 1000; ++draw) {
    const Tensor x = random_tensor({2, 16}, rng, 0, 1);
    p.seed = static_cast<std::uint64_t>(draw);
    p.magnitude = uniform(rng, 0.0, 1.0);
    p.n_ops = 1 + draw % 3;
    const Tensor y = augment(x, p, shape, std::pair{0.0, 1.0});
    REQUIRE(y.shape() == x.shape());
    for (double v : y.values()) REQUIRE((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("augmentation is deterministic under a fixed seed") {
  Rng rng(4);
  const Tensor x = random_tensor({3, 8}, rng, 0, 1);
  AugmentPolicy p;
  p.seed = 9;
  CHECK(augment(x, p, std::nullopt, std::pair{0.0, 1.0}) == augment(x, p, std::nullopt, std::pair{0.0, 1.0}));
}

TEST_CASE("image ops need an image shape") {
  Rng rng(5);
  const Tensor x = random_tensor({1, 4}, rng, 0, 1);
  AugmentPolicy p;
  p.op_pool = {AugmentOp::kFlipH};
  CHECK_THROWS_AS(augment(x, p, std::nullopt, std::nullopt), ConfigError);
  p.op_pool.clear();
  CHECK_THROWS_AS(augment(x, p, std::nullopt, std::nullopt), ConfigError);
  CHECK(parse_augment_op(augment_op_name(AugmentOp::kCutout)) == AugmentOp::kCutout);
}

TEST_CASE("dataset validation and merging") {
  Dataset d;
  d.inputs = Tensor::matrix({{0.1}, {0.2}});
  d.labels = {0, 2};
  d.n_classes = 2;
  CHECK_THROWS_AS(d.validate(), LabelError);
  d.n_classes = 3;
  CHECK_NOTHROW(d.validate());
  const Dataset m = d.merged(d.subset(std::vector<std::size_t>{1}));
  CHECK(m.size() == 3);
  CHECK(m.labels.back() == 2);
}

}  // TEST_SUITE
