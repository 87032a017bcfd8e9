#pragma once

#include "arcil/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace arcil {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

struct Dataset {
  Tensor inputs{std::vector<std::size_t>{0, 0}};  // [n, d]
  std::vector<int> labels;
  std::size_t n_classes = 0;
  std::optional<std::pair<double, double>> range;
  std::optional<ImageShape> image_shape;  // HWC layout of each row

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols(); }
  bool empty() const { return labels.empty(); }

  /// Checks label bounds, the declared range and the image shape.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Rows of `other` appended after this dataset's rows.
  Dataset merged(const Dataset& other) const;
};

/// Class means on a seeded sphere of radius `separation`, unit isotropic
/// noise, then one global affine map into [0, 1]^d. Rows are class-major.
Dataset gen_gaussian_tasks(std::size_t n_classes, std::size_t d, double separation,
                           std::size_t n_per_class, std::uint64_t seed);

/// Same generator drawing n_train + n_test per class under a shared affine
/// map; the first n_train draws of each class form the training split.
std::pair<Dataset, Dataset> gen_gaussian_split(std::size_t n_classes, std::size_t d, double separation,
                                               std::size_t n_train, std::size_t n_test, std::uint64_t seed);

/// Reads `label,f0,f1,...` rows; a `.gz` suffix is read through zlib. Features
/// must lie in [0, 1].
Dataset load_csv_dataset(const std::string& path);
void save_csv_dataset(const Dataset& data, const std::string& path);

enum class AugmentOp { kShift, kFlipH, kGaussianNoise, kScale, kCutout };

std::string augment_op_name(AugmentOp op);
AugmentOp parse_augment_op(const std::string& name);
bool is_image_op(AugmentOp op);

struct AugmentPolicy {
  std::size_t n_ops = 2;
  double magnitude = 0.5;
  std::vector<AugmentOp> op_pool{AugmentOp::kGaussianNoise, AugmentOp::kScale};
  std::uint64_t seed = 0;
};

/// Applies n_ops uniformly drawn ops per row at the policy magnitude; the
/// result is clamped to `range` when given. Magnitude 0 is the identity.
Tensor augment(const Tensor& x, const AugmentPolicy& policy, const std::optional<ImageShape>& image_shape,
               const std::optional<std::pair<double, double>>& range);

/// Mirrors every row left-to-right.
Tensor flip_h(const Tensor& x, const ImageShape& shape);

}  // namespace arcil
