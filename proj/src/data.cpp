#include "arcil/data.hpp"

#include "arcil/error.hpp"
#include "arcil/rng.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace arcil {

void Dataset::validate() const {
  if (inputs.rank() != 2) throw DimensionError("dataset inputs must be [n, d]");
  if (inputs.rows() != labels.size()) {
    throw DimensionError("dataset has " + std::to_string(inputs.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside declared " + std::to_string(n_classes) + " classes");
    }
  }
  if (range) {
    for (double v : inputs.data()) {
      if (!(v >= range->first && v <= range->second)) throw ArgumentError("dataset value outside declared range");
    }
  }
  if (image_shape && image_shape->size() != inputs.cols()) {
    throw DimensionError("image shape does not match feature count");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out = *this;
  out.inputs = inputs.gather_rows(indices);
  out.labels.clear();
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

Dataset Dataset::merged(const Dataset& other) const {
  if (other.empty()) return *this;
  if (empty()) {
    Dataset out = other;
    out.n_classes = std::max(n_classes, other.n_classes);
    return out;
  }
  Dataset out = *this;
  out.inputs = Tensor::concat_rows(inputs, other.inputs);
  out.labels.insert(out.labels.end(), other.labels.begin(), other.labels.end());
  out.n_classes = std::max(n_classes, other.n_classes);
  return out;
}

namespace {

// Raw draws before the affine map, class-major.
struct RawGaussian {
  std::vector<double> values;
  std::vector<int> labels;
};

RawGaussian draw_gaussian(std::size_t n_classes, std::size_t d, double separation, std::size_t n_per_class,
                          std::uint64_t seed) {
  if (n_classes < 2) throw ArgumentError("gaussian tasks need at least two classes");
  if (d < 2) throw ArgumentError("gaussian tasks need d >= 2");
  if (!(separation >= 0.0)) throw ArgumentError("separation must be nonnegative");
  Rng mean_rng(derive_seed(seed, Purpose::kData, {0}));
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(d));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& v : m) {
      v = normal(mean_rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v = norm > 0 ? v / norm * separation : 0.0;
  }
  RawGaussian raw;
  raw.values.reserve(n_classes * n_per_class * d);
  for (std::size_t c = 0; c < n_classes; ++c) {
    Rng rng(derive_seed(seed, Purpose::kData, {1, c}));
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t j = 0; j < d; ++j) raw.values.push_back(means[c][j] + normal(rng));
      raw.labels.push_back(static_cast<int>(c));
    }
  }
  return raw;
}

void map_unit_interval(std::vector<double>& values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi - lo;
  for (double& v : values) v = span > 0 ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.5;
}

}  // namespace

Dataset gen_gaussian_tasks(std::size_t n_classes, std::size_t d, double separation, std::size_t n_per_class,
                           std::uint64_t seed) {
  RawGaussian raw = draw_gaussian(n_classes, d, separation, n_per_class, seed);
  map_unit_interval(raw.values);
  Dataset out;
  out.inputs = Tensor({raw.labels.size(), d}, std::move(raw.values));
  out.labels = std::move(raw.labels);
  out.n_classes = n_classes;
  out.range = std::pair{0.0, 1.0};
  return out;
}

std::pair<Dataset, Dataset> gen_gaussian_split(std::size_t n_classes, std::size_t d, double separation,
                                               std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  const Dataset all = gen_gaussian_tasks(n_classes, d, separation, n_train + n_test, seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t base = c * (n_train + n_test);
    for (std::size_t i = 0; i < n_train; ++i) train_idx.push_back(base + i);
    for (std::size_t i = 0; i < n_test; ++i) test_idx.push_back(base + n_train + i);
  }
  return {all.subset(train_idx), all.subset(test_idx)};
}

// ---- CSV --------------------------------------------------------------------

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_all(const std::string& path) {
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw ArgumentError("cannot open '" + path + "'");
    std::string out;
    char buf[1 << 15];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw ArgumentError("gzip stream error in '" + path + "'");
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

template <typename T>
bool parse_cell(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !s.empty();
}

}  // namespace

Dataset load_csv_dataset(const std::string& path) {
  const std::string text = read_all(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t d = 0;
  bool have_header = false;
  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (!have_header) {
      if (cells.empty() || cells[0] != "label" || cells.size() < 2) {
        throw ParseError("header must read label,f0,f1,...", line_no);
      }
      d = cells.size() - 1;
      have_header = true;
      continue;
    }
    if (cells.size() != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " columns, found " + std::to_string(cells.size()), line_no);
    }
    int label = 0;
    if (!parse_cell(cells[0], label) || label < 0) throw ParseError("bad label '" + cells[0] + "'", line_no);
    for (std::size_t j = 1; j <= d; ++j) {
      double v = 0.0;
      if (!parse_cell(cells[j], v)) throw ParseError("non-numeric cell '" + cells[j] + "'", line_no);
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError("value " + cells[j] + " outside [0, 1]", line_no);
      values.push_back(v);
    }
    labels.push_back(label);
  }
  if (!have_header) throw ParseError("missing header", line_no == 0 ? 1 : line_no);
  Dataset out;
  out.inputs = Tensor({labels.size(), d}, std::move(values));
  out.n_classes = labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  out.labels = std::move(labels);
  out.range = std::pair{0.0, 1.0};
  return out;
}

void save_csv_dataset(const Dataset& data, const std::string& path) {
  std::string out = "label";
  for (std::size_t j = 0; j < data.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  char buf[40];
  for (std::size_t r = 0; r < data.size(); ++r) {
    out += std::to_string(data.labels[r]);
    for (double v : data.inputs.row(r)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw ArgumentError("cannot write '" + path + "'");
    const int n = gzwrite(f, out.data(), static_cast<unsigned>(out.size()));
    gzclose(f);
    if (n != static_cast<int>(out.size())) throw ArgumentError("short gzip write to '" + path + "'");
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write '" + path + "'");
  f << out;
  if (!f) throw ArgumentError("write failed for '" + path + "'");
}

// ---- augmentation -------------------------------------------------------------

std::string augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::kShift: return "shift";
    case AugmentOp::kFlipH: return "flip-h";
    case AugmentOp::kGaussianNoise: return "gaussian-noise";
    case AugmentOp::kScale: return "scale";
    case AugmentOp::kCutout: return "cutout";
  }
  return "shift";
}

AugmentOp parse_augment_op(const std::string& name) {
  if (name == "shift") return AugmentOp::kShift;
  if (name == "flip-h") return AugmentOp::kFlipH;
  if (name == "gaussian-noise") return AugmentOp::kGaussianNoise;
  if (name == "scale") return AugmentOp::kScale;
  if (name == "cutout") return AugmentOp::kCutout;
  throw ConfigError("unknown augmentation op '" + name + "'");
}

bool is_image_op(AugmentOp op) {
  return op == AugmentOp::kShift || op == AugmentOp::kFlipH || op == AugmentOp::kCutout;
}

namespace {

void flip_row(std::span<double> row, const ImageShape& s) {
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width / 2; ++x) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        std::swap(row[(y * s.width + x) * s.channels + c], row[(y * s.width + (s.width - 1 - x)) * s.channels + c]);
      }
    }
  }
}

void apply_op(AugmentOp op, std::span<double> row, double magnitude, const std::optional<ImageShape>& shape,
              double lo, double hi, Rng& rng) {
  switch (op) {
    case AugmentOp::kGaussianNoise: {
      const double sigma = 0.1 * magnitude * (hi - lo);
      for (double& v : row) v += sigma * normal(rng);
      break;
    }
    case AugmentOp::kScale: {
      const double mid = 0.5 * (lo + hi);
      const double factor = 1.0 + magnitude * uniform(rng, -0.5, 0.5);
      for (double& v : row) v = mid + (v - mid) * factor;
      break;
    }
    case AugmentOp::kFlipH:
      if (uniform(rng, 0.0, 1.0) < magnitude) flip_row(row, *shape);
      break;
    case AugmentOp::kShift: {
      const ImageShape& s = *shape;
      const double reach = magnitude * std::max<double>(1.0, static_cast<double>(s.width) / 4.0);
      const long dx = std::lround(reach * uniform(rng, -1.0, 1.0));
      const long dy = std::lround(reach * uniform(rng, -1.0, 1.0));
      if (dx == 0 && dy == 0) break;
      std::vector<double> src(row.begin(), row.end());
      for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
          const long sy = static_cast<long>(y) - dy, sx = static_cast<long>(x) - dx;
          const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(s.height) && sx < static_cast<long>(s.width);
          for (std::size_t c = 0; c < s.channels; ++c) {
            row[(y * s.width + x) * s.channels + c] =
                inside ? src[(static_cast<std::size_t>(sy) * s.width + static_cast<std::size_t>(sx)) * s.channels + c] : lo;
          }
        }
      }
      break;
    }
    case AugmentOp::kCutout: {
      const ImageShape& s = *shape;
      const auto side = static_cast<std::size_t>(std::lround(magnitude * static_cast<double>(std::min(s.height, s.width)) / 2.0));
      if (side == 0) break;
      const auto cy = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(s.height)));
      const auto cx = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(s.width)));
      const std::size_t y0 = cy >= side / 2 ? cy - side / 2 : 0, x0 = cx >= side / 2 ? cx - side / 2 : 0;
      for (std::size_t y = y0; y < std::min(s.height, y0 + side); ++y) {
        for (std::size_t x = x0; x < std::min(s.width, x0 + side); ++x) {
          for (std::size_t c = 0; c < s.channels; ++c) row[(y * s.width + x) * s.channels + c] = lo;
        }
      }
      break;
    }
  }
}

}  // namespace

Tensor augment(const Tensor& x, const AugmentPolicy& policy, const std::optional<ImageShape>& image_shape,
               const std::optional<std::pair<double, double>>& range) {
  if (policy.op_pool.empty()) throw ConfigError("augmentation pool is empty");
  if (!(policy.magnitude >= 0.0 && policy.magnitude <= 1.0)) throw ConfigError("augmentation magnitude must lie in [0, 1]");
  for (AugmentOp op : policy.op_pool) {
    if (is_image_op(op) && !image_shape) {
      throw ConfigError("augmentation op '" + augment_op_name(op) + "' needs image-shaped data");
    }
  }
  if (image_shape && image_shape->size() != x.cols()) throw DimensionError("image shape does not match row width");
  if (policy.magnitude == 0.0 || policy.n_ops == 0) return x;
  const double lo = range ? range->first : 0.0;
  const double hi = range ? range->second : 1.0;
  Tensor out = x;
  Rng rng(policy.seed);
  std::uniform_int_distribution<std::size_t> pick(0, policy.op_pool.size() - 1);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t k = 0; k < policy.n_ops; ++k) {
      apply_op(policy.op_pool[pick(rng)], row, policy.magnitude, image_shape, lo, hi, rng);
    }
    if (range) {
      for (double& v : row) v = std::clamp(v, lo, hi);
    }
  }
  return out;
}

Tensor flip_h(const Tensor& x, const ImageShape& shape) {
  if (shape.size() != x.cols()) throw DimensionError("image shape does not match row width");
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) flip_row(out.row(r), shape);
  return out;
}

}  // namespace arcil
