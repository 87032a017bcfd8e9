#include "arcil/checkpoint.hpp"

#include "arcil/digest.hpp"
#include "arcil/error.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace arcil {

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + tmp + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw Error("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

namespace {

std::string encode_blob(const std::vector<double>& values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

std::vector<double> decode_blob(const std::string& bytes) {
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + static_cast<std::size_t>(b)]))
              << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Reads "key v..." and checks the key.
std::istringstream expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw IntegrityError("checkpoint manifest ends before '" + key + "'");
  std::istringstream ls(line);
  std::string got;
  ls >> got;
  if (got != key) throw IntegrityError("checkpoint manifest expected '" + key + "', found '" + got + "'");
  return ls;
}

template <typename T>
T read_value(std::istringstream& ls, const std::string& key) {
  T v{};
  if (!(ls >> v)) throw IntegrityError("checkpoint manifest has a malformed '" + key + "' line");
  return v;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  const ParamView p = net.params();
  const std::string blob = encode_blob(p.values);
  std::ostringstream m;
  m << "arcil-checkpoint\n";
  m << "version " << kCheckpointVersion << "\n";
  m << "input_dim " << net.input_dim() << "\n";
  m << "layers " << net.layers().size() << "\n";
  for (const auto& l : net.layers()) m << "layer " << l.out_dim() << " " << l.in_dim() << " " << activation_name(l.activation) << "\n";
  m << "head_boundaries";
  for (std::size_t b : net.head_boundaries()) m << " " << b;
  m << "\n";
  m << "seed " << net.seed() << "\n";
  m << "blob_values " << p.values.size() << "\n";
  m << "blob_sha256 " << sha256_hex(blob) << "\n";
  write_file_atomic(path + ".bin", blob);
  write_file_atomic(path, m.str());
}

Network load_checkpoint(const std::string& path) {
  std::istringstream in(read_bytes(path));
  std::string magic;
  if (!std::getline(in, magic) || magic != "arcil-checkpoint") throw IntegrityError("'" + path + "' is not a checkpoint");
  auto vl = expect_line(in, "version");
  const int version = read_value<int>(vl, "version");
  if (version != kCheckpointVersion) {
    throw IntegrityError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  }
  auto il = expect_line(in, "input_dim");
  const auto input_dim = read_value<std::size_t>(il, "input_dim");
  auto ll = expect_line(in, "layers");
  const auto n_layers = read_value<std::size_t>(ll, "layers");
  struct Shape {
    std::size_t out, in;
    Activation act;
  };
  std::vector<Shape> shapes;
  std::size_t expected = 0;
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto ls = expect_line(in, "layer");
    const auto out = read_value<std::size_t>(ls, "layer");
    const auto inn = read_value<std::size_t>(ls, "layer");
    const auto act = read_value<std::string>(ls, "layer");
    Activation a;
    try {
      a = parse_activation(act);
    } catch (const Error& e) {
      throw IntegrityError(std::string("checkpoint layer: ") + e.what());
    }
    shapes.push_back({out, inn, a});
    expected += out * inn + out;
  }
  auto hl = expect_line(in, "head_boundaries");
  std::vector<std::size_t> boundaries;
  for (std::size_t b; hl >> b;) boundaries.push_back(b);
  auto sl = expect_line(in, "seed");
  const auto seed = read_value<std::uint64_t>(sl, "seed");
  auto bl = expect_line(in, "blob_values");
  const auto n_values = read_value<std::size_t>(bl, "blob_values");
  auto dl = expect_line(in, "blob_sha256");
  const auto digest = read_value<std::string>(dl, "blob_sha256");

  if (n_values != expected) {
    throw IntegrityError("manifest declares " + std::to_string(n_values) + " values but its layers need " +
                         std::to_string(expected));
  }
  const std::string blob = read_bytes(path + ".bin");
  if (blob.size() != n_values * 8) {
    throw IntegrityError("checkpoint blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                         std::to_string(n_values * 8));
  }
  if (sha256_hex(blob) != digest) throw IntegrityError("checkpoint blob does not match its recorded digest");
  const std::vector<double> values = decode_blob(blob);

  std::vector<Layer> layers;
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    Layer l;
    l.weight = Tensor({s.out, s.in}, std::vector<double>(values.begin() + static_cast<long>(offset),
                                                         values.begin() + static_cast<long>(offset + s.out * s.in)));
    offset += s.out * s.in;
    l.bias = Tensor({s.out}, std::vector<double>(values.begin() + static_cast<long>(offset),
                                                 values.begin() + static_cast<long>(offset + s.out)));
    offset += s.out;
    l.activation = s.act;
    layers.push_back(std::move(l));
  }
  try {
    return Network(input_dim, std::move(layers), std::move(boundaries), seed);
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("checkpoint shapes disagree: ") + e.what());
  }
}

}  // namespace arcil
