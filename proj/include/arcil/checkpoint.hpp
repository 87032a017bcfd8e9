#pragma once

#include "arcil/network.hpp"

#include <string>

namespace arcil {

inline constexpr int kCheckpointVersion = 1;

/// Writes a text manifest at `path` and the parameters as little-endian
/// doubles at `path + ".bin"`. Both files are replaced atomically.
void save_checkpoint(const Network& net, const std::string& path);

/// Throws IntegrityError when the manifest and blob disagree in version,
/// length, shapes, head boundaries or content hash.
Network load_checkpoint(const std::string& path);

/// Writes through a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace arcil
