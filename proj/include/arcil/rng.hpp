#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace arcil {

// What a derived stream is used for. Values are part of the seed derivation,
// so never renumber them.
enum class Purpose : std::uint64_t {
  kInit = 1,
  kHeadInit = 2,
  kShuffle = 3,
  kAttack = 4,
  kAugment = 5,
  kEvalAttack = 6,
  kFlatness = 7,
  kLandscape = 8,
  kBuffer = 9,
  kData = 10,
  kRestart = 11,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed derivation: the result depends only on the root and the
/// coordinates, so adding epochs or tasks never shifts earlier streams.
std::uint64_t derive_seed(std::uint64_t root, Purpose purpose,
                          std::initializer_list<std::uint64_t> coords = {});

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace arcil
