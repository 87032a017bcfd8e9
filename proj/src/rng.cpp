#include "arcil/rng.hpp"

namespace arcil {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, Purpose purpose,
                          std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(root ^ 0x6A09E667F3BCC909ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  for (std::uint64_t c : coords) h = splitmix64(h ^ c);
  return h;
}

}  // namespace arcil
