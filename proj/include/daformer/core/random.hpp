#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace daformer {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream derived from a base seed and stream tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t t : tags) s = splitmix64(s ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return s;
}

/// Named random streams split from one master seed, so that an ablation can
/// change exactly one of them.
enum class Stream : std::uint64_t { data = 1, rcs = 2, augmentation = 3, init = 4, mixing = 5, target = 6, pretrain = 7 };

inline std::mt19937_64 make_stream(std::uint64_t master, Stream s) {
  return std::mt19937_64(derive_seed(master, {static_cast<std::uint64_t>(s)}));
}

}  // namespace daformer
