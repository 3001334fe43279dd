#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nltmo {

// Root seed from which independent named substreams are derived. Each
// consumer (weight init, crop offsets, flips, S_max draws, epoch shuffles)
// owns its own stream, so adding draws to one never perturbs another.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(name, index));
  }

  SeedTree child(std::string_view name, std::uint64_t index = 0) const { return SeedTree(derive(name, index)); }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t derive(std::string_view name, std::uint64_t index) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return splitmix(splitmix(seed_ ^ h) + index);
  }

  std::uint64_t seed_;
};

// Uniform double in [0,1) from 53 random bits; unlike the standard
// distributions its output is the same on every standard library.
inline double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

// Uniform integer in [0, n).
inline int uniform_index(std::mt19937_64& g, int n) { return static_cast<int>(uniform01(g) * n); }

}  // namespace nltmo
