#pragma once

#include <cstdint>
#include <random>

namespace palmar {

// Seed splitting rule: every random consumer derives its generator from the
// run's master seed and a fixed stream id via splitmix64. Stream ids are
// compile-time constants per consumer, so adding a consumer never perturbs
// the draws of existing ones.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(master, stream));
}

}  // namespace palmar
