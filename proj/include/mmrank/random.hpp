#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace mmrank {

// Portable draws on top of mt19937_64. The std distributions are
// implementation-defined, which would break cross-toolchain reproducibility.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller (one value per call, no caching).
double standard_normal(Rng& rng);

/// Fisher-Yates shuffle with uniform_index.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// 64-bit FNV-1a over the bytes of `data`.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent stream keyed by (seed, key): hash(seed, key).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

}  // namespace mmrank
