#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace plexitrace {

using TokenId = std::uint32_t;

// Document separator in the token stream. Never a valid vocabulary entry.
inline constexpr TokenId kSentinel = 0xFFFFFFFFu;

// Every stochastic component draws from this engine. The distribution helpers
// below avoid std::uniform_*_distribution so streams are identical across
// standard library implementations.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound). bound must be > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive seed derivation from a base seed and a string key.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

/// FNV-1a over bytes, used for content hashes in manifests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace plexitrace
