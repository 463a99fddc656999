#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vlgpo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent per-stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of stream `index` under `master`. Sampling chains use index = chain index,
/// evaluation jobs use index = job index.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

inline std::vector<double> standard_normal(Rng& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) v = normal(rng);
    return out;
}

}  // namespace vlgpo
