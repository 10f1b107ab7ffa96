#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace hbm {

using Rng = std::mt19937_64;

/// Independent stream for a (seed, tags...) tuple. Streams derived from the
/// same tuple are identical, so work split across threads stays reproducible.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * tags.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto t : tags) push(t);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Seed for a named sub-task, so results depend on the task's identity
/// rather than on its position in a job list.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace hbm
