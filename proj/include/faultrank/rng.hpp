#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "faultrank/common.hpp"

namespace faultrank {

// All randomness in a run flows from one master seed. Sub-streams are derived
// with splitmix64 over (master, tag, index), so any stage or per-tree worker
// can reproduce its stream independently of execution order.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(tag, 0xcbf29ce484222325ull);
    return splitmix64(splitmix64(master ^ h) + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    return Rng(derive_seed(master, tag, index));
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(perm[i - 1], perm[dist(rng)]);
    }
    return perm;
}

// Uniform draw from [0, n).
inline std::size_t bounded(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

// k distinct indices from 0..n-1, returned in ascending order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k && i < n; ++i) std::swap(pool[i], pool[i + bounded(rng, n - i)]);
    pool.resize(std::min(k, n));
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline bool is_identity(const std::vector<std::size_t>& perm) {
    for (std::size_t i = 0; i < perm.size(); ++i)
        if (perm[i] != i) return false;
    return true;
}

// Permutation guaranteed non-identity for n > 5; an identity draw is resampled.
// Below that threshold identity is a legitimate outcome of a fair shuffle.
inline std::vector<std::size_t> random_permutation_nonidentity(std::size_t n, Rng& rng) {
    auto perm = random_permutation(n, rng);
    while (n > 5 && is_identity(perm)) perm = random_permutation(n, rng);
    return perm;
}

}  // namespace faultrank
