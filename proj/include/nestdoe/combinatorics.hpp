#pragma once

// Counter-based random numbers, binomials, combination unranking and
// sampling without replacement.

#include "nestdoe/error.hpp"
#include "nestdoe/exact_linalg.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <unordered_set>
#include <vector>

namespace nestdoe {

/// A set of run indices below 64.
using RunMask = std::uint64_t;

inline constexpr std::size_t max_mask_runs = 64;

inline constexpr RunMask bit(std::size_t i) noexcept { return RunMask{1} << i; }

inline RunMask mask_of(const std::vector<std::size_t>& indices) {
    RunMask m = 0;
    for (std::size_t i : indices) {
        if (i >= max_mask_runs)
            throw SizeError("run index " + std::to_string(i) + " exceeds the 64-run limit");
        m |= bit(i);
    }
    return m;
}

inline std::vector<std::size_t> indices_of(RunMask m) {
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(std::popcount(m)));
    while (m != 0) {
        out.push_back(static_cast<std::size_t>(std::countr_zero(m)));
        m &= m - 1;
    }
    return out;
}

// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based generator: the i-th output is a hash of (key, i), so a
/// stream is fully determined by (seed, stream id) and independent of how
/// work is scheduled across threads. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) : key_(splitmix64(seed)) {
        for (std::uint64_t s : stream)
            key_ = splitmix64(key_ ^ splitmix64(s + 0x632be59bd9b4e019ULL));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    /// Uniform integer in [0, bound), bound > 0, by rejection so the result
    /// does not depend on the standard library's distribution algorithms.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (true) {
            const unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
            if (static_cast<std::uint64_t>(m) >= threshold)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Stream tags keep the different random decisions of one seed independent.
enum class Stream : std::uint64_t {
    tie_break = 1,
    trace_sampling = 2,
    fraction_sampling = 3,
    subset_sampling = 4,
    robustness = 5,
};

// ---------------------------------------------------------------------------

/// Pascal's triangle up to n = 64 in 64-bit arithmetic (C(64, 32) < 2^64).
class BinomialTable {
public:
    BinomialTable() {
        for (std::size_t n = 0; n <= max_mask_runs; ++n) {
            table_[n][0] = 1;
            for (std::size_t k = 1; k <= n; ++k)
                table_[n][k] = table_[n - 1][k - 1] + (k <= n - 1 ? table_[n - 1][k] : 0);
        }
    }

    [[nodiscard]] std::uint64_t operator()(std::size_t n, std::size_t k) const noexcept {
        if (k > n || n > max_mask_runs)
            return 0;
        return table_[n][k];
    }

    static const BinomialTable& instance() {
        static const BinomialTable t;
        return t;
    }

private:
    std::array<std::array<std::uint64_t, max_mask_runs + 1>, max_mask_runs + 1> table_{};
};

/// C(n, k) for n <= 64 (0 when k > n).
inline std::uint64_t choose(std::size_t n, std::size_t k) {
    if (n > max_mask_runs)
        throw SizeError("binomial argument above 64");
    return BinomialTable::instance()(n, k);
}

/// C(n, k) for arbitrary n, and 0 when k < 0 or k > n.
inline BigInt choose_big(long long n, long long k) {
    if (k < 0 || n < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    BigInt r = 1;
    for (long long i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r;
}

/// The k-subset of {0..n-1} with lexicographic rank `rank`, ascending.
inline std::vector<std::size_t> unrank_combination(std::size_t n, std::size_t k, std::uint64_t rank) {
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t next = 0;
    for (std::size_t slot = 0; slot < k; ++slot) {
        for (std::size_t x = next;; ++x) {
            const std::uint64_t with_x = choose(n - x - 1, k - slot - 1);
            if (rank < with_x) {
                out.push_back(x);
                next = x + 1;
                break;
            }
            rank -= with_x;
        }
    }
    return out;
}

/// Calls f(subset) for every k-subset of {0..n-1} in lexicographic order.
template <class F>
void for_each_combination(std::size_t n, std::size_t k, F&& f) {
    if (k > n)
        return;
    std::vector<std::size_t> c(k);
    for (std::size_t i = 0; i < k; ++i)
        c[i] = i;
    while (true) {
        f(static_cast<const std::vector<std::size_t>&>(c));
        std::size_t i = k;
        while (i > 0 && c[i - 1] == n - k + i - 1)
            --i;
        if (i == 0)
            return;
        ++c[i - 1];
        for (std::size_t j = i; j < k; ++j)
            c[j] = c[j - 1] + 1;
    }
}

/// `count` distinct values drawn uniformly from [0, population), sorted.
/// Floyd's algorithm: exactly `count` draws, no rejection loop.
inline std::vector<std::uint64_t> sample_distinct(std::uint64_t population, std::uint64_t count, CounterRng& rng) {
    if (count > population)
        throw ArgumentError("cannot draw more distinct values than the population");
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(count) * 2);
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t j = population - count; j < population; ++j) {
        const std::uint64_t t = rng.below(j + 1);
        const std::uint64_t pick = chosen.contains(t) ? j : t;
        chosen.insert(pick);
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace nestdoe
