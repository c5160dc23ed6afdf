#pragma once

// Saturation tests and robustness of fractions.
//
// A p-run sub-fraction is saturated when its p x p model matrix is
// nonsingular; equivalently, when it contains no circuit support of the
// ambient basis. Robustness is the share of saturated p-subsets.

#include "nestdoe/circuits.hpp"
#include "nestdoe/combinatorics.hpp"
#include "nestdoe/error.hpp"
#include "nestdoe/exact_linalg.hpp"
#include "nestdoe/model.hpp"

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace nestdoe {

/// A subset of the runs of a base model matrix (columns of A = X^t).
class Fraction {
public:
    Fraction(std::shared_ptr<const IntegerMatrix> base, std::vector<std::size_t> runs)
        : base_(std::move(base)), runs_(std::move(runs)) {
        if (!base_)
            throw ArgumentError("fraction without a base matrix");
        std::sort(runs_.begin(), runs_.end());
        if (std::adjacent_find(runs_.begin(), runs_.end()) != runs_.end())
            throw ArgumentError("fraction lists a run twice");
        if (!runs_.empty() && runs_.back() >= base_->cols())
            throw ArgumentError("fraction run " + std::to_string(runs_.back()) + " out of range");
        if (base_->cols() > max_mask_runs)
            throw SizeError("fractions are limited to 64-run base designs");
        mask_ = mask_of(runs_);
    }

    /// The whole base design.
    static Fraction all(std::shared_ptr<const IntegerMatrix> base) {
        std::vector<std::size_t> runs(base->cols());
        for (std::size_t i = 0; i < runs.size(); ++i)
            runs[i] = i;
        return Fraction(std::move(base), std::move(runs));
    }

    [[nodiscard]] const IntegerMatrix& base() const noexcept { return *base_; }
    [[nodiscard]] const std::shared_ptr<const IntegerMatrix>& base_ptr() const noexcept { return base_; }
    [[nodiscard]] const std::vector<std::size_t>& runs() const noexcept { return runs_; }
    [[nodiscard]] std::size_t size() const noexcept { return runs_.size(); }
    [[nodiscard]] std::size_t parameters() const noexcept { return base_->rows(); }
    [[nodiscard]] RunMask mask() const noexcept { return mask_; }
    [[nodiscard]] bool contains(std::size_t run) const noexcept { return run < 64 && (mask_ & bit(run)) != 0; }

    /// The p x |runs| column selection of the base matrix.
    [[nodiscard]] IntegerMatrix matrix() const { return base_->select_columns(runs_); }

    [[nodiscard]] Fraction without(std::size_t run) const {
        std::vector<std::size_t> rest;
        rest.reserve(runs_.size());
        for (std::size_t r : runs_)
            if (r != run)
                rest.push_back(r);
        if (rest.size() == runs_.size())
            throw ArgumentError("run " + std::to_string(run) + " is not in the fraction");
        return Fraction(base_, std::move(rest));
    }

    friend bool operator==(const Fraction& a, const Fraction& b) {
        return a.runs_ == b.runs_ && (a.base_ == b.base_ || *a.base_ == *b.base_);
    }

private:
    std::shared_ptr<const IntegerMatrix> base_;
    std::vector<std::size_t> runs_;
    RunMask mask_ = 0;
};

enum class RobustnessMethod { exact, sampled };

struct RobustnessValue {
    Rational value;
    std::uint64_t saturated_count = 0;
    std::uint64_t total_count = 0;
    RobustnessMethod method = RobustnessMethod::exact;
    std::uint64_t seed = 0; // meaningful for sampled values

    [[nodiscard]] std::string ratio() const { return ratio_string(value); }
    [[nodiscard]] std::string decimal(unsigned places = 4) const { return decimal_string(value, places); }
};

inline constexpr std::uint64_t default_enumeration_cap = 10'000'000;
inline constexpr std::uint64_t default_max_subsets = 1000;

struct RobustnessOptions {
    /// Largest C(n, p) that robustness_exact will enumerate.
    std::uint64_t enumeration_cap = default_enumeration_cap;
    unsigned threads = 0;
};

namespace detail {

inline void check_subset(const CircuitBasis& b, const std::vector<std::size_t>& subset) {
    if (subset.size() != b.p())
        throw ArgumentError("saturation test needs exactly p = " + std::to_string(b.p()) + " runs, got " +
                            std::to_string(subset.size()));
    for (std::size_t r : subset)
        if (r >= b.n())
            throw ArgumentError("run index " + std::to_string(r) + " out of range");
}

} // namespace detail

/// No circuit support of `b` lies inside the p-run `subset`.
inline bool is_saturated_circuits(const CircuitBasis& b, const std::vector<std::size_t>& subset) {
    detail::check_subset(b, subset);
    const RunMask m = mask_of(subset);
    if (static_cast<std::size_t>(std::popcount(m)) != subset.size())
        throw ArgumentError("saturation test: repeated run");
    return !b.any_support_within(m);
}

/// Determinant test: the p x p model matrix of `subset` is nonsingular.
inline bool is_saturated_det(const Fraction& f, const std::vector<std::size_t>& subset) {
    if (subset.size() != f.parameters())
        throw ArgumentError("saturation test needs exactly p = " + std::to_string(f.parameters()) + " runs, got " +
                            std::to_string(subset.size()));
    for (std::size_t r : subset)
        if (!f.contains(r))
            throw ArgumentError("run " + std::to_string(r) + " is not in the fraction");
    return determinant(f.base().select_columns(subset)) != 0;
}

namespace detail {

// Counts the circuit-free p-subsets of runs[start..] extending `chosen`.
// Every circuit-free set of size <= p is independent, so the walk never
// enters a subtree that cannot contribute.
inline std::uint64_t count_saturated(const CircuitBasis& b, const std::vector<std::size_t>& runs, std::size_t start,
                                     std::size_t depth, RunMask chosen) {
    const std::size_t p = b.p();
    if (depth == p)
        return 1;
    std::uint64_t total = 0;
    const std::size_t stop = runs.size() - (p - depth - 1);
    for (std::size_t i = start; i < stop; ++i) {
        const RunMask next = chosen | bit(runs[i]);
        if (b.any_support_within(next))
            continue;
        total += count_saturated(b, runs, i + 1, depth + 1, next);
    }
    return total;
}

inline RobustnessValue make_value(std::uint64_t saturated, std::uint64_t total, RobustnessMethod method,
                                  std::uint64_t seed) {
    return {Rational(BigInt(saturated), BigInt(total)), saturated, total, method, seed};
}

} // namespace detail

/// Exact robustness: every p-subset of the fraction checked against `b`.
/// `b` must be a (reduced) circuit basis of the fraction's base matrix or of
/// any design containing the fraction, indexed by base columns.
inline RobustnessValue robustness_exact(const Fraction& f, const CircuitBasis& b, const RobustnessOptions& options = {}) {
    const std::size_t p = b.p();
    if (b.n() != f.base().cols())
        throw DimensionError("circuit basis and fraction refer to different designs");
    if (f.size() < p)
        throw ArgumentError("fraction has " + std::to_string(f.size()) + " runs, fewer than p = " + std::to_string(p));
    const std::uint64_t total = choose(f.size(), p);
    if (total > options.enumeration_cap)
        throw CapExceededError("C(" + std::to_string(f.size()) + ", " + std::to_string(p) + ") = " +
                               std::to_string(total) + " p-subsets exceed the enumeration cap of " +
                               std::to_string(options.enumeration_cap) + "; use sampled robustness");
    const auto& runs = f.runs();
    if (p == 0)
        return detail::make_value(1, 1, RobustnessMethod::exact, 0);

    // Fan out over the first chosen run; the sum does not depend on scheduling.
    const std::size_t roots = runs.size() - p + 1;
    std::vector<std::uint64_t> partial(roots, 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < roots; i = next++) {
            const RunMask first = bit(runs[i]);
            if (!b.any_support_within(first))
                partial[i] = detail::count_saturated(b, runs, i + 1, 1, first);
        }
    };
    const unsigned threads = std::min<unsigned>(detail::resolve_threads(options.threads), static_cast<unsigned>(roots));
    if (threads <= 1 || total < 100'000) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    std::uint64_t saturated = 0;
    for (auto v : partial)
        saturated += v;
    return detail::make_value(saturated, total, RobustnessMethod::exact, 0);
}

/// Robustness from min(C(n, p), max_subsets) distinct p-subsets drawn
/// uniformly without replacement from `rng`. Exhaustive (and equal to
/// robustness_exact) when C(n, p) <= max_subsets.
inline RobustnessValue robustness_sampled(const Fraction& f, const CircuitBasis& b, std::uint64_t max_subsets,
                                          CounterRng& rng, std::uint64_t seed = 0) {
    const std::size_t p = b.p();
    if (b.n() != f.base().cols())
        throw DimensionError("circuit basis and fraction refer to different designs");
    if (f.size() < p)
        throw ArgumentError("fraction has " + std::to_string(f.size()) + " runs, fewer than p = " + std::to_string(p));
    if (max_subsets == 0)
        throw ArgumentError("max_subsets must be positive");
    const std::uint64_t total = choose(f.size(), p);
    if (total <= max_subsets)
        return robustness_exact(f, b, {total, 1});
    const auto& runs = f.runs();
    std::uint64_t saturated = 0;
    for (std::uint64_t rank : sample_distinct(total, max_subsets, rng)) {
        RunMask m = 0;
        for (std::size_t pos : unrank_combination(runs.size(), p, rank))
            m |= bit(runs[pos]);
        if (!b.any_support_within(m))
            ++saturated;
    }
    return detail::make_value(saturated, max_subsets, RobustnessMethod::sampled, seed);
}

inline RobustnessValue robustness_sampled(const Fraction& f, const CircuitBasis& b, std::uint64_t max_subsets,
                                          std::uint64_t seed) {
    CounterRng rng(seed, {static_cast<std::uint64_t>(Stream::robustness)});
    return robustness_sampled(f, b, max_subsets, rng, seed);
}

/// Exact when C(n, p) fits under `options.enumeration_cap`, sampled otherwise.
inline RobustnessValue robustness_auto(const Fraction& f, const CircuitBasis& b, std::uint64_t max_subsets,
                                       CounterRng& rng, std::uint64_t seed, const RobustnessOptions& options = {}) {
    if (choose(f.size(), b.p()) <= options.enumeration_cap)
        return robustness_exact(f, b, options);
    return robustness_sampled(f, b, max_subsets, rng, seed);
}

/// A design's model matrix together with its reduced circuit basis, computed once.
struct DesignAnalysis {
    std::shared_ptr<const IntegerMatrix> matrix;
    CircuitBasis basis;

    [[nodiscard]] std::size_t n() const noexcept { return matrix->cols(); }
    [[nodiscard]] std::size_t p() const noexcept { return matrix->rows(); }
    [[nodiscard]] Fraction full_fraction() const { return Fraction::all(matrix); }
};

inline DesignAnalysis analyze(IntegerMatrix a, unsigned threads = 0) {
    EnumerationOptions options;
    options.reduced = true;
    options.threads = threads;
    auto matrix = std::make_shared<const IntegerMatrix>(std::move(a));
    CircuitBasis basis = enumerate_circuits(*matrix, options);
    return {std::move(matrix), std::move(basis)};
}

inline DesignAnalysis analyze(const Design& design, const ModelSpec& model, unsigned threads = 0) {
    return analyze(model_matrix(design, model), threads);
}

} // namespace nestdoe
