#pragma once

// Circuit bases of integer matrices.
//
// A circuit is a primitive integer kernel vector with inclusion-minimal
// support. Circuits are enumerated by a depth-first walk over column subsets
// in increasing index order that only ever extends linearly independent sets.
// Each node keeps a fraction-free Gauss-Jordan reduction of the whole matrix
// with respect to its columns, so a later column j is dependent exactly when
// its entries outside the pivot rows vanish, and I + {j} is a circuit exactly
// when all of its pivot-row entries are nonzero. Every circuit C is found once,
// at the node C minus its largest index.

#include "nestdoe/combinatorics.hpp"
#include "nestdoe/error.hpp"
#include "nestdoe/exact_linalg.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace nestdoe {

struct Circuit {
    std::vector<std::size_t> support; // ascending column indices
    std::vector<BigInt> entries;      // entries[i] is the value at support[i]
    RunMask mask = 0;

    [[nodiscard]] std::size_t size() const noexcept { return support.size(); }

    [[nodiscard]] std::vector<BigInt> dense(std::size_t n) const {
        std::vector<BigInt> out(n);
        for (std::size_t i = 0; i < support.size(); ++i)
            out[support[i]] = entries[i];
        return out;
    }

    [[nodiscard]] bool contains(std::size_t run) const noexcept { return run < 64 && (mask & bit(run)) != 0; }

    friend bool operator==(const Circuit&, const Circuit&) = default;
};

inline bool support_less(const Circuit& a, const Circuit& b) {
    return std::lexicographical_compare(a.support.begin(), a.support.end(), b.support.begin(), b.support.end());
}

/// Prefix tree over sorted supports: answers "is some support contained in
/// this run set" by walking only prefixes that lie inside the set.
class SupportTrie {
public:
    SupportTrie() = default;

    explicit SupportTrie(const std::vector<Circuit>& circuits) {
        std::vector<std::map<std::size_t, std::size_t>> kids(1);
        std::vector<bool> terminal(1, false);
        for (const auto& c : circuits) {
            std::size_t node = 0;
            for (std::size_t run : c.support) {
                auto [it, inserted] = kids[node].try_emplace(run, kids.size());
                if (inserted) {
                    kids.emplace_back();
                    terminal.push_back(false);
                }
                node = it->second;
            }
            terminal[node] = true;
        }
        // Renumber breadth-first so every node's children are contiguous.
        nodes_.assign(kids.size(), Node{});
        std::vector<std::size_t> order{0};
        for (std::size_t head = 0; head < order.size(); ++head) {
            const std::size_t old = order[head];
            Node& node = nodes_[head];
            node.terminal = terminal[old];
            node.first_child = static_cast<std::uint32_t>(order.size());
            for (const auto& [run, child] : kids[old]) {
                node.children |= bit(run);
                order.push_back(child);
            }
        }
    }

    [[nodiscard]] bool any_within(RunMask set) const noexcept {
        return !nodes_.empty() && search(0, set);
    }

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        RunMask children = 0;
        std::uint32_t first_child = 0;
        bool terminal = false;
    };

    bool search(std::size_t index, RunMask set) const noexcept {
        const Node& node = nodes_[index];
        for (RunMask hits = node.children & set; hits != 0; hits &= hits - 1) {
            const RunMask below = (hits & (0 - hits)) - 1;
            const std::size_t child = node.first_child + static_cast<std::size_t>(std::popcount(node.children & below));
            if (nodes_[child].terminal || search(child, set))
                return true;
        }
        return false;
    }

    std::vector<Node> nodes_;
};

/// The set of circuits of a p x n matrix, sorted lexicographically by support.
class CircuitBasis {
public:
    CircuitBasis(std::size_t p, std::size_t n, std::vector<Circuit> circuits)
        : p_(p), n_(n), circuits_(std::move(circuits)), by_run_(n) {
        if (n > max_mask_runs)
            throw SizeError("circuit bases are limited to 64 runs, got " + std::to_string(n));
        std::sort(circuits_.begin(), circuits_.end(), support_less);
        for (std::size_t i = 0; i < circuits_.size(); ++i)
            for (std::size_t run : circuits_[i].support)
                by_run_[run].push_back(i);
        trie_ = SupportTrie(circuits_);
    }

    [[nodiscard]] std::size_t p() const noexcept { return p_; }
    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t size() const noexcept { return circuits_.size(); }
    [[nodiscard]] bool empty() const noexcept { return circuits_.empty(); }
    [[nodiscard]] const std::vector<Circuit>& circuits() const noexcept { return circuits_; }
    [[nodiscard]] const Circuit& operator[](std::size_t i) const { return circuits_[i]; }

    /// Indices of the circuits whose support contains `run`.
    [[nodiscard]] std::span<const std::size_t> containing(std::size_t run) const {
        if (run >= n_)
            throw ArgumentError("run index " + std::to_string(run) + " out of range");
        return by_run_[run];
    }

    /// True when some circuit support is a subset of `set`.
    [[nodiscard]] bool any_support_within(RunMask set) const noexcept { return trie_.any_within(set); }

    /// Number of circuits per support size.
    [[nodiscard]] std::map<std::size_t, std::size_t> histogram() const {
        std::map<std::size_t, std::size_t> h;
        for (const auto& c : circuits_)
            ++h[c.size()];
        return h;
    }

    /// Circuits whose support lies inside `set`.
    [[nodiscard]] std::size_t count_within(RunMask set) const noexcept {
        return static_cast<std::size_t>(std::count_if(circuits_.begin(), circuits_.end(),
                                                      [set](const Circuit& c) { return (c.mask & ~set) == 0; }));
    }

private:
    std::size_t p_;
    std::size_t n_;
    std::vector<Circuit> circuits_;
    std::vector<std::vector<std::size_t>> by_run_;
    SupportTrie trie_;
};

struct EnumerationOptions {
    /// Skip supports of size p + 1; they never fit inside a p-run fraction.
    bool reduced = false;
    /// Explicit support-size cap; overrides `reduced` when set.
    std::optional<std::size_t> max_support;
    /// Worker threads; 0 means one per hardware thread.
    unsigned threads = 0;
};

namespace detail {

inline BigInt to_big(std::int64_t v) { return BigInt(v); }

inline BigInt to_big(__int128 v) {
    const bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(0) - static_cast<unsigned __int128>(v)
                              : static_cast<unsigned __int128>(v);
    BigInt r = static_cast<std::uint64_t>(u >> 64);
    r <<= 64;
    r += static_cast<std::uint64_t>(u);
    return neg ? BigInt(-r) : r;
}

inline const BigInt& to_big(const BigInt& v) { return v; }

template <class Int>
Int from_big(const BigInt& v) {
    if constexpr (std::is_same_v<Int, BigInt>) {
        return v;
    } else {
        return static_cast<Int>(static_cast<long long>(v));
    }
}

/// Square of the Hadamard bound on every minor of size <= p.
inline BigInt squared_minor_bound(const IntegerMatrix& a) {
    std::vector<BigInt> norms;
    norms.reserve(a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j) {
        BigInt s = 0;
        for (std::size_t i = 0; i < a.rows(); ++i)
            s += a(i, j) * a(i, j);
        norms.push_back(s == 0 ? BigInt(1) : s);
    }
    std::sort(norms.begin(), norms.end(), std::greater<>());
    BigInt bound = 1;
    for (std::size_t j = 0; j < std::min(a.rows(), norms.size()); ++j)
        bound *= norms[j];
    return bound;
}

template <class Int>
class DependencySearch {
public:
    DependencySearch(const IntegerMatrix& a, std::size_t max_support)
        : rows_(a.rows()), cols_(a.cols()), max_support_(max_support),
          levels_(std::min(max_support, rows_ + 1) + 1, std::vector<Int>(rows_ * cols_)),
          det_(levels_.size(), Int(1)), pivot_row_(levels_.size(), 0), chosen_(levels_.size(), 0) {
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                levels_[0][i * cols_ + j] = from_big<Int>(a(i, j));
    }

    /// All circuits whose smallest column is `first`.
    void run(std::size_t first, std::vector<Circuit>& out) {
        out_ = &out;
        used_rows_ = 0;
        const auto r = free_pivot(0, first);
        if (!r) {
            emit(0, first);
            return;
        }
        if (max_support_ >= 2) {
            descend(0, first, *r);
            node(1);
        }
    }

private:
    Int& at(std::size_t depth, std::size_t i, std::size_t j) { return levels_[depth][i * cols_ + j]; }

    std::optional<std::size_t> free_pivot(std::size_t depth, std::size_t j) {
        for (std::size_t i = 0; i < rows_; ++i)
            if ((used_rows_ & bit(i)) == 0 && at(depth, i, j) != 0)
                return i;
        return std::nullopt;
    }

    // Pivot on (r, j) at `depth`, writing the reduction for columns > j into depth + 1.
    void descend(std::size_t depth, std::size_t j, std::size_t r) {
        const Int& d = det_[depth];
        const Int pivot = at(depth, r, j);
        for (std::size_t i = 0; i < rows_; ++i) {
            if (i == r) {
                for (std::size_t k = j + 1; k < cols_; ++k)
                    at(depth + 1, i, k) = at(depth, i, k);
                continue;
            }
            const Int lead = at(depth, i, j);
            if (lead == 0) {
                for (std::size_t k = j + 1; k < cols_; ++k)
                    at(depth + 1, i, k) = Int(pivot * at(depth, i, k)) / d;
            } else {
                for (std::size_t k = j + 1; k < cols_; ++k)
                    at(depth + 1, i, k) = Int(pivot * at(depth, i, k) - lead * at(depth, r, k)) / d;
            }
        }
        // Earlier pivot columns are not stored; only their pivot rows matter.
        det_[depth + 1] = pivot;
        pivot_row_[depth] = r;
        chosen_[depth] = j;
        used_rows_ |= bit(r);
    }

    void node(std::size_t depth) {
        const std::size_t last = chosen_[depth - 1];
        for (std::size_t j = last + 1; j < cols_; ++j) {
            const auto r = free_pivot(depth, j);
            if (!r) {
                emit(depth, j);
                continue;
            }
            if (depth + 1 < max_support_) {
                descend(depth, j, *r);
                node(depth + 1);
                used_rows_ &= ~bit(*r);
            }
        }
    }

    // chosen_[0..depth) + {j} is dependent; emit it when it is minimal.
    void emit(std::size_t depth, std::size_t j) {
        for (std::size_t t = 0; t < depth; ++t)
            if (at(depth, pivot_row_[t], j) == 0)
                return;
        Circuit c;
        c.support.reserve(depth + 1);
        c.entries.reserve(depth + 1);
        for (std::size_t t = 0; t < depth; ++t) {
            c.support.push_back(chosen_[t]);
            c.entries.push_back(-to_big(at(depth, pivot_row_[t], j)));
        }
        c.support.push_back(j);
        c.entries.push_back(to_big(det_[depth]));
        make_primitive(c.entries);
        c.mask = mask_of(c.support);
        out_->push_back(std::move(c));
    }

    std::size_t rows_;
    std::size_t cols_;
    std::size_t max_support_;
    std::vector<std::vector<Int>> levels_;
    std::vector<Int> det_;
    std::vector<std::size_t> pivot_row_;
    std::vector<std::size_t> chosen_;
    RunMask used_rows_ = 0;
    std::vector<Circuit>* out_ = nullptr;
};

template <class Int>
std::vector<Circuit> enumerate_with(const IntegerMatrix& a, std::size_t max_support, unsigned threads) {
    const std::size_t n = a.cols();
    std::vector<std::vector<Circuit>> per_root(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        DependencySearch<Int> search(a, max_support);
        for (std::size_t j = next++; j < n; j = next++)
            search.run(j, per_root[j]);
    };
    const unsigned count = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < count; ++t)
            pool.emplace_back(worker);
    }
    std::vector<Circuit> all;
    for (auto& v : per_root)
        std::move(v.begin(), v.end(), std::back_inserter(all));
    return all;
}

inline unsigned resolve_threads(unsigned threads) {
    if (threads != 0)
        return threads;
    return std::max(1U, std::thread::hardware_concurrency());
}

} // namespace detail

/// All circuits of a full-rank p x n matrix (p <= n <= 64), one per sign pair,
/// each primitive with a positive first entry. The output does not depend on
/// the number of threads.
inline CircuitBasis enumerate_circuits(const IntegerMatrix& a, const EnumerationOptions& options = {}) {
    const std::size_t p = a.rows();
    const std::size_t n = a.cols();
    if (n > max_mask_runs)
        throw SizeError("circuit enumeration is limited to 64 columns, got " + std::to_string(n));
    if (const auto r = rank(a); r < p)
        throw RankError("matrix has rank " + std::to_string(r) + " < " + std::to_string(p) + " rows");
    const std::size_t cap = options.max_support.value_or(options.reduced ? p : p + 1);
    const unsigned threads = detail::resolve_threads(options.threads);

    // Entries of every intermediate reduction are minors of size <= p, so the
    // Hadamard bound decides which machine integer is wide enough.
    const BigInt bound2 = detail::squared_minor_bound(a);
    std::vector<Circuit> circuits;
    if (bound2 < (BigInt(1) << 61))
        circuits = detail::enumerate_with<std::int64_t>(a, cap, threads);
    else if (bound2 < (BigInt(1) << 125))
        circuits = detail::enumerate_with<__int128>(a, cap, threads);
    else
        circuits = detail::enumerate_with<BigInt>(a, cap, threads);
    return CircuitBasis(p, n, std::move(circuits));
}

/// Drops the circuits with support size p + 1.
inline CircuitBasis reduce_basis(const CircuitBasis& b) {
    std::vector<Circuit> kept;
    for (const auto& c : b.circuits())
        if (c.size() <= b.p())
            kept.push_back(c);
    return CircuitBasis(b.p(), b.n(), std::move(kept));
}

/// Circuits of `b` whose support lies inside `subfraction`, re-indexed to the
/// positions of `subfraction` (which gives the new column order).
inline CircuitBasis restrict(const CircuitBasis& b, const std::vector<std::size_t>& subfraction) {
    std::vector<std::size_t> position(b.n(), b.n());
    RunMask set = 0;
    for (std::size_t i = 0; i < subfraction.size(); ++i) {
        const std::size_t run = subfraction[i];
        if (run >= b.n())
            throw ArgumentError("restrict: run index " + std::to_string(run) + " out of range");
        if (position[run] != b.n())
            throw ArgumentError("restrict: run index " + std::to_string(run) + " repeated");
        position[run] = i;
        set |= bit(run);
    }
    std::vector<Circuit> kept;
    for (const auto& c : b.circuits()) {
        if ((c.mask & ~set) != 0)
            continue;
        std::vector<std::pair<std::size_t, BigInt>> moved;
        for (std::size_t i = 0; i < c.size(); ++i)
            moved.emplace_back(position[c.support[i]], c.entries[i]);
        std::sort(moved.begin(), moved.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        Circuit r;
        for (auto& [pos, value] : moved) {
            r.support.push_back(pos);
            r.entries.push_back(std::move(value));
        }
        make_primitive(r.entries);
        r.mask = mask_of(r.support);
        kept.push_back(std::move(r));
    }
    return CircuitBasis(b.p(), subfraction.size(), std::move(kept));
}

} // namespace nestdoe
