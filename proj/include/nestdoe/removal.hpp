#pragma once

// Greedy one-run-at-a-time removal driven by the circuit loss function.
//
// The reduced circuit basis is computed once for the starting fraction; each
// later sub-fraction's circuits are the ones whose support it still contains.
// At every step the run with the largest loss is removed, ties broken
// uniformly at random from a stream keyed by (seed, step).

#include "nestdoe/circuits.hpp"
#include "nestdoe/combinatorics.hpp"
#include "nestdoe/error.hpp"
#include "nestdoe/exact_linalg.hpp"
#include "nestdoe/model.hpp"
#include "nestdoe/robustness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nestdoe {

/// L(P): sum over circuits u of `b` with P in supp(u) and supp(u) inside the
/// fraction of C(n' - |supp u|, p - |supp u|), n' being the fraction size.
/// Supports larger than p contribute nothing.
inline BigInt loss(const CircuitBasis& b, const Fraction& f, std::size_t run) {
    if (!f.contains(run))
        throw ArgumentError("loss: run " + std::to_string(run) + " is not in the fraction");
    const auto size = static_cast<long long>(f.size());
    const auto p = static_cast<long long>(b.p());
    BigInt total = 0;
    for (std::size_t idx : b.containing(run)) {
        const Circuit& c = b[idx];
        if ((c.mask & ~f.mask()) != 0)
            continue;
        const auto s = static_cast<long long>(c.size());
        total += choose_big(size - s, p - s);
    }
    return total;
}

struct StepRecord {
    std::size_t k = 0;       // runs removed so far, including this step
    std::size_t removed = 0; // base run index
    std::vector<std::size_t> tie_set;
    std::vector<std::pair<std::size_t, BigInt>> losses; // every run of the fraction before removal
    std::size_t surviving_circuits = 0;                 // circuits inside the resulting fraction
    std::optional<RobustnessValue> robustness;          // of the resulting fraction
};

/// Removes one run with maximal loss, chosen uniformly among ties with `rng`.
inline std::pair<Fraction, StepRecord> remove_step(const CircuitBasis& b, const Fraction& f, CounterRng& rng) {
    if (f.size() <= b.p())
        throw ArgumentError("cannot remove a run from a fraction with p = " + std::to_string(b.p()) + " runs");
    StepRecord step;
    BigInt best = -1;
    for (std::size_t run : f.runs()) {
        BigInt l = loss(b, f, run);
        if (l > best) {
            best = l;
            step.tie_set.clear();
        }
        if (l == best)
            step.tie_set.push_back(run);
        step.losses.emplace_back(run, std::move(l));
    }
    step.removed = step.tie_set.size() == 1 ? step.tie_set.front() : step.tie_set[rng.below(step.tie_set.size())];
    Fraction next = f.without(step.removed);
    step.surviving_circuits = b.count_within(next.mask());
    return {std::move(next), std::move(step)};
}

struct RemovalTrace {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t target = 0;
    std::size_t initial_circuits = 0;
    RobustnessValue initial_robustness;
    std::vector<StepRecord> steps;
    std::vector<std::size_t> final_runs;

    /// Runs in the order removed.
    [[nodiscard]] std::vector<std::size_t> removal_order() const {
        std::vector<std::size_t> out;
        for (const auto& s : steps)
            out.push_back(s.removed);
        return out;
    }

    /// Robustness of the fraction with `k` runs removed (k = 0 is the start).
    [[nodiscard]] const RobustnessValue& robustness_after(std::size_t k) const {
        if (k == 0)
            return initial_robustness;
        if (k > steps.size())
            throw ArgumentError("trace has only " + std::to_string(steps.size()) + " steps");
        return *steps[k - 1].robustness;
    }
};

struct SequenceOptions {
    std::uint64_t seed = 0;
    /// Robustness is exact while C(n - k, p) stays below this cap, sampled after.
    std::uint64_t enumeration_cap = default_enumeration_cap;
    std::uint64_t max_subsets = default_max_subsets;
    unsigned threads = 0;
};

/// Removes runs from the whole design of `analysis` down to `target_size`.
inline RemovalTrace nested_sequence(const DesignAnalysis& analysis, std::size_t target_size,
                                    const SequenceOptions& options = {}) {
    const std::size_t n = analysis.n();
    const std::size_t p = analysis.p();
    if (target_size < p)
        throw ArgumentError("target size " + std::to_string(target_size) + " is below p = " + std::to_string(p));
    if (target_size > n)
        throw ArgumentError("target size " + std::to_string(target_size) + " exceeds the design size " +
                            std::to_string(n));
    const RobustnessOptions robust{options.enumeration_cap, options.threads};
    RemovalTrace trace;
    trace.seed = options.seed;
    trace.n = n;
    trace.p = p;
    trace.target = target_size;
    Fraction current = analysis.full_fraction();
    trace.initial_circuits = analysis.basis.count_within(current.mask());
    {
        CounterRng rng(options.seed, {static_cast<std::uint64_t>(Stream::trace_sampling), 0});
        trace.initial_robustness = robustness_auto(current, analysis.basis, options.max_subsets, rng, options.seed, robust);
    }
    for (std::size_t k = 1; current.size() > target_size; ++k) {
        CounterRng tie_rng(options.seed, {static_cast<std::uint64_t>(Stream::tie_break), k});
        auto [next, step] = remove_step(analysis.basis, current, tie_rng);
        step.k = k;
        CounterRng sample_rng(options.seed, {static_cast<std::uint64_t>(Stream::trace_sampling), k});
        step.robustness = robustness_auto(next, analysis.basis, options.max_subsets, sample_rng, options.seed, robust);
        trace.steps.push_back(std::move(step));
        current = std::move(next);
    }
    trace.final_runs = current.runs();
    return trace;
}

inline RemovalTrace nested_sequence(const Design& design, const ModelSpec& model, std::size_t target_size,
                                    const SequenceOptions& options = {}) {
    return nested_sequence(analyze(design, model, options.threads), target_size, options);
}

/// Experiment order: the final p-run fraction first (in design order), then
/// the removed runs from last removed to first removed.
inline Design run_order(const RemovalTrace& trace, const Design& design) {
    std::vector<std::size_t> order = trace.final_runs;
    for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it)
        order.push_back(it->removed);
    return design.subset(order);
}

inline nlohmann::json robustness_json(const RobustnessValue& r) {
    return {{"robustness_exact", r.ratio()},
            {"robustness_decimal", r.decimal(4)},
            {"saturated", r.saturated_count},
            {"subsets", r.total_count},
            {"method", r.method == RobustnessMethod::exact ? "exact" : "sampled"}};
}

inline nlohmann::json trace_json(const RemovalTrace& trace, const Design& design) {
    auto labels = [&](const std::vector<std::size_t>& runs) {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t r : runs)
            out.push_back(design.labels.at(r));
        return out;
    };
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : trace.steps) {
        nlohmann::json losses = nlohmann::json::object();
        for (const auto& [run, l] : s.losses)
            losses[design.labels.at(run)] = l.str();
        nlohmann::json step = {{"k", s.k},
                               {"removed_run_label", design.labels.at(s.removed)},
                               {"removed_run_levels", design.levels_string(s.removed)},
                               {"tie_set", labels(s.tie_set)},
                               {"losses", losses},
                               {"surviving_circuits", s.surviving_circuits}};
        step.update(robustness_json(*s.robustness));
        steps.push_back(std::move(step));
    }
    nlohmann::json initial = {{"size", trace.n}, {"circuits", trace.initial_circuits}};
    initial.update(robustness_json(trace.initial_robustness));
    return {{"seed", trace.seed},
            {"n", trace.n},
            {"p", trace.p},
            {"target", trace.target},
            {"initial", initial},
            {"steps", steps},
            {"final_fraction", labels(trace.final_runs)}};
}

} // namespace nestdoe
