#pragma once

// Robustness distributions over all (or sampled) sub-fractions of a given
// size, percentiles, and the per-k comparison report against the greedy
// removal sequence.

#include "nestdoe/combinatorics.hpp"
#include "nestdoe/error.hpp"
#include "nestdoe/model.hpp"
#include "nestdoe/removal.hpp"
#include "nestdoe/robustness.hpp"

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace nestdoe {

/// Nearest-rank percentile: the smallest value with at least `percent`% of
/// the sample at or below it.
inline Rational percentile(std::vector<Rational> values, unsigned percent) {
    if (values.empty())
        throw ArgumentError("percentile of an empty sample");
    if (percent == 0 || percent > 100)
        throw ArgumentError("percentile must be in 1..100");
    std::sort(values.begin(), values.end());
    const std::size_t rank = (static_cast<std::size_t>(percent) * values.size() + 99) / 100;
    return values[rank - 1];
}

inline constexpr unsigned reported_percentiles[] = {75, 90, 95};

struct RobustnessDistribution {
    std::size_t k = 0;
    std::vector<Rational> samples;
    bool exact = true;                     // every sub-fraction scored exhaustively
    std::uint64_t population = 0;          // C(n, k)
    std::map<unsigned, Rational> percentiles;
    std::optional<Rational> algorithm_value; // r_* of the greedy sequence, when known

    /// Count of each distinct value.
    [[nodiscard]] std::map<Rational, std::size_t> histogram() const {
        std::map<Rational, std::size_t> h;
        for (const auto& v : samples)
            ++h[v];
        return h;
    }
};

struct DistributionOptions {
    std::uint64_t max_fractions = 1000;
    std::uint64_t max_subsets = default_max_subsets;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

inline void fill_percentiles(RobustnessDistribution& d) {
    for (unsigned q : reported_percentiles)
        d.percentiles[q] = percentile(d.samples, q);
}

/// Robustness of the size-(n - k) sub-fractions of the analysed design: all of
/// them when C(n, k) <= max_fractions, else max_fractions distinct ones drawn
/// uniformly. Each is scored exactly when C(n - k, p) <= max_subsets, else by
/// max_subsets sampled p-subsets.
inline RobustnessDistribution distribution(const DesignAnalysis& analysis, std::size_t k,
                                           const DistributionOptions& options = {}) {
    const std::size_t n = analysis.n();
    const std::size_t p = analysis.p();
    if (k < 1 || k > n - p)
        throw ArgumentError("k = " + std::to_string(k) + " outside 1.." + std::to_string(n - p));
    if (options.max_fractions == 0 || options.max_subsets == 0)
        throw ArgumentError("sampling caps must be positive");

    RobustnessDistribution d;
    d.k = k;
    d.population = choose(n, k);
    std::vector<std::vector<std::size_t>> removed_sets;
    if (d.population <= options.max_fractions) {
        for_each_combination(n, k, [&](const std::vector<std::size_t>& c) { removed_sets.push_back(c); });
    } else {
        d.exact = false;
        CounterRng rng(options.seed, {static_cast<std::uint64_t>(Stream::fraction_sampling), k});
        for (std::uint64_t rank : sample_distinct(d.population, options.max_fractions, rng))
            removed_sets.push_back(unrank_combination(n, k, rank));
    }
    if (choose(n - k, p) > options.max_subsets)
        d.exact = false;

    const std::size_t count = removed_sets.size();
    d.samples.assign(count, Rational(0));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            std::vector<std::size_t> keep;
            keep.reserve(n - k);
            std::size_t r = 0;
            for (std::size_t run = 0; run < n; ++run) {
                if (r < k && removed_sets[i][r] == run) {
                    ++r;
                    continue;
                }
                keep.push_back(run);
            }
            Fraction f(analysis.matrix, std::move(keep));
            CounterRng rng(options.seed, {static_cast<std::uint64_t>(Stream::subset_sampling), k, i});
            d.samples[i] = robustness_sampled(f, analysis.basis, options.max_subsets, rng, options.seed).value;
        }
    };
    const unsigned threads = std::min<unsigned>(detail::resolve_threads(options.threads),
                                                static_cast<unsigned>(std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    fill_percentiles(d);
    return d;
}

inline RobustnessDistribution distribution(const Design& design, const ModelSpec& model, std::size_t k,
                                           const DistributionOptions& options = {}) {
    return distribution(analyze(design, model, options.threads), k, options);
}

struct BenchRow {
    std::size_t k = 0;
    Rational p75, p90, p95, r_star;
};

struct BenchReport {
    RemovalTrace trace;
    std::vector<RobustnessDistribution> distributions; // index k, k = 0 holds r0 alone
    std::vector<BenchRow> rows;
};

struct BenchOptions {
    SequenceOptions sequence;
    DistributionOptions distribution;
};

/// Greedy sequence down to `target`, then the distribution for every k.
inline BenchReport bench_report(const DesignAnalysis& analysis, std::size_t target, const BenchOptions& options = {}) {
    BenchReport report;
    report.trace = nested_sequence(analysis, target, options.sequence);
    RobustnessDistribution zero;
    zero.k = 0;
    zero.population = 1;
    zero.exact = report.trace.initial_robustness.method == RobustnessMethod::exact;
    zero.samples = {report.trace.initial_robustness.value};
    zero.algorithm_value = report.trace.initial_robustness.value;
    fill_percentiles(zero);
    report.distributions.push_back(std::move(zero));
    for (std::size_t k = 1; k <= analysis.n() - target; ++k) {
        auto d = distribution(analysis, k, options.distribution);
        d.algorithm_value = report.trace.robustness_after(k).value;
        report.distributions.push_back(std::move(d));
    }
    for (const auto& d : report.distributions)
        report.rows.push_back({d.k, d.percentiles.at(75), d.percentiles.at(90), d.percentiles.at(95), *d.algorithm_value});
    return report;
}

inline BenchReport bench_report(const Design& design, const ModelSpec& model, std::size_t target,
                                const BenchOptions& options = {}) {
    return bench_report(analyze(design, model, options.sequence.threads), target, options);
}

inline constexpr unsigned report_decimals = 7;

inline void write_table_csv(std::ostream& out, const BenchReport& report) {
    out << "k,p75,p90,p95,r_star\n";
    for (const auto& row : report.rows)
        out << row.k << ',' << decimal_string(row.p75, report_decimals) << ',' << decimal_string(row.p90, report_decimals)
            << ',' << decimal_string(row.p95, report_decimals) << ',' << decimal_string(row.r_star, report_decimals)
            << '\n';
}

/// One robustness value per line.
inline void write_distribution_csv(std::ostream& out, const RobustnessDistribution& d) {
    for (const auto& v : d.samples)
        out << decimal_string(v, report_decimals) << '\n';
}

/// Writes table.csv and dist_k<K>.csv into `dir`, creating it if needed.
inline void write_bench_report(const std::filesystem::path& dir, const BenchReport& report) {
    std::filesystem::create_directories(dir);
    auto open = [](const std::filesystem::path& path) {
        std::ofstream out(path);
        if (!out)
            throw Error("cannot write '" + path.string() + "'");
        return out;
    };
    {
        auto out = open(dir / "table.csv");
        write_table_csv(out, report);
    }
    for (const auto& d : report.distributions) {
        auto out = open(dir / ("dist_k" + std::to_string(d.k) + ".csv"));
        write_distribution_csv(out, d);
    }
}

} // namespace nestdoe
