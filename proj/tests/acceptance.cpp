// Acceptance suite: one PASS/FAIL line per criterion, indented detail lines
// below each. Exit status is the number of failed criteria.

#include "nestdoe/circuits.hpp"
#include "nestdoe/distribution.hpp"
#include "nestdoe/model.hpp"
#include "nestdoe/removal.hpp"
#include "nestdoe/robustness.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace nestdoe;

namespace {

const std::string data_dir = NESTDOE_TEST_DATA;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Criterion {
    std::string id;
    std::string title;
    bool ok = true;
    std::vector<std::string> details;

    void check(bool cond, const std::string& what) {
        details.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
        ok = ok && cond;
    }
    void note(const std::string& what) { details.push_back("     " + what); }
};

std::vector<Criterion> results;

void run(const std::string& id, const std::string& title, const std::function<void(Criterion&)>& body) {
    Criterion c{id, title, true, {}};
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.check(false, std::string("exception: ") + e.what());
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2f s)", seconds_since(t0));
    std::cout << (c.ok ? "PASS " : "FAIL ") << c.id << " " << c.title << buf << '\n';
    for (const auto& d : c.details)
        std::cout << "    " << d << '\n';
    std::cout.flush();
    results.push_back(std::move(c));
}

std::string fixed(double v, int places) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", places, v);
    return buf;
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

ModelSpec main_effects_2(std::size_t d) {
    std::vector<FactorSpec> f;
    for (std::size_t i = 0; i < d; ++i)
        f.push_back(FactorSpec::qualitative("X" + std::to_string(i + 1), 2));
    return main_effects_model(f);
}

template <class T>
std::string histogram_string(const std::map<T, std::size_t>& h) {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (const auto& [k, v] : h) {
        os << (first ? "" : ", ") << k << ':' << v;
        first = false;
    }
    os << '}';
    return os.str();
}

// Kernel membership, gcd 1, support size and incomparability.
bool basis_invariants_hold(const IntegerMatrix& a, const CircuitBasis& b, std::size_t max_support) {
    for (const auto& c : b.circuits()) {
        if (c.size() > max_support || c.entries.front() <= 0)
            return false;
        BigInt g = 0;
        for (const auto& e : c.entries)
            g = boost::multiprecision::gcd(g, e);
        if (g != 1)
            return false;
        for (const auto& v : product(a, c.dense(a.cols())))
            if (v != 0)
                return false;
    }
    // Sorted by support, so a subset relation can only point at a later entry
    // of equal or larger size; the trie on the remaining ones answers it.
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            if (i != j && (b[i].mask & ~b[j].mask) == 0)
                return false;
    return true;
}

std::size_t invariant_checks = 0;
bool all_invariants = true;

void record_invariants(const IntegerMatrix& a, const CircuitBasis& b, std::size_t max_support) {
    ++invariant_checks;
    all_invariants = basis_invariants_hold(a, b, max_support) && all_invariants;
}

Design load(const std::string& name) { return load_design_csv(data_dir + "/" + name); }
ModelSpec load_model(const std::string& name) { return load_model_json(data_dir + "/" + name); }

} // namespace

int main() {
    std::cout << "nestdoe acceptance suite\n";

    run("C1", "circuit counts", [](Criterion& c) {
        auto timed_count = [&](const std::string& what, const IntegerMatrix& a, EnumerationOptions options,
                               std::size_t expected, std::optional<std::map<std::size_t, std::size_t>> hist = {}) {
            const auto t0 = Clock::now();
            const auto b = enumerate_circuits(a, options);
            const double secs = seconds_since(t0);
            record_invariants(a, b, options.reduced ? a.rows() : a.rows() + 1);
            std::string line = what + ": " + std::to_string(b.size()) + " (expected " + std::to_string(expected) + ")";
            bool ok = b.size() == expected && secs < 60;
            if (hist) {
                line += " histogram " + histogram_string(b.histogram()) + " (expected " + histogram_string(*hist) + ")";
                ok = ok && b.histogram() == *hist;
            }
            c.check(ok, line + ", " + fixed(secs, 2) + " s");
            return b;
        };
        for (std::size_t d : {3u, 4u}) {
            const auto m = main_effects_2(d);
            timed_count("2^" + std::to_string(d) + " main effects, full basis", model_matrix(full_factorial(m.factors), m),
                        {}, d == 3 ? 20 : 1348);
        }
        const auto m322 = load_model("m322.json");
        const auto full322 = model_matrix(full_factorial(m322.factors), m322);
        const auto b322 = timed_count("3x2x2 with B*C, full basis", full322, {}, 42, {{{4, 18}, {6, 24}}});

        const auto f9 = load("f9.csv");
        const auto ff = full_factorial(m322.factors);
        std::vector<std::size_t> positions;
        for (const auto& run : f9.runs)
            positions.push_back(static_cast<std::size_t>(std::find(ff.runs.begin(), ff.runs.end(), run) - ff.runs.begin()));
        const auto restricted = restrict(b322, positions);
        c.check(restricted.size() == 7 && restricted.histogram() == std::map<std::size_t, std::size_t>{{4, 3}, {6, 4}},
                "9-run fraction, restricted basis: " + std::to_string(restricted.size()) + " histogram " +
                    histogram_string(restricted.histogram()) + " (expected 7 {4:3, 6:4})");

        const auto me5 = load_model("me5.json");
        timed_count("PB12 first five columns, reduced basis", model_matrix(load("pb12_5.csv"), me5), {.reduced = true, .max_support = {}}, 91);
        const auto m5 = main_effects_2(5);
        timed_count("2^5 main effects, reduced basis", model_matrix(full_factorial(m5.factors), m5), {.reduced = true, .max_support = {}},
                    44560);
    });

    run("C2", "worked 9-run example, every seed 0..99", [](Criterion& c) {
        const auto design = load("f9.csv");
        const auto analysis = analyze(design, load_model("m322.json"));
        const std::set<std::string> first_ties{"(-1,1,-1)", "(0,1,-1)", "(1,1,-1)"};
        const std::set<std::string> second_ties{"(0,-1,-1)", "(0,1,-1)", "(1,-1,-1)", "(1,1,-1)"};
        const std::vector<Rational> expected{Rational(50, 84), Rational(20, 28), Rational(6, 7), Rational(1)};
        bool sequence_ok = true, first_ok = true, second_ok = true, surviving_ok = true;
        std::size_t matching_first = 0;
        auto levels = [&](const std::vector<std::size_t>& runs) {
            std::set<std::string> out;
            for (std::size_t r : runs)
                out.insert(design.levels_string(r));
            return out;
        };
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto t = nested_sequence(analysis, 6, {.seed = seed});
            for (std::size_t k = 0; k <= 3; ++k)
                sequence_ok = sequence_ok && t.robustness_after(k).value == expected[k];
            first_ok = first_ok && levels(t.steps[0].tie_set) == first_ties;
            if (design.levels_string(t.steps[0].removed) == "(-1,1,-1)") {
                ++matching_first;
                second_ok = second_ok && levels(t.steps[1].tie_set) == second_ties;
            }
            surviving_ok = surviving_ok && t.initial_circuits == 7 && t.steps[0].surviving_circuits == 3 &&
                           t.steps[1].surviving_circuits == 1 && t.steps[2].surviving_circuits == 0;
        }
        c.check(sequence_ok, "robustness 50/84, 20/28, 6/7, 1 at sizes 9, 8, 7, 6");
        c.check(first_ok, "first tie set {(-1,+1,-1), (0,+1,-1), (+1,+1,-1)}");
        c.check(second_ok && matching_first > 0,
                "second tie set {(0,-1,-1), (0,+1,-1), (+1,-1,-1), (+1,+1,-1)} after removing (-1,+1,-1) (" +
                    std::to_string(matching_first) + " of 100 seeds)");
        c.check(surviving_ok, "surviving circuits 7 -> 3 -> 1 -> 0");
    });

    run("C3", "worked 9-run example, exhaustive sub-fraction distributions", [](Criterion& c) {
        const auto analysis = analyze(load("f9.csv"), load_model("m322.json"));
        const std::vector<std::map<Rational, std::size_t>> expected = {
            {{Rational(15, 28), 6}, {Rational(20, 28), 3}},
            {{Rational(0), 3}, {Rational(4, 7), 24}, {Rational(6, 7), 9}},
            {{Rational(0), 34}, {Rational(1), 50}}};
        for (std::size_t k = 1; k <= 3; ++k) {
            const auto d = distribution(analysis, k);
            c.check(d.exact && d.histogram() == expected[k - 1],
                    "size " + std::to_string(9 - k) + ": " + histogram_string(d.histogram()));
        }
    });

    run("C4", "PB12 five-factor bench", [](Criterion& c) {
        const auto t0 = Clock::now();
        const auto analysis = analyze(load("pb12_5.csv"), load_model("me5.json"));
        const double table[6][3] = {{0.903, 0.903, 0.903}, {0.905, 0.905, 0.905}, {0.917, 0.917, 0.929},
                                    {0.929, 0.964, 0.964}, {1, 1, 1},             {1, 1, 1}};
        const double r_star[7] = {0.903, 0.903, 0.905, 0.917, 0.964, 1, 1};
        for (std::size_t k = 1; k <= 6; ++k) {
            const auto d = distribution(analysis, k);
            bool ok = d.exact;
            std::string line = "k=" + std::to_string(k) + " exact over " + std::to_string(d.samples.size()) + ":";
            for (std::size_t q = 0; q < 3; ++q) {
                const double v = to_double(d.percentiles.at(reported_percentiles[q]));
                ok = ok && std::abs(std::round(v * 1000) / 1000 - table[k - 1][q]) <= 0.002 + 1e-9;
                line += " " + fixed(v, 3);
            }
            c.check(ok, line);
        }
        std::vector<std::uint64_t> matching;
        bool tail_ok = true;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto t = nested_sequence(analysis, 6, {.seed = seed});
            bool all = true;
            for (std::size_t k = 0; k <= 6; ++k)
                all = all && std::abs(to_double(t.robustness_after(k).value) - r_star[k]) < 0.0005;
            if (all)
                matching.push_back(seed);
            tail_ok = tail_ok && t.robustness_after(5).value == 1 && t.robustness_after(6).value == 1;
        }
        c.check(!matching.empty(), "r_* 0.903, 0.905, 0.917, 0.964, 1, 1 reproduced by " +
                                       std::to_string(matching.size()) + " of 100 seeds" +
                                       (matching.empty() ? "" : " (first: " + std::to_string(matching.front()) + ")"));
        c.check(tail_ok, "last two steps reach 1 for every seed");
        const double secs = seconds_since(t0);
        c.check(secs < 300, "runtime " + fixed(secs, 2) + " s < 300 s");
    });

    run("C5", "OA(27, 3^4) bench", [](Criterion& c) {
        const auto t0 = Clock::now();
        const auto design = orthogonal_array_3_4();
        const auto model = load_model("oa27.json");
        const auto analysis = analyze(design, model);
        record_invariants(*analysis.matrix, analysis.basis, analysis.p());
        c.check(analysis.basis.size() == 22068,
                "reduced basis " + std::to_string(analysis.basis.size()) + " circuits (expected 22068)");

        const auto exact = robustness_exact(analysis.full_fraction(), analysis.basis);
        c.check(std::abs(to_double(exact.value) - 0.308) <= 0.002,
                "r0 exact over C(27,9) = " + std::to_string(exact.total_count) + ": " + exact.ratio() + " = " +
                    exact.decimal(5) + " (expected 0.308 +- 0.002)");
        const auto sampled = robustness_sampled(analysis.full_fraction(), analysis.basis, 100'000, 0);
        c.check(std::abs(to_double(sampled.value) - 0.308) <= 0.002,
                "r0 from 100000 sampled subsets: " + sampled.decimal(5) + " (expected 0.308 +- 0.002)");

        const double table[18][4] = {
            {0.322, 0.336, 0.337, 0.319}, {0.329, 0.338, 0.345, 0.324}, {0.33, 0.34, 0.346, 0.334},
            {0.331, 0.34, 0.348, 0.336},  {0.331, 0.343, 0.35, 0.346},  {0.334, 0.348, 0.355, 0.356},
            {0.338, 0.353, 0.361, 0.37},  {0.341, 0.358, 0.368, 0.392}, {0.344, 0.363, 0.374, 0.415},
            {0.349, 0.375, 0.389, 0.443}, {0.359, 0.387, 0.407, 0.469}, {0.369, 0.406, 0.422, 0.509},
            {0.376, 0.418, 0.448, 0.537}, {0.4, 0.455, 0.492, 0.614},   {0.409, 0.491, 0.55, 0.673},
            {0.418, 0.582, 0.6, 0.782},   {0.6, 0.6, 0.8, 1},           {1, 1, 1, 1}};
        const auto report = bench_report(analysis, 9, {});
        bool pct_ok = true;
        double worst = 0;
        for (std::size_t k = 1; k <= 18; ++k) {
            const auto& row = report.rows[k];
            const double got[4] = {to_double(row.p75), to_double(row.p90), to_double(row.p95), to_double(row.r_star)};
            std::string line = "k=" + std::to_string(k) + ":";
            for (std::size_t q = 0; q < 3; ++q) {
                worst = std::max(worst, std::abs(got[q] - table[k - 1][q]));
                pct_ok = pct_ok && std::abs(got[q] - table[k - 1][q]) <= 0.03;
                line += " " + fixed(got[q], 3);
            }
            line += "  r_* " + fixed(got[3], 3) + " (listed " + fixed(table[k - 1][3], 3) + ")";
            c.note(line);
        }
        c.check(pct_ok, "sampled percentiles within 0.03 of the listed table (largest gap " + fixed(worst, 3) + ")");
        const double secs = seconds_since(t0);
        c.check(secs < 1800, "runtime " + fixed(secs, 2) + " s < 1800 s");
    });

    run("C6", "property suites", [](Criterion& c) {
        std::mt19937_64 gen(20240601);
        // Circuit saturation test against determinants, every p-subset.
        std::size_t matrices = 0, subsets = 0;
        bool equivalent = true;
        for (int trial = 0; trial < 60; ++trial) {
            const std::size_t p = 1 + trial % 5;
            const std::size_t n = std::min<std::size_t>(10, p + 1 + trial % 6);
            const auto a = oracle::random_full_rank(gen, p, n, -2, 2);
            const auto analysis = analyze(a, 1);
            record_invariants(a, enumerate_circuits(a), p + 1);
            const Fraction f = analysis.full_fraction();
            for_each_combination(n, p, [&](const std::vector<std::size_t>& s) {
                ++subsets;
                equivalent = equivalent && is_saturated_circuits(analysis.basis, s) == is_saturated_det(f, s);
            });
            ++matrices;
        }
        c.check(equivalent, "circuit test == determinant test on " + std::to_string(subsets) + " p-subsets of " +
                                std::to_string(matrices) + " random matrices (p <= 5, n <= 10, entries in [-2, 2])");

        // Restricting the ambient basis equals enumerating the sub-fraction.
        const auto m322 = load_model("m322.json");
        const auto a322 = model_matrix(full_factorial(m322.factors), m322);
        const auto full = enumerate_circuits(a322);
        std::size_t restricted = 0;
        bool restriction_ok = true;
        while (restricted < 60) {
            std::vector<std::size_t> runs(a322.cols());
            std::iota(runs.begin(), runs.end(), 0);
            std::shuffle(runs.begin(), runs.end(), gen);
            runs.resize(6 + gen() % 7);
            std::sort(runs.begin(), runs.end());
            const auto sub = a322.select_columns(runs);
            if (rank(sub) < sub.rows())
                continue;
            const auto direct = enumerate_circuits(sub);
            record_invariants(sub, direct, sub.rows() + 1);
            restriction_ok = restriction_ok && restrict(full, runs).circuits() == direct.circuits();
            ++restricted;
        }
        c.check(restriction_ok, "restriction consistency on " + std::to_string(restricted) + " random sub-fractions");

        // Cauchy-Binet on a consecutive-ones (interval) matrix, which is totally unimodular.
        IntegerMatrix tu(5, 11);
        const std::size_t intervals[5][2] = {{0, 4}, {2, 7}, {3, 5}, {6, 10}, {1, 9}};
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = intervals[i][0]; j <= intervals[i][1]; ++j)
                tu(i, j) = 1;
        const auto tua = analyze(tu, 1);
        record_invariants(tu, tua.basis, 5);
        const auto r = robustness_exact(tua.full_fraction(), tua.basis);
        const BigInt gram = determinant(tu * tu.transpose());
        c.check(BigInt(r.saturated_count) == gram, "Cauchy-Binet: saturated count " + std::to_string(r.saturated_count) +
                                                       " == det(A A^t) = " + gram.str() + " on a 5 x 11 interval matrix");

        // Traces do not depend on the thread count.
        bool deterministic = true;
        const auto f9 = load("f9.csv");
        const auto pb = load("pb12_5.csv");
        const auto me5 = load_model("me5.json");
        for (unsigned threads : {1u, 2u, 4u}) {
            for (std::uint64_t seed : {0u, 7u, 42u}) {
                const auto a = trace_json(nested_sequence(f9, m322, 6, {.seed = seed, .threads = 1}), f9).dump();
                const auto b = trace_json(nested_sequence(f9, m322, 6, {.seed = seed, .threads = threads}), f9).dump();
                const auto x = trace_json(nested_sequence(pb, me5, 6, {.seed = seed, .threads = 1}), pb).dump();
                const auto y = trace_json(nested_sequence(pb, me5, 6, {.seed = seed, .threads = threads}), pb).dump();
                deterministic = deterministic && a == b && x == y;
            }
        }
        const auto oa = orthogonal_array_3_4();
        const auto oam = load_model("oa27.json");
        const SequenceOptions capped{.seed = 3, .enumeration_cap = 10'000, .max_subsets = 500, .threads = 1};
        auto threaded = capped;
        threaded.threads = 4;
        deterministic = deterministic && trace_json(nested_sequence(oa, oam, 9, capped), oa).dump() ==
                                             trace_json(nested_sequence(oa, oam, 9, threaded), oa).dump();
        c.check(deterministic, "traces byte-identical for 1, 2 and 4 threads (exact and sampled robustness)");
        c.check(all_invariants, "circuit invariants (kernel, gcd 1, sign, support size, incomparability) on " +
                                    std::to_string(invariant_checks) + " enumerated bases");
    });

    run("C7", "20-run design over {-1,+1}^5 with the 15-term quadratic model", [](Criterion& c) {
        const auto design = load("quad5_pm1_20.csv");
        const auto model = load_model("quad5_pm1.json");
        c.note("model has " + std::to_string(model.parameter_count()) + " parameters; design has " +
               std::to_string(design.size()) + " runs");
        const auto t0 = Clock::now();
        const auto analysis = analyze(design, model);
        const auto trace = nested_sequence(analysis, analysis.p(), {});
        bool monotone = true;
        for (std::size_t k = 1; k <= trace.steps.size(); ++k)
            monotone = monotone && trace.robustness_after(k).value >= trace.robustness_after(k - 1).value;
        c.check(monotone && trace.robustness_after(trace.steps.size()).value == 1,
                "r_* non-decreasing up to 1 in " + fixed(seconds_since(t0), 2) + " s");
    });

    // Informational, not gated: the same pipeline on a three-level candidate set.
    {
        const auto t0 = Clock::now();
        try {
            const auto design = load("quad5_20.csv");
            const auto analysis = analyze(design, load_model("quad5.json"));
            const auto trace = nested_sequence(analysis, analysis.p(), {});
            bool monotone = true;
            std::string seq;
            for (std::size_t k = 0; k <= trace.steps.size(); ++k) {
                monotone = monotone && (k == 0 || trace.robustness_after(k).value >= trace.robustness_after(k - 1).value);
                seq += (k ? ", " : "") + trace.robustness_after(k).decimal(4);
            }
            std::cout << "INFO C7-substitute 20-run design over {-1,0,+1}^5, same model: " << analysis.basis.size()
                      << " reduced circuits; r_* " << seq << (monotone ? " (non-decreasing)" : " (NOT monotone)") << ", "
                      << fixed(seconds_since(t0), 2) << " s\n";
        } catch (const std::exception& e) {
            std::cout << "INFO C7-substitute failed: " << e.what() << '\n';
        }
    }

    std::size_t failed = 0;
    for (const auto& r : results)
        failed += !r.ok;
    std::cout << "summary: " << results.size() - failed << " passed, " << failed << " failed\n";
    return static_cast<int>(failed);
}
