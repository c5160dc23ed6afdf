#pragma once

// Command-line front end. `run_cli` is the whole program; tools/nestdoe.cpp
// only forwards argv, so tests drive it in-process.

#include "nestdoe/circuits.hpp"
#include "nestdoe/distribution.hpp"
#include "nestdoe/error.hpp"
#include "nestdoe/model.hpp"
#include "nestdoe/removal.hpp"
#include "nestdoe/robustness.hpp"
#include "nestdoe/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace nestdoe::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_data = 2;

struct RunConfig {
    std::string design_path;
    std::string model_path;
    std::string generate; // full | pb12 | oa27, model-matrix only
    std::uint64_t seed = 0;
    std::uint64_t enumeration_cap = default_enumeration_cap;
    std::uint64_t max_subsets = default_max_subsets;
    std::uint64_t max_fractions = 1000;
    std::string format = "text";
    std::string out_path;
    unsigned threads = 0;
};

namespace detail {

/// Writes to `path`, or to `fallback` when `path` is empty or "-".
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_)
                throw Error("cannot write '" + path + "'");
            stream_ = file_.get();
        }
    }
    std::ostream& operator*() { return *stream_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

inline Design generated_design(const std::string& kind, const ModelSpec& model) {
    std::vector<std::string> names;
    for (const auto& f : model.factors)
        names.push_back(f.name);
    if (kind == "full")
        return full_factorial(model.factors);
    if (kind == "pb12") {
        if (names.size() > 11)
            throw ModelError("the 12-run Plackett-Burman design has at most 11 factors");
        return plackett_burman_12().leading_columns(names);
    }
    if (kind == "oa27") {
        if (names.size() != 4)
            throw ModelError("OA(27, 3^4) needs a model with exactly 4 factors");
        return orthogonal_array_3_4().leading_columns(names);
    }
    throw ArgumentError("unknown --generate value '" + kind + "' (full, pb12, oa27)");
}

inline Design load_or_generate(const RunConfig& cfg, const ModelSpec& model) {
    if (!cfg.generate.empty())
        return generated_design(cfg.generate, model);
    return load_design_csv(cfg.design_path);
}

inline std::vector<std::size_t> read_run_labels(const std::string& path, const Design& design) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open run list '" + path + "'");
    std::vector<std::size_t> runs;
    std::string label;
    while (in >> label) {
        auto it = std::find(design.labels.begin(), design.labels.end(), label);
        if (it == design.labels.end())
            throw ArgumentError(path + ": unknown run label '" + label + "'");
        runs.push_back(static_cast<std::size_t>(it - design.labels.begin()));
    }
    if (runs.empty())
        throw ArgumentError(path + ": no run labels");
    return runs;
}

inline nlohmann::json integer_json(const BigInt& v) {
    if (v >= std::numeric_limits<long long>::min() && v <= std::numeric_limits<long long>::max())
        return static_cast<long long>(v);
    return v.str();
}

/// Circuits in ascending lexicographic order of their dense vectors.
inline std::vector<const Circuit*> listing_order(const CircuitBasis& b) {
    std::vector<std::pair<std::vector<BigInt>, const Circuit*>> keyed;
    for (const auto& c : b.circuits())
        keyed.emplace_back(c.dense(b.n()), &c);
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<const Circuit*> out;
    for (const auto& [dense, c] : keyed)
        out.push_back(c);
    return out;
}

inline void print_circuits(std::ostream& out, const CircuitBasis& b, const std::string& format) {
    const auto order = listing_order(b);
    if (format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const Circuit* cp : order) {
            const Circuit& c = *cp;
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& e : c.entries)
                entries.push_back(integer_json(e));
            arr.push_back({{"support", c.support}, {"entries", entries}});
        }
        out << arr.dump(2) << '\n';
        return;
    }
    for (const Circuit* c : order) {
        const auto dense = c->dense(b.n());
        for (std::size_t j = 0; j < dense.size(); ++j)
            out << (j ? " " : "") << dense[j];
        out << '\n';
    }
}

inline void print_table(std::ostream& out, const BenchReport& report) {
    out << "k\tp75\tp90\tp95\tr_star\n";
    for (const auto& row : report.rows)
        out << row.k << '\t' << decimal_string(row.p75, 3) << '\t' << decimal_string(row.p90, 3) << '\t'
            << decimal_string(row.p95, 3) << '\t' << decimal_string(row.r_star, 3) << '\n';
}

} // namespace detail

/// Runs the tool on `args` (without the program name). Returns the exit code:
/// 0 success, 1 usage error, 2 data or model error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Circuit-based robustness of experimental designs and nested run removal", "nestdoe"};
    app.set_version_flag("--version", std::string("nestdoe ") + version_string + " (" + compiler_string + ", C++" +
                                           std::to_string(__cplusplus / 100 % 100) + ")");
    app.fallthrough();
    app.require_subcommand(1);
    RunConfig cfg;
    app.add_option("--threads", cfg.threads, "Worker threads (default: hardware threads)")->envname("NESTDOE_THREADS");

    auto add_design = [&](CLI::App* sub) {
        sub->add_option("--design", cfg.design_path, "Design CSV (run,<factor names...>)")->required();
        sub->add_option("--model", cfg.model_path, "Model JSON with 'factors' and 'terms'")->required();
    };
    auto add_caps = [&](CLI::App* sub) {
        sub->add_option("--max-subsets", cfg.max_subsets, "p-subsets sampled per fraction when not exhaustive")
            ->envname("NESTDOE_MAX_SUBSETS")
            ->check(CLI::PositiveNumber);
        sub->add_option("--enum-cap", cfg.enumeration_cap, "Largest C(n,p) enumerated exactly")
            ->envname("NESTDOE_ENUM_CAP")
            ->check(CLI::PositiveNumber);
    };

    auto* model_cmd = app.add_subcommand("model-matrix", "Print the integer model matrix A = X^t (p x n)");
    model_cmd->add_option("--design", cfg.design_path, "Design CSV");
    model_cmd->add_option("--generate", cfg.generate, "Generate the design instead: full, pb12 or oa27")
        ->check(CLI::IsMember({"full", "pb12", "oa27"}));
    model_cmd->add_option("--model", cfg.model_path, "Model JSON")->required();
    model_cmd->add_option("--format", cfg.format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
    model_cmd->add_option("--out", cfg.out_path, "Output file (default stdout)");
    std::string emit_design;
    model_cmd->add_option("--emit-design", emit_design, "Also write the design as CSV");

    auto* circuits_cmd = app.add_subcommand("circuits", "Enumerate the circuit basis");
    add_design(circuits_cmd);
    bool reduced = false;
    circuits_cmd->add_flag("--reduced", reduced, "Only supports of size <= p");
    circuits_cmd->add_option("--format", cfg.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    circuits_cmd->add_option("--out", cfg.out_path, "Output file (default stdout)");

    auto* robust_cmd = app.add_subcommand("robustness", "Robustness of a design or of a subset of its runs");
    add_design(robust_cmd);
    add_caps(robust_cmd);
    std::string runs_path;
    robust_cmd->add_option("--runs", runs_path, "File of run labels forming the fraction");
    bool exact_flag = false;
    std::optional<std::uint64_t> sample;
    auto* exact_opt = robust_cmd->add_flag("--exact", exact_flag, "Enumerate every p-subset (default)");
    robust_cmd->add_option("--sample", sample, "Classify N sampled p-subsets instead")
        ->check(CLI::PositiveNumber)
        ->excludes(exact_opt);
    robust_cmd->add_option("--seed", cfg.seed, "Sampling seed");

    auto* seq_cmd = app.add_subcommand("sequence", "Greedy nested removal down to a target size");
    add_design(seq_cmd);
    add_caps(seq_cmd);
    std::size_t target = 0;
    seq_cmd->add_option("--target", target, "Final fraction size (>= p)")->required();
    seq_cmd->add_option("--seed", cfg.seed, "Tie-breaking seed");
    seq_cmd->add_option("--out", cfg.out_path, "Trace JSON (default stdout)");
    std::string runorder_path;
    seq_cmd->add_option("--runorder", runorder_path, "Write the experiment order (F_p first) as design CSV");

    auto* dist_cmd = app.add_subcommand("distribution", "Robustness distribution of all size-(n-k) sub-fractions");
    add_design(dist_cmd);
    add_caps(dist_cmd);
    std::size_t k = 0;
    dist_cmd->add_option("--k", k, "Number of runs removed")->required();
    dist_cmd->add_option("--max-fractions", cfg.max_fractions, "Sub-fractions sampled when not exhaustive")
        ->envname("NESTDOE_MAX_FRACTIONS")
        ->check(CLI::PositiveNumber);
    dist_cmd->add_option("--seed", cfg.seed, "Sampling seed");
    dist_cmd->add_option("--out", cfg.out_path, "Distribution CSV, one value per line (default stdout)");

    auto* bench_cmd = app.add_subcommand("bench", "Greedy sequence vs. sub-fraction percentiles for every k");
    add_design(bench_cmd);
    add_caps(bench_cmd);
    bench_cmd->add_option("--target", target, "Final fraction size (>= p)")->required();
    bench_cmd->add_option("--seed", cfg.seed, "Seed for ties and sampling");
    bench_cmd->add_option("--max-fractions", cfg.max_fractions, "Sub-fractions sampled when not exhaustive")
        ->envname("NESTDOE_MAX_FRACTIONS")
        ->check(CLI::PositiveNumber);
    std::string out_dir;
    bench_cmd->add_option("--out-dir", out_dir, "Directory for table.csv and dist_k<K>.csv")->required();

    // The first positional word names the subcommand; --threads is the only
    // top-level option taking a separate value.
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--threads") {
            ++i;
            continue;
        }
        if (a.empty() || a.front() == '-')
            continue;
        if (app.get_subcommand_no_throw(a) == nullptr) {
            err << "error: unknown subcommand '" << a << "'\n\n" << app.help();
            return exit_usage;
        }
        break;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e, out, err);
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    }

    try {
        if (model_cmd->parsed()) {
            if (cfg.generate.empty() == cfg.design_path.empty()) {
                err << "model-matrix: give exactly one of --design or --generate\n" << app.help();
                return exit_usage;
            }
            const ModelSpec model = load_model_json(cfg.model_path);
            const Design design = detail::load_or_generate(cfg, model);
            const IntegerMatrix a = model_matrix(design, model);
            detail::Output o(cfg.out_path, out);
            if (cfg.format == "json") {
                nlohmann::json rows = nlohmann::json::array();
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    nlohmann::json row = nlohmann::json::array();
                    for (std::size_t j = 0; j < a.cols(); ++j)
                        row.push_back(detail::integer_json(a(i, j)));
                    rows.push_back(row);
                }
                *o << nlohmann::json{{"p", a.rows()}, {"n", a.cols()}, {"runs", design.labels}, {"rows", rows}}.dump(2)
                   << '\n';
            } else {
                const char sep = cfg.format == "csv" ? ',' : ' ';
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    for (std::size_t j = 0; j < a.cols(); ++j)
                        *o << (j ? std::string(1, sep) : "") << a(i, j);
                    *o << '\n';
                }
            }
            if (!emit_design.empty()) {
                detail::Output d(emit_design, out);
                write_design_csv(*d, design);
            }
            return exit_ok;
        }

        const ModelSpec model = load_model_json(cfg.model_path);
        const Design design = load_design_csv(cfg.design_path);

        if (circuits_cmd->parsed()) {
            EnumerationOptions options;
            options.reduced = reduced;
            options.threads = cfg.threads;
            const CircuitBasis b = enumerate_circuits(model_matrix(design, model), options);
            detail::Output o(cfg.out_path, out);
            detail::print_circuits(*o, b, cfg.format);
            return exit_ok;
        }

        if (robust_cmd->parsed()) {
            const DesignAnalysis analysis = analyze(design, model, cfg.threads);
            Fraction f = runs_path.empty() ? analysis.full_fraction()
                                           : Fraction(analysis.matrix, detail::read_run_labels(runs_path, design));
            const RobustnessValue r = sample ? robustness_sampled(f, analysis.basis, *sample, cfg.seed)
                                             : robustness_exact(f, analysis.basis, {cfg.enumeration_cap, cfg.threads});
            out << "robustness " << r.ratio() << " (" << r.decimal(4) << ")\n"
                << "saturated " << r.saturated_count << " of " << r.total_count << " p-subsets ("
                << (r.method == RobustnessMethod::exact ? "exact" : "sampled, seed " + std::to_string(cfg.seed))
                << ")\n"
                << "n " << f.size() << ", p " << analysis.p() << ", circuits in fraction "
                << analysis.basis.count_within(f.mask()) << '\n';
            return exit_ok;
        }

        SequenceOptions seq;
        seq.seed = cfg.seed;
        seq.enumeration_cap = cfg.enumeration_cap;
        seq.max_subsets = cfg.max_subsets;
        seq.threads = cfg.threads;

        if (seq_cmd->parsed()) {
            const RemovalTrace trace = nested_sequence(design, model, target, seq);
            {
                detail::Output o(cfg.out_path, out);
                *o << trace_json(trace, design).dump(2) << '\n';
            }
            if (!runorder_path.empty()) {
                detail::Output o(runorder_path, out);
                write_design_csv(*o, run_order(trace, design));
            }
            return exit_ok;
        }

        DistributionOptions dist;
        dist.max_fractions = cfg.max_fractions;
        dist.max_subsets = cfg.max_subsets;
        dist.seed = cfg.seed;
        dist.threads = cfg.threads;

        if (dist_cmd->parsed()) {
            const RobustnessDistribution d = distribution(design, model, k, dist);
            if (!cfg.out_path.empty() && cfg.out_path != "-") {
                detail::Output o(cfg.out_path, out);
                write_distribution_csv(*o, d);
                out << "k " << d.k << ": " << d.samples.size() << " sub-fractions ("
                    << (d.exact ? "exact" : "sampled") << ")\n";
                for (const auto& [q, v] : d.percentiles)
                    out << "p" << q << ' ' << decimal_string(v, 4) << '\n';
            } else {
                write_distribution_csv(out, d);
            }
            return exit_ok;
        }

        if (bench_cmd->parsed()) {
            const BenchReport report = bench_report(design, model, target, {seq, dist});
            write_bench_report(out_dir, report);
            detail::print_table(out, report);
            return exit_ok;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
    err << app.help();
    return exit_usage;
}

} // namespace nestdoe::cli
