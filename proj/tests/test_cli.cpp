#include "nestdoe/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nestdoe;

namespace {

const std::string data_dir = NESTDOE_TEST_DATA;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string data(const std::string& name) { return data_dir + "/" + name; }

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "nestdoe_cli_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(Cli, VersionAndUsage) {
    auto v = run({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find("nestdoe 0.1.0"), std::string::npos);
    auto none = run({});
    EXPECT_EQ(none.code, 1);
    auto bogus = run({"frobnicate"});
    EXPECT_EQ(bogus.code, 1);
    EXPECT_NE(bogus.err.find("unknown subcommand 'frobnicate'"), std::string::npos);
    EXPECT_NE(bogus.err.find("Usage"), std::string::npos);
    EXPECT_EQ(run({"circuits", "--design", data("f9.csv")}).code, 1); // --model missing
    EXPECT_EQ(run({"circuits", "--design", data("f9.csv"), "--model", data("m322.json"), "--format", "xml"}).code, 1);
}

TEST(Cli, MissingFileNamesThePath) {
    auto r = run({"circuits", "--design", "/no/such/design.csv", "--model", data("m322.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/no/such/design.csv"), std::string::npos);
    auto m = run({"robustness", "--design", data("f9.csv"), "--model", "/no/such/model.json"});
    EXPECT_EQ(m.code, 2);
    EXPECT_NE(m.err.find("/no/such/model.json"), std::string::npos);
}

TEST(Cli, RankDeficientModelIsADataError) {
    auto r = run({"circuits", "--design", data("quad5_pm1_20.csv"), "--model", data("quad5_pm1.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("rank 10 < p = 15"), std::string::npos);
}

TEST(Cli, CircuitsListing) {
    auto r = run({"circuits", "--design", data("f9.csv"), "--model", data("m322.json"), "--reduced"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "0 0 0 1 -1 0 -1 0 1\n"
                     "0 1 -1 -1 0 1 1 0 -1\n"
                     "0 1 -1 0 -1 1 0 0 0\n"
                     "1 -1 0 -1 1 0 1 -1 0\n"
                     "1 -1 0 0 0 0 0 -1 1\n"
                     "1 0 -1 -1 0 1 1 -1 0\n"
                     "1 0 -1 0 -1 1 0 -1 1\n");
    auto j = run({"circuits", "--design", data("f9.csv"), "--model", data("m322.json"), "--format", "json"});
    ASSERT_EQ(j.code, 0);
    const auto parsed = nlohmann::json::parse(j.out);
    ASSERT_EQ(parsed.size(), 7u);
    EXPECT_EQ(parsed[0]["support"], (nlohmann::json{3, 4, 6, 8}));
    EXPECT_EQ(parsed[0]["entries"], (nlohmann::json{1, -1, -1, 1}));
}

TEST(Cli, PlackettBurmanReducedListing) {
    auto r = run({"circuits", "--design", data("pb12_5.csv"), "--model", data("me5.json"), "--reduced"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(r.out), 90u);
}

TEST(Cli, Robustness) {
    auto r = run({"robustness", "--design", data("f9.csv"), "--model", data("m322.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("robustness 25/42 (0.5952)"), std::string::npos);
    EXPECT_NE(r.out.find("saturated 50 of 84"), std::string::npos);

    const auto runs = scratch("runs.txt");
    std::ofstream(runs) << "1 3 4 5 6 8 9\n";
    auto sub = run({"robustness", "--design", data("f9.csv"), "--model", data("m322.json"), "--runs", runs.string()});
    ASSERT_EQ(sub.code, 0) << sub.err;
    EXPECT_NE(sub.out.find("robustness 6/7"), std::string::npos);

    std::ofstream(runs) << "1 77\n";
    EXPECT_EQ(run({"robustness", "--design", data("f9.csv"), "--model", data("m322.json"), "--runs", runs.string()}).code, 2);

    auto s = run({"robustness", "--design", data("f9.csv"), "--model", data("m322.json"), "--sample", "30", "--seed", "2"});
    ASSERT_EQ(s.code, 0);
    EXPECT_NE(s.out.find("of 30 p-subsets (sampled, seed 2)"), std::string::npos);
    EXPECT_EQ(run({"robustness", "--design", data("f9.csv"), "--model", data("m322.json"), "--exact", "--sample", "3"}).code,
              1);
}

TEST(Cli, SequenceEndsSaturatedAndIsReproducible) {
    const std::vector<std::string> args = {"sequence", "--design", data("f9.csv"), "--model", data("m322.json"),
                                           "--target", "6",        "--seed",       "7"};
    auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["final_fraction"].size(), 6u);
    EXPECT_EQ(j["steps"].back()["robustness_exact"], "1/1");
    EXPECT_EQ(run(args).out, r.out);
    auto threaded = args;
    threaded.insert(threaded.begin(), {"--threads", "3"});
    EXPECT_EQ(run(threaded).out, r.out);

    const auto trace = scratch("trace.json"), order = scratch("order.csv");
    auto to_file = args;
    to_file.insert(to_file.end(), {"--out", trace.string(), "--runorder", order.string()});
    ASSERT_EQ(run(to_file).code, 0);
    EXPECT_EQ(slurp(trace), r.out);
    const auto ordered = load_design_csv(order.string());
    ASSERT_EQ(ordered.size(), 9u);
    EXPECT_EQ(ordered.labels[8], j["steps"][0]["removed_run_label"]);

    auto bad = args;
    bad[6] = "4";
    EXPECT_EQ(run(bad).code, 2);
}

TEST(Cli, ModelMatrixAndEmitDesignRoundTrip) {
    const auto emitted = scratch("pb12_emitted.csv");
    auto r = run({"model-matrix", "--generate", "pb12", "--model", data("me5.json"), "--emit-design", emitted.string(),
                  "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(r.out), 6u);
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "1,1,1,1,1,1,1,1,1,1,1,1");

    const auto model = load_model_json(data("me5.json"));
    const auto generated = plackett_burman_12().leading_columns({"A", "B", "C", "D", "E"});
    const auto reread = load_design_csv(emitted.string());
    EXPECT_EQ(reread, generated);
    auto a = std::make_shared<const IntegerMatrix>(model_matrix(generated, model));
    auto b = std::make_shared<const IntegerMatrix>(model_matrix(reread, model));
    EXPECT_EQ(Fraction::all(a), Fraction::all(b));
    EXPECT_EQ(slurp(emitted), slurp(data("pb12_5.csv")));

    auto j = run({"model-matrix", "--design", data("f9.csv"), "--model", data("m322.json"), "--format", "json"});
    ASSERT_EQ(j.code, 0);
    const auto parsed = nlohmann::json::parse(j.out);
    EXPECT_EQ(parsed["p"], 6);
    EXPECT_EQ(parsed["n"], 9);
    EXPECT_EQ(run({"model-matrix", "--model", data("me5.json")}).code, 1);
    EXPECT_EQ(run({"model-matrix", "--generate", "oa27", "--model", data("me5.json")}).code, 2);
}

TEST(Cli, DistributionAndBench) {
    auto d = run({"distribution", "--design", data("f9.csv"), "--model", data("m322.json"), "--k", "2"});
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_EQ(lines(d.out), 36u);
    EXPECT_EQ(std::count(d.out.begin(), d.out.end(), '0') >= 3, true);

    const auto dist = scratch("dist.csv");
    auto f = run({"distribution", "--design", data("f9.csv"), "--model", data("m322.json"), "--k", "1", "--out",
                  dist.string()});
    ASSERT_EQ(f.code, 0);
    EXPECT_EQ(lines(slurp(dist)), 9u);
    EXPECT_NE(f.out.find("p95 0.7143"), std::string::npos);
    EXPECT_EQ(run({"distribution", "--design", data("f9.csv"), "--model", data("m322.json"), "--k", "4"}).code, 2);

    const auto dir = scratch("report");
    auto b = run({"bench", "--design", data("pb12_5.csv"), "--model", data("me5.json"), "--target", "6", "--seed", "1",
                  "--out-dir", dir.string()});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(b.out.find("3\t0.917\t0.917\t0.929\t0.917"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "table.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "dist_k6.csv"));
}

TEST(Cli, EnvironmentOverridesCaps) {
    ::setenv("NESTDOE_MAX_FRACTIONS", "5", 1);
    auto d = run({"distribution", "--design", data("f9.csv"), "--model", data("m322.json"), "--k", "2"});
    ::unsetenv("NESTDOE_MAX_FRACTIONS");
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_EQ(lines(d.out), 5u);

    ::setenv("NESTDOE_ENUM_CAP", "10", 1);
    ::setenv("NESTDOE_MAX_SUBSETS", "7", 1);
    auto s = run({"sequence", "--design", data("f9.csv"), "--model", data("m322.json"), "--target", "8"});
    ::unsetenv("NESTDOE_ENUM_CAP");
    ::unsetenv("NESTDOE_MAX_SUBSETS");
    ASSERT_EQ(s.code, 0) << s.err;
    const auto j = nlohmann::json::parse(s.out);
    EXPECT_EQ(j["initial"]["method"], "sampled");
    EXPECT_EQ(j["initial"]["subsets"], 7);
}
