#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "alloc_counter.hpp"
#include "psidiff/commands.hpp"
#include "psidiff/config.hpp"

using namespace psidiff;
using nlohmann::json;

namespace {

using Table = std::vector<std::vector<std::string>>;

Table parse_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        if (!line.empty() && line.back() == ',') row.emplace_back();
        t.push_back(row);
    }
    return t;
}

std::size_t column(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.at(0).size(); ++i)
        if (t[0][i] == name) return i;
    throw std::runtime_error("no column " + name);
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("psidiff-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

CommandOptions quiet() {
    CommandOptions o;
    o.timing = false;
    return o;
}

}  // namespace

TEST(Config, DefaultsAndUnknownKeys) {
    const auto c = parse_config(json::object());
    EXPECT_EQ(c.prior, PriorKind::uniform);
    EXPECT_FALSE(c.hash.empty());
    EXPECT_THROW(parse_config(json{{"bogus", 1}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"sampling", {{"nucleus", 0.9}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"verify", {{"K", {2}}, {"extra", true}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"kappa", {{{"kind", "rescale"}, {"eta", 0.05}, {"value", 1}}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"curriculum", {{"memory", 1}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"nelbo", {{"curriculum", {{"k", 2}, {"width", 1}}}}}}), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_THROW(parse_config(json{{"prior", "gaussian"}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"steps", {-1}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"sampling", {{"nucleus_p", 0.0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"kappa", {{{"kind", "rescale"}, {"eta", 2.0}}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"nelbo", {{"estimators", {"exact"}}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"schedules", {{"training", "linear-ish"}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"seeds", "one"}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"sampling", {{"denoiser", {{"kind", "magic"}}}}}}), ConfigError);
}

TEST(Config, ParsesSchedulesAndSources) {
    const auto c = parse_config(json{{"prior", "masked"},
                                     {"source", {{"fixture", "masked4"}}},
                                     {"schedules", {{"sampling", {{"kind", "log-linear"}, {"eps", 1e-3}}}}},
                                     {"kappa", {{{"kind", "loop"}, {"eta", 0.05}, {"t_on", 0.6}, {"t_off", 0.3}}}},
                                     {"steps", {8, 16}}});
    EXPECT_EQ(c.prior, PriorKind::masked);
    EXPECT_DOUBLE_EQ(c.sampling_schedule.eps(), 1e-3);
    ASSERT_EQ(c.kappa.size(), 1u);
    EXPECT_EQ(c.kappa[0].kind(), KappaKind::loop);
    EXPECT_EQ(c.steps, (std::vector<int>{8, 16}));
}

TEST(Config, HashIsStableAndSensitive) {
    const json a = {{"steps", {4, 8}}, {"seeds", {1}}};
    const json b = {{"seeds", {1}}, {"steps", {4, 8}}};
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    EXPECT_NE(config_hash(a), config_hash(json{{"steps", {4, 9}}, {"seeds", {1}}}));
    EXPECT_EQ(parse_config(a).hash, config_hash(a));
}

TEST(Config, LoadsShippedConfigs) {
    for (const char* name : {"verify.json", "sweep.json", "bench.json", "nelbo.json"}) {
        EXPECT_NO_THROW(load_config(std::filesystem::path(PSIDIFF_CONFIG_DIR) / name)) << name;
    }
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Csv, WriterEnforcesShape) {
    std::ostringstream os;
    CsvWriter w(os, {"a", "b"});
    w.row({"1", "2"});
    EXPECT_THROW(w.row({"1"}), std::logic_error);
    EXPECT_THROW(w.row({"1", "x,y"}), std::logic_error);
    EXPECT_THROW(w.row({"1", "x\ny"}), std::logic_error);
    EXPECT_EQ(os.str(), "a,b\n1,2\n");
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Commands, VerifyMarginalsPasses) {
    auto c = parse_config(json{{"verify", {{"K", {2, 3}}, {"T", {2, 4}}, {"random_kappa_trials", 2}}},
                               {"kappa", {{{"kind", "constant"}, {"value", 1}}, {{"kind", "rescale"}, {"eta", 0.05}}}}});
    std::ostringstream os;
    EXPECT_EQ(cmd_verify_marginals(c, quiet(), os), 0);
    const auto t = parse_csv(os.str());
    EXPECT_EQ(t[0], (std::vector<std::string>{"config_hash", "prior", "K", "T", "schedule", "max_tv"}));
    // 2 priors x 2 K x 2 T x (2 schedules + 2 random)
    EXPECT_EQ(t.size(), 1u + 2 * 2 * 2 * 4);
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_EQ(t[i][0], c.hash);
        EXPECT_LT(std::stod(t[i][5]), kMarginalTolerance);
    }
}

TEST(Commands, SampleSweepIsDeterministicAndSane) {
    const json doc = {{"source", {{"fixture", "skewed4"}}},
                      {"kappa", {{{"kind", "constant"}, {"value", 1}}, {{"kind", "rescale"}, {"eta", 0.05}}}},
                      {"steps", {0, 8, 64}},
                      {"sampling", {{"num_samples", 4000}, {"trajectories", 2}}},
                      {"seeds", {4}}};
    const auto c = parse_config(doc);
    std::ostringstream a, b, samples;
    auto o = quiet();
    o.samples = &samples;
    EXPECT_EQ(cmd_sample_sweep(c, o, a), 0);
    EXPECT_EQ(cmd_sample_sweep(c, quiet(), b), 0);
    EXPECT_EQ(a.str(), b.str());
    const auto t = parse_csv(a.str());
    EXPECT_EQ(t[0], (std::vector<std::string>{"config_hash", "sampler", "T", "tv_distance", "tv_stderr",
                                              "unigram_entropy", "runtime_seconds", "seed"}));
    const auto tv = column(t, "tv_distance");
    const auto se = column(t, "tv_stderr");
    const auto ent = column(t, "unigram_entropy");
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_GE(std::stod(t[i][tv]), 0.0);
        EXPECT_LE(std::stod(t[i][tv]), 1.0);
        EXPECT_LE(std::stod(t[i][ent]), std::log(4.0) + 1e-12);
        EXPECT_EQ(t[i][column(t, "runtime_seconds")], "0");
        if (t[i][1] == "prior") {
            // Uniform prior samples are maximally spread.
            EXPECT_NEAR(std::stod(t[i][ent]), std::log(4.0), 0.01);
            EXPECT_EQ(t[i][2], "0");
        }
    }
    // Ancestral rows: TV at T=64 not worse than at T=8 beyond 3 SE.
    double tv8 = -1, se8 = 0, tv64 = -1, se64 = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i][1] != "ancestral") continue;
        if (t[i][2] == "8") tv8 = std::stod(t[i][tv]), se8 = std::stod(t[i][se]);
        if (t[i][2] == "64") tv64 = std::stod(t[i][tv]), se64 = std::stod(t[i][se]);
    }
    ASSERT_GE(tv8, 0.0);
    ASSERT_GE(tv64, 0.0);
    EXPECT_LE(tv64, tv8 + 3 * std::hypot(se8, se64));
    const std::string rec = samples.str();
    EXPECT_NE(rec.find("final 4 8 ancestral 0 "), std::string::npos);
    EXPECT_NE(rec.find("step 4 8 ancestral 1 "), std::string::npos);
}

TEST(Commands, SampleSweepSeedOverride) {
    const auto c = parse_config(json{{"steps", {4}}, {"sampling", {{"num_samples", 200}}}});
    std::ostringstream a, b;
    auto o = quiet();
    o.seed = 99;
    EXPECT_EQ(cmd_sample_sweep(c, o, a), 0);
    EXPECT_NE(a.str().find(",99\n"), std::string::npos);
    o.seed = 100;
    cmd_sample_sweep(c, o, b);
    EXPECT_NE(a.str(), b.str());
}

TEST(Commands, CurriculumBenchReportsSparseAdvantage) {
    const auto c = parse_config(json{{"curriculum",
                                      {{"K", {1000}}, {"k", {5}}, {"tau", {1e-3}}, {"t", {0.5}}, {"trials", 2000},
                                       {"z_trials", 200}, {"memory_probes", 10}}},
                                     {"seeds", {3}}});
    const MemoryProbe probe{[] { alloc::begin(); }, [] {
                                alloc::end();
                                return alloc::peak_bytes();
                            }};
    auto o = quiet();
    o.probe = &probe;
    std::ostringstream os;
    EXPECT_EQ(cmd_curriculum_bench(c, o, os), 0);
    const auto t = parse_csv(os.str());
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].size(), 11u);
    EXPECT_EQ(t[1].size(), 11u);
    const auto ks = t[1][column(t, "ks_statistic_per_rank")];
    EXPECT_EQ(std::count(ks.begin(), ks.end(), ';'), 4);
    EXPECT_GT(std::stod(t[1][column(t, "bytes_peak")]), 0.0);
    EXPECT_LT(std::stod(t[1][column(t, "z_rel_err_p99")]), 1e-3);
}

TEST(Commands, FitTransformReusesSidecarByteForByte) {
    TempDir dir;
    const auto path = dir.path / "k16.cache";
    std::ostringstream first, second;
    EXPECT_EQ(cmd_fit_transform(16, 150, path, quiet(), first), 0);
    std::ifstream f1(path);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
    EXPECT_EQ(cmd_fit_transform(16, 150, path, quiet(), second), 0);
    std::ifstream f2(path);
    const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
    EXPECT_EQ(bytes1, bytes2);
    const auto t1 = parse_csv(first.str());
    const auto t2 = parse_csv(second.str());
    EXPECT_EQ(t1[1][column(t1, "cache_reused")], "0");
    EXPECT_EQ(t2[1][column(t2, "cache_reused")], "1");
    EXPECT_LT(std::stod(t1[1][column(t1, "series_vs_quadrature_max_error")]), 1e-10);
    EXPECT_LE(std::stod(t1[1][column(t1, "poly_max_error")]), std::stod(t1[1][column(t1, "poly_fit_bound")]));
    EXPECT_EQ(bytes1.rfind("psidiff-transform-cache 1\n", 0), 0u);
    // A sidecar for another K is rebuilt, not trusted.
    std::ostringstream third;
    EXPECT_EQ(cmd_fit_transform(8, 150, path, quiet(), third), 0);
    const auto t3 = parse_csv(third.str());
    EXPECT_EQ(t3[1][column(t3, "cache_reused")], "0");
}

TEST(Commands, NelboCheckRowsAgree) {
    const auto c = parse_config(json{{"source", {{"kind", "random-markov"}, {"K", 4}, {"L", 2}, {"seed", 3}}},
                                     {"nelbo", {{"n_mc", 20000}, {"estimators", {"discrete-induced", "gaussian"}}}},
                                     {"seeds", {2}}});
    std::ostringstream os;
    EXPECT_EQ(cmd_nelbo_check(c, quiet(), os), 0);
    const auto t = parse_csv(os.str());
    EXPECT_EQ(t[0], (std::vector<std::string>{"config_hash", "estimator", "sequence", "estimate", "stderr", "n_mc",
                                              "seed"}));
    ASSERT_EQ(t.size(), 3u);
    const double a = std::stod(t[1][3]), sa = std::stod(t[1][4]);
    const double b = std::stod(t[2][3]), sb = std::stod(t[2][4]);
    EXPECT_NEAR(a, b, 3 * std::hypot(sa, sb));
    EXPECT_EQ(t[1][5], "20000");

    const auto m = parse_config(json{{"prior", "masked"}, {"source", {{"fixture", "masked4"}}}});
    std::ostringstream ignored;
    EXPECT_THROW(cmd_nelbo_check(m, quiet(), ignored), std::exception);
}

TEST(Commands, MakeDenoiserKinds) {
    const auto src = SyntheticSource::fixture("skewed4");
    const auto prior = Prior::uniform(4);
    const auto sched = NoiseSchedule::log_linear();
    for (const char* kind : {"oracle", "factored-oracle", "posterior-mean", "corrupted"}) {
        DenoiserSpec s;
        s.kind = kind;
        const auto d = make_denoiser(s, src, prior, sched, 0);
        EXPECT_EQ(d->vocab_size(), 4) << kind;
    }
    DenoiserSpec tab;
    tab.kind = "tabular";
    tab.train_steps = 500;
    EXPECT_EQ(make_denoiser(tab, src, prior, sched, 0)->vocab_size(), 4);
}
