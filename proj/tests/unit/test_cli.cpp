#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>
#include <grouplp/cli/commands.hpp>

using namespace grouplp;
using namespace grouplp::cli;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) { return std::string(GROUPLP_FIXTURE_DIR) + "/" + name; }

class CliTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("grouplp_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    /// Runs the built binary; returns its exit status.
    int run(const std::string& args) const
    {
        const std::string cmd = std::string(GROUPLP_CLI_PATH) + " " + args + " >" + path("stdout.txt") + " 2>" + path("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path dir_;
};

} // namespace

TEST(NumberFormatTest, RoundTripsExactly)
{
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int t = 0; t < 20000; ++t) {
        double x;
        const auto b = bits(gen);
        std::memcpy(&x, &b, sizeof x);
        if (std::isnan(x)) continue;
        double back = 0;
        ASSERT_TRUE(parse_double(format_double(x), back)) << format_double(x);
        EXPECT_EQ(std::memcmp(&x, &back, sizeof x), 0) << format_double(x);
    }
    double v = 0;
    EXPECT_TRUE(parse_double("inf", v));
    EXPECT_TRUE(std::isinf(v));
    EXPECT_FALSE(parse_double("1.5x", v));
    EXPECT_FALSE(parse_double("", v));
    EXPECT_EQ(format_double(2.0), "2");
}

TEST_F(CliTest, CsvErrorsNameFileAndLine)
{
    write_text(path("m.csv"), "a,b\n1,2\n3,oops\n");
    try {
        read_matrix_csv(path("m.csv"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("m.csv:3"), std::string::npos) << e.what();
    }
    write_text(path("r.csv"), "a,b\n1,2\n3\n");
    EXPECT_THROW(read_matrix_csv(path("r.csv")), ParseError);
    EXPECT_THROW(read_matrix_csv(path("missing.csv")), IoError);
}

TEST_F(CliTest, GroupsFileValidation)
{
    write_text(path("g.csv"), "name,start,size\na,0,2\nb,2,1\n");
    const auto g = read_groups(path("g.csv"), 3);
    EXPECT_EQ(g.names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(g.partition.size(0), 2u);
    EXPECT_THROW(read_groups(path("g.csv"), 4), ParseError);
    write_text(path("gap.csv"), "name,start,size\na,0,2\nb,3,1\n");
    EXPECT_THROW(read_groups(path("gap.csv"), 4), ParseError);
    write_text(path("hdr.csv"), "group,start,size\na,0,2\n");
    EXPECT_THROW(read_groups(path("hdr.csv"), 2), ParseError);
}

TEST_F(CliTest, ConfigRejectsUnknownKeys)
{
    EXPECT_THROW(fit_command_config_from_json(json::parse(R"({"fit": {"kapa": 1}})")), ParseError);
    EXPECT_THROW(fit_command_config_from_json(json::parse(R"({"famly": "gaussian"})")), ParseError);
    EXPECT_THROW(synth_config_from_json(json::parse(R"({"spec": {"d": 10, "q": 1}})")), ParseError);
    EXPECT_THROW(bench_config_from_json(json::parse(R"({"Jgrid": [10]})")), ParseError);
    EXPECT_THROW(fit_command_config_from_json(json::parse(R"({"fit": {"p": "two"}})")), ParseError);
    const auto c = fit_command_config_from_json(json::parse(R"({"fit": {"p": "inf", "kappa": 3}})"));
    EXPECT_TRUE(c.fit.p.is_infinite());
    EXPECT_EQ(to_json(c)["fit"]["p"], "inf");
}

TEST_F(CliTest, EffectiveConfigRoundTrips)
{
    auto c = synth_defaults();
    c.p_values = {PNorm(1.5), PNorm::infinity()};
    c.fit.initial_group = 3;
    const auto j = to_json(c);
    EXPECT_EQ(to_json(synth_config_from_json(j)), j);
    EXPECT_EQ(config_hash(j), config_hash(to_json(synth_config_from_json(j))));
    BenchConfig b;
    EXPECT_EQ(to_json(bench_config_from_json(to_json(b))), to_json(b));
}

TEST_F(CliTest, FitLargeKappaReportsInactiveConstraint)
{
    FitOptions o;
    o.design = fixture("toy2_design.csv");
    o.response = fixture("toy2_response.csv");
    o.kappa = 100.0;
    o.output = path("out.json");
    EXPECT_EQ(cmd_fit(o), ExitCode::ok);
    const auto j = json::parse(read_text(o.output));
    EXPECT_EQ(j["constraint_active"], false);
    EXPECT_EQ(j["kkt_pass"], true);
}

TEST_F(CliTest, FitDuplicatedGroupIsIncomplete)
{
    FitOptions o;
    o.design = fixture("dup_design.csv");
    o.response = fixture("dup_response.csv");
    o.groups = fixture("dup_groups.csv");
    o.kappa = 1.0;
    o.output = path("out.json");
    EXPECT_EQ(cmd_fit(o), ExitCode::ok);
    const auto j = json::parse(read_text(o.output));
    EXPECT_EQ(j["complete"], false);
    EXPECT_EQ(j["unique_certified"], false);
    EXPECT_EQ(j["active"].size() + 1, j["completeness_set"].size());
}

TEST_F(CliTest, FitGoldenFile)
{
    ASSERT_EQ(run("fit --design " + fixture("golden_design.csv") + " --response " + fixture("golden_response.csv") +
                  " --groups " + fixture("golden_groups.csv") + " --config " + fixture("golden_config.json") +
                  " --output " + path("golden.json")),
              0);
    EXPECT_EQ(read_text(path("golden.json")), read_text(fixture("golden_fit.json")));
}

TEST_F(CliTest, FitResultReRunsFromEmbeddedConfig)
{
    FitOptions o;
    o.design = fixture("golden_design.csv");
    o.response = fixture("golden_response.csv");
    o.groups = fixture("golden_groups.csv");
    o.config = fixture("golden_config.json");
    o.output = path("a.json");
    ASSERT_EQ(cmd_fit(o), ExitCode::ok);
    o.config = path("a.json");
    o.output = path("b.json");
    ASSERT_EQ(cmd_fit(o), ExitCode::ok);
    EXPECT_EQ(read_text(path("a.json")), read_text(path("b.json")));
}

TEST_F(CliTest, ProjectThreeGroupFixture)
{
    ProjectOptions o;
    o.vector = fixture("project3_vector.csv");
    o.groups = fixture("project3_groups.csv");
    o.p = "1.5";
    o.kappa = 1.0;
    o.output = path("p.json");
    ASSERT_EQ(cmd_project(o), ExitCode::ok);
    const auto j = json::parse(read_text(o.output));
    EXPECT_NEAR(j["mixed_norm"].get<double>(), 1.0, 1e-8);
    EXPECT_EQ(j["constraint_active"], true);
    EXPECT_LE(j["outer_iterations"].get<int>(), 80);
}

TEST_F(CliTest, ProjectInteriorAndRadial)
{
    write_text(path("v.csv"), "value\n0.3\n-0.4\n");
    ProjectOptions o;
    o.vector = path("v.csv");
    o.kappa = 1.0;
    o.output = path("p.json");
    ASSERT_EQ(cmd_project(o), ExitCode::ok);
    auto j = json::parse(read_text(o.output));
    EXPECT_EQ(j["mu"], 0.0);
    EXPECT_EQ(j["beta"], (std::vector<double>{0.3, -0.4}));

    o.kappa = 0.25;  // single l2 group: radial scaling by 0.5
    ASSERT_EQ(cmd_project(o), ExitCode::ok);
    j = json::parse(read_text(o.output));
    EXPECT_NEAR(j["beta"][0].get<double>(), 0.15, 1e-8);
    EXPECT_NEAR(j["beta"][1].get<double>(), -0.2, 1e-8);
}

TEST_F(CliTest, ExitCodes)
{
    EXPECT_EQ(run("project --vector " + path("missing.csv") + " --kappa 1"), 3);
    EXPECT_EQ(run("project --vector " + fixture("project3_vector.csv") + " --kappa -1"), 1);
    EXPECT_EQ(run("project --vector " + fixture("project3_vector.csv") + " --p 0.5"), 1);
    EXPECT_EQ(run("nonsense"), 1);
    write_text(path("bad.json"), R"({"fit": {"kappa": 1, "unknown": 2}})");
    EXPECT_EQ(run("fit --design " + fixture("toy2_design.csv") + " --response " + fixture("toy2_response.csv") +
                  " --config " + path("bad.json")),
              1);
    write_text(path("tight.json"), R"({"fit": {"kappa": 1, "max_inner_iterations": 1}})");
    EXPECT_EQ(run("fit --design " + fixture("dup_design.csv") + " --response " + fixture("dup_response.csv") +
                  " --groups " + fixture("dup_groups.csv") + " --config " + path("tight.json") + " --output " +
                  path("f.json")),
              2);
    EXPECT_EQ(json::parse(read_text(path("f.json")))["status"], "convergence_failure");
    EXPECT_EQ(run("project --vector " + fixture("project3_vector.csv") + " --kappa 1 --output " +
                  path("no/such/dir/p.json")),
              3);
}

TEST_F(CliTest, GenerateRoundTripIsBitwise)
{
    GenerateOptions o;
    o.seed = 5;
    o.share_frac = 0.5;
    o.output = path("data");
    ASSERT_EQ(cmd_generate(o), ExitCode::ok);
    SynthSpec spec = synth_defaults().base;
    spec.seed = 5;
    spec.share_frac = 0.5;
    const auto data = generate_synthetic(spec);
    const auto train = read_tasks_csv(path("data/train.csv"));
    const auto test = read_tasks_csv(path("data/test.csv"));
    ASSERT_EQ(train.task_count(), spec.m);
    for (std::size_t k = 0; k < spec.m; ++k) {
        EXPECT_EQ(train.tasks[k].X, data.train.tasks[k].X);
        EXPECT_EQ(train.tasks[k].labels, data.train.tasks[k].labels);
        EXPECT_EQ(test.tasks[k].X, data.test.tasks[k].X);
    }
    EXPECT_EQ(read_matrix_csv(path("data/truth.csv")), data.truth.B);
    const auto g = read_groups(path("data/groups.csv"), spec.d * spec.m);
    EXPECT_EQ(g.partition, GroupPartition::uniform(spec.d, spec.m));
}

TEST_F(CliTest, FitOnGeneratedTasks)
{
    GenerateOptions g;
    g.seed = 2;
    g.output = path("data");
    ASSERT_EQ(cmd_generate(g), ExitCode::ok);
    ASSERT_EQ(run("fit --tasks " + path("data/train.csv") + " --p inf --kappa 2 --output " + path("fit.json")), 0);
    const auto j = json::parse(read_text(path("fit.json")));
    EXPECT_EQ(j["tasks"], 10);
    EXPECT_EQ(j["kkt_pass"], true);
    EXPECT_NEAR(j["mixed_norm"].get<double>(), 2.0, 1e-6);
}

TEST_F(CliTest, SynthExperimentIsDeterministicAndReproducible)
{
    write_text(path("cfg.json"), R"({
        "spec": {"d": 40, "m": 3, "n": 30, "relevant_frac": 0.1},
        "seeds": [1, 2], "share_fracs": [1.0, 0.5],
        "p_values": [2, "inf"], "kappa_scales": [1, 3]
    })");
    ASSERT_EQ(run("synth-experiment --config " + path("cfg.json") + " --jobs 2 --output " + path("a.csv")), 0);
    ASSERT_EQ(run("synth-experiment --config " + path("cfg.json") + " --jobs 1 --output " + path("b.csv")), 0);
    EXPECT_EQ(read_text(path("a.csv")), read_text(path("b.csv")));
    EXPECT_EQ(read_text(path("a.csv.summary.csv")), read_text(path("b.csv.summary.csv")));
    ASSERT_EQ(run("synth-experiment --config " + path("a.csv") + " --output " + path("c.csv")), 0);
    EXPECT_EQ(read_text(path("a.csv")), read_text(path("c.csv")));

    const auto t = read_csv(path("a.csv"));
    ASSERT_EQ(t.rows.size(), 2u * 2u * 4u);
    EXPECT_EQ(t.rows[0][3], "pooled");
    for (const auto& r : t.rows) EXPECT_EQ(r[5], "ok");
    EXPECT_TRUE(fs::exists(path("a.csv.timings.csv")));
}

TEST_F(CliTest, SynthSeedFlagOverridesSeedList)
{
    write_text(path("cfg.json"), R"({"spec": {"d": 30, "m": 2, "n": 24, "relevant_frac": 0.1},
        "share_fracs": [1.0], "p_values": [2], "include_pooled": false, "kappa_scales": [2]})");
    ASSERT_EQ(run("synth-experiment --config " + path("cfg.json") + " --seed 9 --output " + path("a.csv")), 0);
    const auto t = read_csv(path("a.csv"));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][1], "9");
}

TEST_F(CliTest, BenchTinyCase)
{
    write_text(path("b.json"), R"({"J_grid": [10], "relevant_groups": 2, "repeats": 2, "n": 40})");
    ASSERT_EQ(run("bench --config " + path("b.json") + " --output " + path("b.csv")), 0);
    const auto t = read_csv(path("b.csv"));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][3], "active_set");
    EXPECT_EQ(t.rows[1][3], "full_set");
    for (const auto& r : t.rows) {
        EXPECT_EQ(r[4], "ok");
        double ms = -1;
        EXPECT_TRUE(parse_double(r[5], ms));
        EXPECT_GE(ms, 0.0);
    }
}
