#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "psnlab/io.hpp"

using namespace psnlab;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(PSNLAB_CLI_PATH) + " " + args + " 2>/dev/null";
    CliResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    std::size_t k;
    while ((k = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), k);
    int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string config_path(const std::string& name) { return std::string(PSNLAB_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    auto d = fs::temp_directory_path() / ("psnlab_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Config, ParsesModelAndMoment) {
    std::stringstream ss(
        "# comment\npsnlab_config_version = 1\ntypes.values = 0, 1\ntypes.weights = 0.3, 0.7\n"
        "stat.cap = 3\npayoff.theta = 0.1, 0.2, 0, 0, -0.1, 0, 0\nshock.family = exponential\n"
        "moment.event = two_link\n");
    auto c = parse_config(ss);
    auto m = model_from_config(c);
    EXPECT_EQ(m.types.size(), 2);
    EXPECT_EQ(m.node_stat.cap, 3);
    EXPECT_EQ(m.shock.family(), ShockFamily::exponential);
    EXPECT_DOUBLE_EQ(m.u(1, 0, 2.0, 0.0), 0.1 + 0.2 - 0.2);
    auto sp = moment_from_config(c);
    EXPECT_EQ(sp.event.d, 3);
    EXPECT_DOUBLE_EQ(sp.rho, 2.0);
}

TEST(Config, Errors) {
    auto bad = [](const std::string& s) {
        std::stringstream ss(s);
        auto c = parse_config(ss);
        model_from_config(c);
        moment_from_config(c);
    };
    EXPECT_THROW(bad("stat.cap = 3\n"), ConfigError);                                  // no version
    EXPECT_THROW(bad("psnlab_config_version = 2\n"), ConfigError);                     // wrong version
    EXPECT_THROW(bad("psnlab_config_version = 1\nfoo = 1\n"), ConfigError);            // unknown key
    EXPECT_THROW(bad("psnlab_config_version = 1\nstat.cap = x\n"), ConfigError);       // bad number
    EXPECT_THROW(bad("psnlab_config_version = 1\nstat.cap\n"), ConfigError);           // no '='
    EXPECT_THROW(bad("psnlab_config_version = 1\ntypes.weights = 2\n"), ConfigError);  // weights
    EXPECT_THROW(bad("psnlab_config_version = 1\nshock.family = normal\n"), std::exception);
    EXPECT_THROW(bad("psnlab_config_version = 1\nmoment.event = star\n"), ConfigError);
    EXPECT_THROW(bad("psnlab_config_version = 1\nstat.cap = 1\nstat.cap = 2\n"), ConfigError);
}

TEST(NetworkFiles, RoundTrip) {
    UndirectedNetwork L(5);
    L.add_edge(0, 3);
    L.add_edge(1, 2);
    std::vector<int> X{0, 1, 1, 0, 1};
    std::stringstream nf(nodes_csv(X)), ef(edges_csv(L));
    auto X2 = read_nodes(nf, 2);
    auto L2 = read_edges(ef, 5);
    EXPECT_EQ(X, X2);
    EXPECT_EQ(L, L2);
    std::stringstream bad("i,j\n0,9\n");
    EXPECT_THROW(read_edges(bad, 5), ConfigError);
}

TEST(Cli, SimulateRejectsZeroNodes) {
    EXPECT_EQ(run_cli("simulate --n 0").code, 2);
    EXPECT_EQ(run_cli("simulate --n 10 --bogus").code, 2);
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("lln --config /nonexistent.cfg").code, 2);
}

TEST(Cli, OracleContainment) {
    auto r = run_cli("oracle --n 4 --draws 200 --config " + config_path("constant.cfg"));
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("containment: 200/200"), std::string::npos) << r.out;
}

TEST(Cli, SolveScalarClosedForm) {
    auto r = run_cli("solve --config " + config_path("scalar_mbar2.cfg"));
    ASSERT_EQ(r.code, 0);
    auto j = nlohmann::json::parse(r.out);
    for (const auto& row : j["state"]["inclusive_value"])
        for (double v : row) EXPECT_NEAR(v, 1.0, 1e-8);
}

TEST(Cli, SimulateMomentRoundTripAndDeterminism) {
    auto d1 = temp_dir("a"), d2 = temp_dir("b");
    std::string cfg = " --config " + config_path("two_type.cfg");
    auto a = run_cli("simulate --n 300 --seed 11" + cfg + " --out " + d1.string());
    auto b = run_cli("simulate --n 300 --seed 11" + cfg + " --out " + d2.string());
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(slurp(d1 / "edges.csv"), slurp(d2 / "edges.csv"));
    EXPECT_EQ(slurp(d1 / "nodes.csv"), slurp(d2 / "nodes.csv"));
    auto sim = nlohmann::json::parse(a.out);
    auto m = run_cli("moment" + cfg + " --nodes " + (d1 / "nodes.csv").string() + " --edges " +
                     (d1 / "edges.csv").string());
    ASSERT_EQ(m.code, 0);
    auto mj = nlohmann::json::parse(m.out);
    EXPECT_EQ(mj["moment"][0].get<double>(), sim["moment"][0].get<double>());
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(Cli, ExperimentReportsAreByteIdentical) {
    auto d1 = temp_dir("c"), d2 = temp_dir("d");
    std::string args = "lln --config " + config_path("two_type.cfg") + " --n 60,120 --reps 8 --mc-budget 300 --seed 5";
    auto a = run_cli(args + " --out " + d1.string());
    auto b = run_cli(args + " --threads 2 --out " + d2.string());
    EXPECT_TRUE(a.code == 0 || a.code == 1);
    EXPECT_EQ(a.code, b.code);
    EXPECT_EQ(slurp(d1 / "report.json"), slurp(d2 / "report.json"));
    EXPECT_EQ(slurp(d1 / "report.csv"), slurp(d2 / "report.csv"));
    EXPECT_FALSE(slurp(d1 / "report.csv").empty());
    fs::remove_all(d1);
    fs::remove_all(d2);
}
