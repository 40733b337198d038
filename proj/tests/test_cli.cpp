#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "ballistic/cli.hpp"

using namespace ballistic;
using namespace ballistic::cli;

namespace {

// scratch directory per test, removed on exit
class Scratch {
public:
    Scratch() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("ballistic_cli_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Scratch() { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name) << text;
        return dir_ / name;
    }
    RunOutcome run(const std::string& config, std::optional<std::uint64_t> seed = std::nullopt,
                   std::optional<double> tol = std::nullopt, const std::string& out = "out") const {
        return cli::run({write("run.yaml", config).string(), (dir_ / out).string(), seed, tol});
    }
    std::string slurp(const std::string& rel) const { return read_text(dir_ / rel); }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
};

double value_of(const RunOutcome& r, const char* key) { return r.result["values"][key].get<double>(); }

const char* kFree = "lagrangian:\n  family: quadratic-free\n";
const char* kHarmonic = "lagrangian:\n  family: harmonic\n  params: [1.0, 1.0]\n";

}  // namespace

TEST(CliCost, BallisticFreeExample) {
    Scratch s;
    auto r = s.run(std::string("command: cost\nT: 1\n") + kFree + "cost:\n  v: [1]\n  x: [2]\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_NEAR(value_of(r, "value"), 1.5, 1e-12);
    EXPECT_EQ(r.result["schema"], 1);
    EXPECT_EQ(r.result["command"], "cost");
    EXPECT_TRUE(fs::exists(s.dir() / "out" / "trajectory.csv"));
}

TEST(CliCost, RandomTriplesMatchClosedForm) {
    Scratch s;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-2, 2), P(0.2, 2);
    for (int k = 0; k < 5; ++k) {
        double v = U(rng), x = U(rng), T = P(rng);
        std::ostringstream c;
        c.precision(17);
        c << "command: cost\nT: " << T << "\n" << kFree << "cost:\n  v: " << v << "\n  x: " << x << "\n";
        auto r = s.run(c.str());
        ASSERT_EQ(r.exit_code, exit_ok) << r.error;
        EXPECT_NEAR(value_of(r, "value"), v * x - T * v * v / 2, 1e-9);
    }
}

TEST(CliCost, FixedEndFree) {
    Scratch s;
    auto r = s.run(std::string("command: cost\nT: 2\n") + kFree + "cost:\n  y: [0.5]\n  x: [-1.5]\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_NEAR(value_of(r, "value"), 4.0 / 4.0, 1e-9);
    EXPECT_EQ(r.result["values"]["kind"], "fixed-end");
}

TEST(CliCost, NeedsExactlyOneOfVAndY) {
    Scratch s;
    auto r = s.run(std::string("command: cost\n") + kFree + "cost:\n  v: [1]\n  y: [1]\n  x: [2]\n");
    EXPECT_EQ(r.exit_code, exit_error);
    EXPECT_NE(r.error.find("run.yaml:"), std::string::npos) << r.error;
}

TEST(CliTransport, SingleAtomsGiveOnePairing) {
    Scratch s;
    s.write("a.txt", "# d=1 space=costate\n1 0.5\n");
    s.write("b.txt", "# d=1 space=state\n1 -1\n");
    auto r = s.run(std::string("command: transport\nT: 1\n") + kFree + "measures:\n  source: a.txt\n  target: b.txt\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    ASSERT_EQ(r.result["values"]["plan"].size(), 1u);
    EXPECT_NEAR(r.result["values"]["plan"][0]["mass"].get<double>(), 1.0, 1e-15);
    EXPECT_NEAR(value_of(r, "value"), 0.5 * -1 - 0.5 * 0.25, 1e-12);
    EXPECT_TRUE(fs::exists(s.dir() / "out" / "plan.csv"));
}

TEST(CliTransport, MaxAboveMinAndInnerProduct) {
    Scratch s;
    s.write("a.txt", "# d=1 space=costate\n0.5 -1\n0.5 1\n");
    s.write("b.txt", "# d=1 space=state\n0.5 0\n0.5 2\n");
    std::string base = std::string("command: transport\nT: 1\n") + kFree + "measures:\n  source: a.txt\n  target: b.txt\n";
    auto lo = s.run(base + "sense: min\n", std::nullopt, std::nullopt, "lo");
    auto hi = s.run(base + "sense: max\n", std::nullopt, std::nullopt, "hi");
    ASSERT_EQ(lo.exit_code, exit_ok) << lo.error;
    ASSERT_EQ(hi.exit_code, exit_ok) << hi.error;
    EXPECT_NEAR(value_of(lo, "value"), -1.5, 1e-12);
    EXPECT_NEAR(value_of(hi, "value"), 0.5, 1e-12);
    auto ip = s.run(base + "transport:\n  cost: inner-product\n", std::nullopt, std::nullopt, "ip");
    ASSERT_EQ(ip.exit_code, exit_ok) << ip.error;
    EXPECT_NEAR(value_of(ip, "value"), -1.0, 1e-12);
}

TEST(CliTransport, StochasticDriftlessIsZero) {
    Scratch s;
    s.write("a.txt", "# d=1 space=state\n1 0\n");
    s.write("b.txt", "# d=1 space=state\n0.25 -0.25\n0.5 0\n0.25 0.25\n");
    // one driftless step with dt = dx^2 / 2 moves +-dx with probability 1/4 each
    auto r = s.run(std::string("command: transport\nT: 0.03125\n") + kFree +
                   "measures:\n  source: a.txt\n  target: b.txt\ntransport:\n  cost: stochastic\n"
                   "lattice:\n  lo: -1\n  dx: 0.25\n  n: 9\n  K: 1\n  b_max: 1\n  db: 0.5\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_EQ(value_of(r, "value"), 0.0);
}

TEST(CliInterpolate, DemoValues) {
    const fs::path demos = BALLISTIC_DEMO_DIR;
    Scratch s;
    auto run_demo = [&](const char* name) {
        return cli::run({(demos / name).string(), (s.dir() / name).string(), std::nullopt, std::nullopt});
    };
    auto mn = run_demo("min-ballistic.yaml");
    ASSERT_EQ(mn.exit_code, exit_ok) << mn.error;
    EXPECT_NEAR(value_of(mn, "direct_value"), -1.5, 1e-12);
    // closed-form harmonic ballistic cost, then a 3x3 assignment by enumeration of vertices
    auto mx = run_demo("max-ballistic.yaml");
    ASSERT_EQ(mx.exit_code, exit_ok) << mx.error;
    EXPECT_NEAR(value_of(mx, "direct_value"), 0.3635321970519009, 1e-6);
    auto st = run_demo("stochastic.yaml");
    ASSERT_EQ(st.exit_code, exit_ok) << st.error;
    EXPECT_NEAR(value_of(st, "value"), -0.7585988621669918, 1e-6);
    EXPECT_LE(value_of(st, "lower"), value_of(st, "upper"));
}

TEST(CliMap, FreeMinMapLandsOnTarget) {
    Scratch s;
    s.write("a.txt", "# d=1 space=costate\n0.5 -1\n0.5 1\n");
    s.write("b.txt", "# d=1 space=state\n0.5 0\n0.5 2\n");
    auto r = s.run(std::string("command: map\nT: 1\n") + kFree + "measures:\n  source: a.txt\n  target: b.txt\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_NEAR(value_of(r, "transported_cost"), -1.5, 1e-6);
    EXPECT_TRUE(fs::exists(s.dir() / "out" / "arrows.csv"));
}

TEST(CliHopfLax, QuadraticDataUnderFreeMotion) {
    Scratch s;
    // f(y) = y^2 / 2 under free motion: Phi(t, x) = x^2 / (2 (1 + t)), minimizer x / (1 + t)
    auto r = s.run(std::string("command: hopf-lax\nT: 1\n") + kFree +
                   "grid:\n  lo: -3\n  hi: 3\n  n: 121\n  times: [0, 1]\ndata:\n  kind: quadratic\n  coef: 1\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    auto csv = s.slurp("out/field.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 121);
    // the minimizer y = 0.5 of the t = 1, x = 1 point is a grid node
    auto at = csv.find("\n1,1,");
    ASSERT_NE(at, std::string::npos);
    EXPECT_NEAR(std::stod(csv.substr(at + 5)), 0.25, 1e-12);
}

TEST(CliHopfLax, LinearDataPinsInteriorPoints) {
    Scratch s;
    // f(y) = y: the minimizer x - t leaves the grid for x near the left edge
    auto r = s.run(std::string("command: hopf-lax\nT: 1\n") + kFree +
                   "grid:\n  lo: -1\n  hi: 1\n  n: 21\n  times: [1]\ndata:\n  kind: linear\n  slope: [1]\n");
    EXPECT_EQ(r.exit_code, exit_uncertified) << r.error;
    EXPECT_GT(r.result["values"]["interior_points_pinned"].get<int>(), 0);
}

TEST(CliHjb, LinearTerminalDrift) {
    Scratch s;
    auto r = s.run(std::string("command: hjb\nT: 1\n") + kFree +
                   "lattice:\n  cover: [-1, 1]\n  K: 50\n  b_max: 3\n  db: 0.125\ndata:\n  kind: linear\n  slope: [0.5]\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_GT(r.result["values"]["checked_nodes"].get<int>(), 0);
    EXPECT_TRUE(fs::exists(s.dir() / "out" / "policy.csv"));
}

TEST(CliHjb, CflViolationPointsAtTheBlock) {
    Scratch s;
    auto r = s.run(std::string("command: hjb\nT: 1\n") + kFree +
                   "lattice:\n  lo: -1\n  dx: 0.1\n  n: 21\n  K: 10\n  b_max: 1\n  db: 0.5\ndata:\n  kind: zero\n");
    EXPECT_EQ(r.exit_code, exit_error);
    EXPECT_NE(r.error.find("run.yaml:"), std::string::npos) << r.error;
    EXPECT_NE(r.error.find("dt > dx^2"), std::string::npos) << r.error;
}

TEST(CliBolza, RegistryAndCustom) {
    Scratch s;
    auto r = s.run("command: bolza\nbolza:\n  instance: harmonic-quadratic\n  N: 128\n");
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_LE(std::abs(r.result["gaps"]["duality"].get<double>()), 1e-9);
    auto c = s.run(std::string("command: bolza\nT: 1.5\n") + kHarmonic +
                       "bolza:\n  N: 64\n  start:\n    kind: pinned\n    at: [-0.5]\n  end:\n    kind: quadratic\n    coef: 2\n"
                       "    center: [1]\n",
                   std::nullopt, std::nullopt, "custom");
    ASSERT_EQ(c.exit_code, exit_ok) << c.error;
    EXPECT_EQ(c.result["values"]["instance"], "custom");
    auto bad = s.run("command: bolza\nbolza:\n  instance: nope\n", std::nullopt, std::nullopt, "bad");
    EXPECT_EQ(bad.exit_code, exit_error);
    EXPECT_NE(bad.error.find("run.yaml:3"), std::string::npos) << bad.error;
}

TEST(CliEulerian, FlaggedUnderTightTolerance) {
    Scratch s;
    s.write("a.txt", "# d=1 space=costate\n1 1\n");
    s.write("b.txt", "# d=1 space=state\n1 2\n");
    std::string cfg = std::string("command: eulerian\nT: 1\n") + kFree +
                      "measures:\n  source: a.txt\n  target: b.txt\neulerian:\n  nx: 32\n  nt: 32\n";
    auto ok = s.run(cfg);
    ASSERT_EQ(ok.exit_code, exit_ok) << ok.error;
    EXPECT_NEAR(value_of(ok, "lp_value"), 1.5, 1e-9);
    auto tight = s.run(cfg, std::nullopt, 1e-9, "tight");
    EXPECT_EQ(tight.exit_code, exit_uncertified);
    auto flags = tight.result["flags"].get<std::vector<std::string>>();
    EXPECT_NE(std::find(flags.begin(), flags.end(), "value"), flags.end());
    EXPECT_FALSE(tight.result["certified"].get<bool>());
}

TEST(CliVerify, HarmonicDemoPasses) {
    Scratch s;
    auto r = cli::run({(fs::path(BALLISTIC_DEMO_DIR) / "harmonic-verify.yaml").string(), (s.dir() / "v").string(),
                       std::nullopt, std::nullopt});
    ASSERT_EQ(r.exit_code, exit_ok) << r.error;
    EXPECT_TRUE(r.result["flags"].empty());
    EXPECT_GE(r.result["certificates"].size(), 6u);
}

TEST(CliConfig, Errors) {
    Scratch s;
    EXPECT_EQ(s.run("").exit_code, exit_error);
    auto unknown = s.run("command: frobnicate\n");
    EXPECT_EQ(unknown.exit_code, exit_error);
    EXPECT_NE(unknown.error.find("run.yaml:1"), std::string::npos) << unknown.error;
    auto key = s.run(std::string("command: cost\n") + kFree + "  colour: red\ncost:\n  v: 1\n  x: 1\n");
    EXPECT_NE(key.error.find("run.yaml:4"), std::string::npos) << key.error;
    auto missing = s.run(std::string("command: transport\n") + kFree + "measures:\n  source: nowhere.txt\n  target: b.txt\n");
    EXPECT_EQ(missing.exit_code, exit_error);
    EXPECT_NE(missing.error.find("not found"), std::string::npos) << missing.error;
    auto syntax = s.run("command: cost\nT: [1\n");
    EXPECT_EQ(syntax.exit_code, exit_error);
    EXPECT_NE(syntax.error.find("parse-error"), std::string::npos) << syntax.error;
    auto number = s.run(std::string("command: cost\nT: soon\n") + kFree);
    EXPECT_NE(number.error.find("run.yaml:2: T: expected a number"), std::string::npos) << number.error;
}

TEST(CliConfig, WrongMeasureTag) {
    Scratch s;
    s.write("a.txt", "# d=1 space=state\n1 1\n");
    s.write("b.txt", "# d=1 space=state\n1 2\n");
    auto r = s.run(std::string("command: interpolate\n") + kFree + "measures:\n  source: a.txt\n  target: b.txt\n");
    EXPECT_EQ(r.exit_code, exit_error);
    EXPECT_NE(r.error.find("tagged state, expected costate"), std::string::npos) << r.error;
}

TEST(CliDeterminism, SameSeedSameBytes) {
    Scratch s;
    s.write("a.txt", "# d=1 space=costate\n0.3 -0.5\n0.7 0.4\n");
    s.write("b.txt", "# d=1 space=state\n0.6 0.1\n0.4 1.1\n");
    std::string cfg = std::string("command: verify\nT: 1\n") + kHarmonic + "measures:\n  source: a.txt\n  target: b.txt\n";
    auto a = s.run(cfg, 9, std::nullopt, "a");
    auto b = s.run(cfg, 9, std::nullopt, "b");
    auto c = s.run(cfg, 10, std::nullopt, "c");
    ASSERT_NE(a.exit_code, exit_error) << a.error;
    EXPECT_EQ(s.slurp("a/result.json"), s.slurp("b/result.json"));
    EXPECT_NE(s.slurp("a/result.json"), s.slurp("c/result.json"));
    EXPECT_EQ(a.result["seed"], 9);
}

TEST(CliDemoSuite, PassesAndRepeats) {
    Scratch s;
    std::ostringstream log;
    ASSERT_EQ(demo_suite(BALLISTIC_DEMO_DIR, s.dir() / "one", std::nullopt, log), exit_ok) << log.str();
    ASSERT_EQ(demo_suite(BALLISTIC_DEMO_DIR, s.dir() / "two", std::nullopt, log), exit_ok);
    for (const auto& e : fs::recursive_directory_iterator(s.dir() / "one")) {
        if (!e.is_regular_file()) continue;
        auto rel = fs::relative(e.path(), s.dir() / "one");
        EXPECT_EQ(read_text(e.path()), read_text(s.dir() / "two" / rel)) << rel;
    }
    EXPECT_NE(s.slurp("one/summary.txt").find("stochastic"), std::string::npos);
}

TEST(CliDemoSuite, EmptyDirectoryIsAnError) {
    Scratch s;
    std::ostringstream log;
    EXPECT_EQ(demo_suite(s.dir(), s.dir() / "out", std::nullopt, log), exit_error);
}
