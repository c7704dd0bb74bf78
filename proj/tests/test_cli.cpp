// Runs the built gsexp binary and checks exit codes, summaries and reports.
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// stdout and stderr together
Outcome run(const std::string& args) {
  std::string cmd = std::string(GSEXP_BIN) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string corpus(const std::string& name) { return std::string(GSEXP_SOURCE_DIR) + "/corpus/" + name; }

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("gsexp_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool has(const Outcome& r, const std::string& s) { return r.out.find(s) != std::string::npos; }

}  // namespace

TEST(Cli, ClassifyExampleI) {
  Outcome r = run("classify " + corpus("example_i.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "verdict: martingale\n")) << r.out;
}

TEST(Cli, ClassifyExampleII) {
  Outcome r = run("classify " + corpus("example_ii.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "verdict: uniformly_integrable_martingale\n")) << r.out;
}

TEST(Cli, ClassifyBorderlineIsUndecidable) {
  Outcome r = run("classify " + corpus("borderline.json"));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_TRUE(has(r, "condition 'alpha_in_B' is inconclusive")) << r.out;
}

TEST(Cli, SingleLogBorderlineIsDecided) {
  // |x| b^2 = x^-1 log^-2 is integrable at 0, outside the margin
  fs::path d = scratch("single_log");
  std::ofstream(d / "p.json") << R"j({"interval": {"left": -0.5, "right": 0.5}, "x0": 0.25, "mu": "0",
                                     "sigma": "1", "b": "1/(x*log(1/abs(x)))"})j";
  Outcome r = run("classify " + (d / "p.json").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "verdict: not_local_martingale\n")) << r.out;
}

TEST(Cli, BadInputs) {
  fs::path d = scratch("bad");
  std::ofstream(d / "broken.json") << "{ not json";
  std::ofstream(d / "invalid.json") << R"j({"interval": {"left": 0, "right": 1}, "x0": 5, "mu": "0", "sigma": "1"})j";
  EXPECT_EQ(run("classify " + (d / "broken.json").string()).code, 1);
  Outcome r = run("classify " + (d / "invalid.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(has(r, "b: missing")) << r.out;
  EXPECT_EQ(run("classify " + (d / "absent.json").string()).code, 1);
  EXPECT_EQ(run("classify").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--tol -1 classify " + corpus("example_i.json")).code, 1);
}

TEST(Cli, SimulateDtZero) {
  EXPECT_EQ(run("simulate " + corpus("example_i.json") + " --dt 0").code, 1);
  EXPECT_EQ(run("simulate " + corpus("example_i.json") + " --paths 1").code, 1);
}

TEST(Cli, SimulateExampleICheck) {
  Outcome r = run("simulate " + corpus("example_i.json") +
              " --paths 100000 --dt 1e-4 --horizon 1 --seed 42 --times 1 --check");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "check: ok")) << r.out;
}

TEST(Cli, SimulateBessel3Check) {
  fs::path d = scratch("bessel");
  fs::path rep = d / "r.json";
  Outcome r = run("--report " + rep.string() + " simulate " + corpus("bessel3.json") + " --paths 20000 --check");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "mean_deficit")) << r.out;
  auto j = nlohmann::json::parse(slurp(rep));
  EXPECT_EQ(j["mc"]["per_time"][0]["outcome"], "mean_deficit");
  EXPECT_EQ(j["check"]["verdict"], "strict_local_martingale");
  // flags override the file's simulation section and the report echoes the merge
  EXPECT_EQ(j["config"]["simulation"]["paths"], 20000);
  EXPECT_EQ(j["config"]["simulation"]["dt"], 1e-4);
  EXPECT_EQ(j["config"]["simulation"]["seed"], 42);
}

TEST(Cli, ContradictionExitsThree) {
  // exp(4W_t - 8t) is a true martingale, but at t = 4 its lognormal tail is so
  // heavy that 2e4 paths all but surely miss the mass carrying the mean
  fs::path d = scratch("contra");
  std::ofstream(d / "p.json") << R"j({"interval": {"left": "-inf", "right": "+inf"}, "x0": 0, "mu": "0",
                                     "sigma": "1", "b": "4"})j";
  Outcome r = run("simulate " + (d / "p.json").string() + " --paths 20000 --dt 0.01 --horizon 4 --check");
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_TRUE(has(r, "check: contradiction")) << r.out;
}

TEST(Cli, ReportIsCanonicalAndReproducible) {
  fs::path d = scratch("report");
  std::string args = " simulate " + corpus("example_ii.json") + " --paths 2000 --dt 1e-3 --seed 9 --times 0.5,1 --check";
  ASSERT_EQ(run("--report " + (d / "a.json").string() + args).code, 0);
  ASSERT_EQ(run("--report " + (d / "b.json").string() + args + " --threads 1").code, 0);
  std::string a = slurp(d / "a.json"), b = slurp(d / "b.json");
  auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
  EXPECT_EQ(ja.dump(2) + "\n", a);
  ja.erase("wall_time_s");
  jb.erase("wall_time_s");
  EXPECT_EQ(ja, jb);
  EXPECT_EQ(ja["mc"]["per_time"].size(), 2u);

  ASSERT_EQ(run("--report " + (d / "c.json").string() + " classify " + corpus("example_i.json")).code, 0);
  std::string c = slurp(d / "c.json");
  EXPECT_EQ(nlohmann::json::parse(c).dump(2) + "\n", c);
  EXPECT_EQ(nlohmann::json::parse(c)["verdict"]["level"], "martingale");
}

TEST(Cli, ExitCodeIndependentOfThreads) {
  for (const char* t : {"1", "2", "4"}) {
    Outcome r = run("simulate " + corpus("not_local.json") + " --paths 4000 --dt 1e-3 --check --threads " + t);
    EXPECT_EQ(r.code, 0) << t << r.out;
  }
}

TEST(Cli, QuietSuppressesSummary) {
  Outcome r = run("--quiet classify " + corpus("example_i.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "");
}

TEST(Cli, SelftestPasses) {
  Outcome r = run("selftest");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(has(r, "example_i")) << r.out;
}

TEST(Cli, SelftestFlippedExpectationFails) {
  fs::path d = scratch("flipped");
  fs::copy_file(fs::path(GSEXP_SOURCE_DIR) / "corpus/selftest/example_ii.json", d / "example_ii.json");
  std::ofstream(d / "flipped.json") << R"j({"problem": {"interval": {"left": "-inf", "right": "+inf"}, "x0": 1,
      "mu": "0", "sigma": "1", "b": "1/x"}, "expect": {"verdict": "uniformly_integrable_martingale"},
      "simulation": {"dt": 0.001, "horizon": 1, "seed": 1}})j";
  Outcome r = run("selftest --corpus " + d.string());
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_TRUE(has(r, "FAIL")) << r.out;
}

TEST(Cli, SelftestEmptyCorpus) {
  fs::path d = scratch("empty");
  EXPECT_EQ(run("selftest --corpus " + d.string()).code, 1);
  EXPECT_EQ(run("selftest --corpus " + (d / "missing").string()).code, 1);
}
