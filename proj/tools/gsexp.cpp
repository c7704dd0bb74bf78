// gsexp: classify generalized stochastic exponentials and cross-check the
// verdict by simulation.
//
// Exit codes: 0 verdict / run completed, 1 bad input or flags, 2 undecidable
// integrability, 3 simulation contradicts the verdict (simulate --check),
// 4 self-test failure.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gsexp/classify.hpp"
#include "gsexp/mc.hpp"
#include "gsexp/problem_file.hpp"
#include "gsexp/report.hpp"

#ifndef GSEXP_CORPUS_DIR
#define GSEXP_CORPUS_DIR "corpus/selftest"
#endif

using namespace gsexp;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kBadInput = 1, kUndecidable = 2, kContradiction = 3, kSelftestFailed = 4 };

struct Globals {
  double tol = 1e-8;
  double eps_cls = 0.05;
  std::string report;
  bool quiet = false;

  ClassifyOptions options() const {
    ClassifyOptions o;
    o.tol = tol;
    o.eps_cls = eps_cls;
    return o;
  }
};

struct SimFlags {
  std::optional<std::size_t> paths;
  std::optional<double> dt, horizon;
  std::optional<std::uint64_t> seed;
  std::vector<double> times;
  unsigned threads = 0;
  bool check = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_report(const Globals& g, const nlohmann::json& r) {
  if (g.report.empty()) return;
  std::ofstream out(g.report, std::ios::binary);
  if (!out) throw IoError("cannot write report " + g.report);
  out << canonical_dump(r);
}

std::string tri_word(Tri t) { return to_string(t); }

void print_summary(const Verdict& v) {
  std::cout << "verdict: " << to_string(v.level) << "\n";
  std::cout << "singular set: {";
  for (std::size_t i = 0; i < v.singular.points.size(); ++i)
    std::cout << (i ? ", " : "") << detail::fmt(v.singular.points[i]);
  std::cout << "}\n";
  std::cout << "effective interval: (" << v.alpha.location.str() << ", " << v.beta.location.str() << ")\n";
  for (const auto& c : v.certificate) std::cout << "  " << c.id << ": " << tri_word(c.holds) << "\n";
}

// Simulation settings: problem file "simulation" section, then flags.
SimConfig merge_sim(const nlohmann::json& doc, const SimFlags& f, std::vector<double>& times) {
  SimConfig c;
  if (doc.contains("simulation")) {
    const auto& s = doc["simulation"];
    try {
      if (s.contains("paths")) c.n_paths = s["paths"].get<std::size_t>();
      if (s.contains("dt")) c.dt = s["dt"].get<double>();
      if (s.contains("horizon")) c.horizon = s["horizon"].get<double>();
      if (s.contains("seed")) c.seed = s["seed"].get<std::uint64_t>();
      if (s.contains("truncation_radius")) c.truncation_radius = s["truncation_radius"].get<double>();
      if (s.contains("times")) times = s["times"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError({std::string("simulation: ") + e.what()});
    }
  }
  if (f.paths) c.n_paths = *f.paths;
  if (f.dt) c.dt = *f.dt;
  if (f.horizon) c.horizon = *f.horizon;
  if (f.seed) c.seed = *f.seed;
  if (!f.times.empty()) times = f.times;
  if (times.empty()) times = {c.horizon};
  c.threads = f.threads;
  if (!(c.dt > 0.0)) throw std::invalid_argument("--dt must be positive");
  if (!(c.horizon >= c.dt)) throw std::invalid_argument("--horizon must be at least dt");
  if (c.n_paths < 2) throw std::invalid_argument("--paths must be at least 2");
  return c;
}

int cmd_classify(const Globals& g, const std::string& file) {
  auto t0 = std::chrono::steady_clock::now();
  ProblemSpec spec = load_problem_file(file, g.options());
  nlohmann::json r = base_report("classify", spec, g.options());
  try {
    Verdict v = classify(spec, g.options());
    if (!g.quiet) print_summary(v);
    r["verdict"] = certificate_json(v);
    r["wall_time_s"] = seconds_since(t0);
    write_report(g, r);
    return kOk;
  } catch (const UndecidableError& e) {
    std::cerr << "undecidable: condition '" << e.condition() << "' is inconclusive\n  " << e.what() << "\n";
    r["undecidable"] = {{"condition", e.condition()}, {"message", e.what()}};
    r["wall_time_s"] = seconds_since(t0);
    write_report(g, r);
    return kUndecidable;
  }
}

bool contradicts(Level verdict, MartingaleOutcome o) {
  return verdict >= Level::Martingale && o == MartingaleOutcome::MeanDeficit;
}

int cmd_simulate(const Globals& g, const std::string& file, const SimFlags& f) {
  auto t0 = std::chrono::steady_clock::now();
  nlohmann::json doc = read_json_file(file);
  ProblemSpec spec = problem_from_json(doc, g.options());
  std::vector<double> times;
  SimConfig cfg = merge_sim(doc, f, times);
  nlohmann::json r = base_report("simulate", spec, g.options());
  r["config"]["simulation"] = sim_config_json(cfg, times);
  r["config"]["check"] = f.check;

  std::optional<Verdict> verdict;
  if (f.check) {
    try {
      verdict = classify(spec, g.options());
    } catch (const UndecidableError& e) {
      std::cerr << "undecidable: condition '" << e.condition() << "' is inconclusive\n  " << e.what() << "\n";
      return kUndecidable;
    }
    r["verdict"] = certificate_json(*verdict);
  }
  SampleMatrix m = simulate_Z(spec, cfg, times);
  r["mc"] = mc_json(m);
  int code = kOk;
  if (!g.quiet) std::cout << format_samples(spec, m);
  for (std::size_t j = 0; j < m.times.size(); ++j) {
    MartingaleTest t = martingale_test(m, j);
    if (!g.quiet)
      std::printf("test t=%.17g: %s z=%.6g\n", m.times[j], to_string(t.outcome), t.z_score);
    if (verdict && contradicts(verdict->level, t.outcome)) code = kContradiction;
  }
  if (verdict) {
    r["check"] = {{"verdict", to_string(verdict->level)}, {"contradiction", code == kContradiction}};
    if (!g.quiet) {
      std::cout << "verdict: " << to_string(verdict->level) << "\n";
      std::cout << "check: " << (code == kContradiction ? "contradiction" : "ok") << "\n";
    }
  }
  r["wall_time_s"] = seconds_since(t0);
  write_report(g, r);
  return code;
}

struct SelftestRow {
  std::string name, expected, got, mc;
  bool pass = false;
};

int cmd_selftest(const Globals& g, const std::string& dir) {
  auto t0 = std::chrono::steady_clock::now();
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("corpus directory has no .json cases: " + dir);

  std::vector<SelftestRow> rows;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& path : files) {
    SelftestRow row;
    row.name = path.stem().string();
    nlohmann::json c = read_json_file(path.string());
    try {
      if (!c.contains("problem") || !c.contains("expect") || !c["expect"].contains("verdict"))
        throw ValidationError({"case needs problem and expect.verdict"});
      row.expected = c["expect"]["verdict"].get<std::string>();
      nlohmann::json doc = c["problem"];
      if (c.contains("simulation")) doc["simulation"] = c["simulation"];
      ProblemSpec spec = problem_from_json(doc, g.options());
      Verdict v = classify(spec, g.options());
      row.got = to_string(v.level);
      SimFlags f;
      f.paths = 10000;
      std::vector<double> times;
      SimConfig cfg = merge_sim(doc, f, times);
      SampleMatrix m = simulate_Z(spec, cfg, {cfg.horizon});
      MartingaleTest t = martingale_test(m, 0);
      row.mc = to_string(t.outcome);
      bool deficit_expected = v.level < Level::Martingale;
      bool mc_ok = (t.outcome == MartingaleOutcome::MeanDeficit) == deficit_expected;
      row.pass = row.got == row.expected && mc_ok;
    } catch (const std::exception& e) {
      row.got = std::string("error: ") + e.what();
      row.pass = false;
    }
    cases.push_back({{"case", row.name}, {"expected", row.expected}, {"got", row.got}, {"mc", row.mc}, {"pass", row.pass}});
    rows.push_back(row);
  }
  bool all = std::all_of(rows.begin(), rows.end(), [](const SelftestRow& r) { return r.pass; });
  if (!g.quiet) {
    std::printf("%-24s %-32s %-32s %-28s %s\n", "case", "expected", "got", "mc", "result");
    for (const auto& r : rows)
      std::printf("%-24s %-32s %-32s %-28s %s\n", r.name.c_str(), r.expected.c_str(), r.got.c_str(), r.mc.c_str(),
                  r.pass ? "PASS" : "FAIL");
  }
  nlohmann::json rep;
  rep["tool"] = {{"name", "gsexp"}, {"version", kToolVersion}};
  rep["command"] = "selftest";
  rep["config"] = {{"classify", options_json(g.options())}, {"corpus", dir}, {"paths", 10000}};
  rep["cases"] = cases;
  rep["passed"] = all;
  rep["wall_time_s"] = seconds_since(t0);
  write_report(g, rep);
  return all ? kOk : kSelftestFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Classify generalized stochastic exponentials of one-dimensional diffusions"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--tol", g.tol, "quadrature tolerance")->check(CLI::PositiveNumber);
  app.add_option("--eps-cls", g.eps_cls, "classifier margin on local exponents")->check(CLI::PositiveNumber);
  app.add_option("--report", g.report, "write a JSON report to this path");
  app.add_flag("--quiet", g.quiet, "no summary on standard output");

  std::string file, corpus = GSEXP_CORPUS_DIR;
  auto* classify_cmd = app.add_subcommand("classify", "classify the problem in a JSON file");
  classify_cmd->add_option("file", file, "problem file")->required();

  SimFlags f;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo estimate of E[Z_t]");
  sim_cmd->add_option("file", file, "problem file")->required();
  sim_cmd->add_option("--paths", f.paths, "number of paths");
  sim_cmd->add_option("--dt", f.dt, "Euler step");
  sim_cmd->add_option("--horizon", f.horizon, "simulated time T");
  sim_cmd->add_option("--seed", f.seed, "64-bit seed");
  sim_cmd->add_option("--times", f.times, "evaluation times, comma separated")->delimiter(',');
  sim_cmd->add_option("--threads", f.threads, "worker threads (0: all cores); results do not depend on it");
  sim_cmd->add_flag("--check", f.check, "compare with the classifier verdict; exit 3 on contradiction");

  auto* self_cmd = app.add_subcommand("selftest", "run the built-in corpus");
  self_cmd->add_option("--corpus", corpus, "corpus directory");

  // globals may come before or after the subcommand
  for (auto* sub : {classify_cmd, sim_cmd, self_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    if (*classify_cmd) return cmd_classify(g, file);
    if (*sim_cmd) return cmd_simulate(g, file, f);
    return cmd_selftest(g, corpus);
  } catch (const ValidationError& e) {
    std::cerr << e.what() << "\n";
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
  } catch (const ConsistencyError& e) {
    std::cerr << "internal consistency failure: " << e.what() << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kBadInput;
}
