#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "gsexp/classify.hpp"
#include "gsexp/mc.hpp"
#include "gsexp/problem_file.hpp"

namespace gsexp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Canonical report text: sorted keys (std::map objects), two-space indent,
/// shortest round-trip doubles, trailing newline. Parsing and dumping again
/// gives the same bytes.
inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json options_json(const ClassifyOptions& o) { return {{"tol", o.tol}, {"eps_cls", o.eps_cls}}; }

inline nlohmann::json sim_config_json(const SimConfig& c, const std::vector<double>& times) {
  return {{"paths", c.n_paths}, {"dt", c.dt},       {"horizon", c.horizon},
          {"seed", c.seed},     {"times", times},   {"truncation_radius", c.truncation_radius}};
}

inline nlohmann::json estimate_json(const MCEstimate& e) {
  return {{"t", e.t}, {"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}};
}

inline nlohmann::json martingale_test_json(const MartingaleTest& t) {
  return {{"outcome", to_string(t.outcome)}, {"z_score", std::isfinite(t.z_score) ? nlohmann::json(t.z_score) : nlohmann::json("-inf")},
          {"estimate", estimate_json(t.estimate)}, {"n_truncated", t.n_truncated},
          {"n_hit_singular", t.n_hit_singular},   {"n_exited", t.n_exited},
          {"caveat", t.caveat}};
}

/// MC section: per evaluation time the estimate, the one-sided test and the
/// stop counts.
inline nlohmann::json mc_json(const SampleMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t j = 0; j < m.times.size(); ++j) rows.push_back(martingale_test_json(martingale_test(m, j)));
  return {{"paths", m.n_paths}, {"per_time", rows}};
}

/// Report skeleton shared by all commands; wall time is the only field that
/// differs between reruns of the echoed config.
inline nlohmann::json base_report(const std::string& command, const ProblemSpec& spec, const ClassifyOptions& opt) {
  nlohmann::json r;
  r["tool"] = {{"name", "gsexp"}, {"version", kToolVersion}};
  r["command"] = command;
  r["problem"] = problem_to_json(spec);
  r["config"] = {{"classify", options_json(opt)}};
  return r;
}

}  // namespace gsexp
