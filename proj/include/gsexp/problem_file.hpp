#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gsexp/classify.hpp"

namespace gsexp {

/// Every problem with a problem file at once, one entry per field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid problem file:";
    for (const auto& i : v) s += "\n  - " + i;
    return s;
  }
  std::vector<std::string> issues_;
};

/// Reading the file failed (missing, unreadable, not JSON).
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::optional<ExtendedReal> endpoint_field(const nlohmann::json& j, const char* inf_text, bool left,
                                                  std::vector<std::string>& issues, const std::string& name) {
  if (j.is_number()) {
    double v = j.get<double>();
    if (std::isfinite(v)) return ExtendedReal(v);
  } else if (j.is_string() && j.get<std::string>() == inf_text) {
    return left ? ExtendedReal::neg_inf() : ExtendedReal::pos_inf();
  }
  issues.push_back(name + ": expected a finite number or \"" + inf_text + "\"");
  return std::nullopt;
}

inline std::optional<Expr> expr_field(const nlohmann::json& doc, const char* key, std::vector<std::string>& issues) {
  if (!doc.contains(key)) {
    issues.push_back(std::string(key) + ": missing");
    return std::nullopt;
  }
  const auto& j = doc[key];
  if (!j.is_string()) {
    issues.push_back(std::string(key) + ": expected an expression string");
    return std::nullopt;
  }
  try {
    return parse(j.get<std::string>());
  } catch (const ParseError& e) {
    issues.push_back(std::string(key) + ": " + e.what());
    return std::nullopt;
  }
}

}  // namespace detail

/// Problem file keys other than these are rejected, so typos surface.
inline const std::vector<std::string>& problem_file_keys() {
  static const std::vector<std::string> k{"interval", "x0", "mu", "sigma", "b", "hints", "base_point", "simulation"};
  return k;
}

/// Parses and validates a problem document. Collects every field problem
/// before throwing; diffusion-level checks run only once the fields parse.
inline ProblemSpec problem_from_json(const nlohmann::json& doc, const ClassifyOptions& opt = {}) {
  std::vector<std::string> issues;
  if (!doc.is_object()) throw ValidationError({"document: expected a JSON object"});
  for (const auto& [key, value] : doc.items()) {
    const auto& k = problem_file_keys();
    if (std::find(k.begin(), k.end(), key) == k.end()) issues.push_back(key + ": unknown field");
  }

  std::optional<ExtendedReal> l, r;
  if (!doc.contains("interval")) {
    issues.push_back("interval: missing");
  } else if (!doc["interval"].is_object()) {
    issues.push_back("interval: expected an object with left and right");
  } else {
    const auto& iv = doc["interval"];
    if (!iv.contains("left"))
      issues.push_back("interval.left: missing");
    else
      l = detail::endpoint_field(iv["left"], "-inf", true, issues, "interval.left");
    if (!iv.contains("right"))
      issues.push_back("interval.right: missing");
    else
      r = detail::endpoint_field(iv["right"], "+inf", false, issues, "interval.right");
    if (l && r && !(*l < *r)) issues.push_back("interval: left must be below right");
  }

  std::optional<double> x0;
  if (!doc.contains("x0"))
    issues.push_back("x0: missing");
  else if (!doc["x0"].is_number() || !std::isfinite(doc["x0"].get<double>()))
    issues.push_back("x0: expected a finite number");
  else
    x0 = doc["x0"].get<double>();

  auto mu = detail::expr_field(doc, "mu", issues);
  auto sigma = detail::expr_field(doc, "sigma", issues);
  auto b = detail::expr_field(doc, "b", issues);

  std::vector<double> hints;
  if (doc.contains("hints")) {
    const auto& h = doc["hints"];
    if (!h.is_object()) {
      issues.push_back("hints: expected an object");
    } else {
      for (const auto& [key, value] : h.items())
        if (key != "singular_points") issues.push_back("hints." + key + ": unknown field");
      if (h.contains("singular_points")) {
        const auto& sp = h["singular_points"];
        if (!sp.is_array()) {
          issues.push_back("hints.singular_points: expected an array of numbers");
        } else {
          for (std::size_t i = 0; i < sp.size(); ++i) {
            if (sp[i].is_number() && std::isfinite(sp[i].get<double>()))
              hints.push_back(sp[i].get<double>());
            else
              issues.push_back("hints.singular_points[" + std::to_string(i) + "]: expected a finite number");
          }
        }
      }
    }
  }

  std::optional<double> base;
  if (doc.contains("base_point")) {
    if (doc["base_point"].is_number() && std::isfinite(doc["base_point"].get<double>()))
      base = doc["base_point"].get<double>();
    else
      issues.push_back("base_point: expected a finite number");
  }
  if (doc.contains("simulation") && !doc["simulation"].is_object())
    issues.push_back("simulation: expected an object");

  if (!issues.empty()) throw ValidationError(std::move(issues));
  try {
    return build_problem(Interval{*l, *r}, *x0, *mu, *sigma, *b, std::move(hints), base, opt);
  } catch (const ProblemError& e) {
    throw ValidationError({std::string("problem: ") + e.what()});
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": not valid JSON (" + e.what() + ")");
  }
}

inline ProblemSpec load_problem_file(const std::string& path, const ClassifyOptions& opt = {}) {
  return problem_from_json(read_json_file(path), opt);
}

/// The problem as a problem-file document.
inline nlohmann::json problem_to_json(const ProblemSpec& spec) {
  nlohmann::json j;
  j["interval"] = {{"left", detail::ext_json(spec.J.left)}, {"right", detail::ext_json(spec.J.right)}};
  j["x0"] = spec.x0;
  j["mu"] = spec.mu.str();
  j["sigma"] = spec.sigma.str();
  j["b"] = spec.b.str();
  if (!spec.singularity_hints.empty()) j["hints"] = {{"singular_points", spec.singularity_hints}};
  if (spec.base_point) j["base_point"] = *spec.base_point;
  return j;
}

}  // namespace gsexp
