#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gsexp/error.hpp"
#include "gsexp/expr.hpp"
#include "gsexp/extended_real.hpp"
#include "gsexp/quad.hpp"
#include "gsexp/scale.hpp"

namespace gsexp {

// ---------------------------------------------------------------- three-valued logic

enum class Tri { False, True, Unknown };

inline Tri tri(bool b) { return b ? Tri::True : Tri::False; }
inline Tri tri_not(Tri a) { return a == Tri::Unknown ? a : tri(a == Tri::False); }
inline Tri tri_and(Tri a, Tri b) {
  if (a == Tri::False || b == Tri::False) return Tri::False;
  if (a == Tri::True && b == Tri::True) return Tri::True;
  return Tri::Unknown;
}
inline Tri tri_or(Tri a, Tri b) { return tri_not(tri_and(tri_not(a), tri_not(b))); }
inline const char* to_string(Tri t) {
  switch (t) {
    case Tri::False: return "false";
    case Tri::True: return "true";
    case Tri::Unknown: return "unknown";
  }
  return "?";
}
inline nlohmann::json to_json_value(Tri t) {
  if (t == Tri::Unknown) return nullptr;
  return t == Tri::True;
}

// ---------------------------------------------------------------- problem

struct ClassifyOptions {
  double eps_cls = 0.05;
  double tol = 1e-8;  // relative accuracy of shell integrals
};

/// Diffusion dY = mu(Y) dt + sigma(Y) dW on J started at x0, and the
/// exponential local martingale of int b(Y) dW.
struct ProblemSpec {
  Interval J;
  double x0 = 0.0;
  Expr mu, sigma, b;
  std::vector<double> singularity_hints;
  std::optional<double> base_point;

  double c() const { return base_point.value_or(x0); }
};

namespace detail {

inline IntegrabilityOptions integrability_opts(const ClassifyOptions& o, double delta) {
  IntegrabilityOptions io;
  io.eps_cls = o.eps_cls;
  io.rel_tol = std::min(1e-8, o.tol);
  io.delta = delta;
  return io;
}

// Shell radius at p: at most 1, and at most half the gap to any other
// point of interest or finite end of J.
inline double shell_radius(double p, const std::vector<double>& others, const Interval& J) {
  double d = 1.0;
  for (double q : others)
    if (q != p) d = std::min(d, 0.5 * std::fabs(q - p));
  if (J.left.is_finite()) d = std::min(d, 0.5 * (p - J.left.value()));
  if (J.right.is_finite()) d = std::min(d, 0.5 * (J.right.value() - p));
  return d;
}

// Integrability of a nonnegative expression on one side of p, using the
// symbolic exponent when one is available.
inline IntegrabilityVerdict expr_integrability(const Expr& e, const CompiledExpr& f, double p, Side side,
                                               double delta, const ClassifyOptions& o) {
  IntegrabilityOptions io = integrability_opts(o, delta);
  io.hint = leading_exponent(e, p, side);
  return local_integrability([&](double x) { return f(x); }, p, side, io);
}

inline nlohmann::json to_json(const IntegrabilityVerdict& v) {
  nlohmann::json j;
  j["status"] = to_string(v.status);
  j["method"] = v.method == IntegrabilityVerdict::Method::Symbolic ? "symbolic" : "numeric";
  if (v.estimated_exponent) j["estimated_exponent"] = *v.estimated_exponent;
  if (!v.note.empty()) j["note"] = v.note;
  if (!v.dyadic_sums.empty()) {
    nlohmann::json shells = nlohmann::json::array();
    std::size_t n = v.dyadic_sums.size(), from = n > 8 ? n - 8 : 0;
    for (std::size_t k = from; k < n; ++k) shells.push_back({v.dyadic_sums[k].first, v.dyadic_sums[k].second});
    j["last_shells"] = shells;
  }
  return j;
}

inline nlohmann::json ext_json(ExtendedReal v) {
  if (v.is_finite()) return v.value();
  return v.str();
}

inline Tri tri_integrable(const IntegrabilityVerdict& v) {
  if (v.integrable()) return Tri::True;
  if (v.divergent()) return Tri::False;
  return Tri::Unknown;
}

inline std::vector<double> merge_points(std::vector<double> a) {
  std::sort(a.begin(), a.end());
  std::vector<double> out;
  for (double v : a)
    if (out.empty() || std::fabs(v - out.back()) > 1e-12 * std::max(1.0, std::fabs(v))) out.push_back(v);
  return out;
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline Expr bsq_over_sigsq(const ProblemSpec& s) {
  Expr two = Expr::number(2.0);
  return simplify(power(s.b, two) / power(s.sigma, two));
}

}  // namespace detail

// ---------------------------------------------------------------- singular set

struct SingularSet {
  std::vector<double> points;  // sorted
  nlohmann::json evidence = nlohmann::json::object();
};

/// A = points of J where b^2/sigma^2 is not locally integrable, restricted
/// to candidates found symbolically plus the hints.
inline SingularSet singular_set(const ProblemSpec& spec, const ClassifyOptions& opt = {}) {
  Expr q = detail::bsq_over_sigsq(spec);
  CompiledExpr qc(q);
  std::vector<double> cand = candidate_singularities(q, spec.J);
  for (double h : spec.singularity_hints)
    if (spec.J.contains(h)) cand.push_back(h);
  cand = detail::merge_points(std::move(cand));
  for (std::size_t i = 1; i < cand.size(); ++i)
    if (cand[i] - cand[i - 1] < 1e-9)
      throw ProblemError(ProblemError::Kind::AccumulatingSingularities,
                         "candidate singular points " + detail::fmt(cand[i - 1]) + " and " + detail::fmt(cand[i]) +
                             " are closer than 1e-9");
  SingularSet out;
  nlohmann::json list = nlohmann::json::array();
  for (double p : cand) {
    double delta = detail::shell_radius(p, cand, spec.J);
    auto f = [&](double x) { return std::fabs(qc(x)); };
    IntegrabilityOptions io = detail::integrability_opts(opt, delta);
    io.hint = leading_exponent(q, p, Side::Left);
    IntegrabilityVerdict left = local_integrability(f, p, Side::Left, io);
    io.hint = leading_exponent(q, p, Side::Right);
    IntegrabilityVerdict right = local_integrability(f, p, Side::Right, io);
    bool in_a = left.divergent() || right.divergent();
    if (!in_a && (left.inconclusive() || right.inconclusive()))
      throw UndecidableError("singular_set", "b^2/sigma^2 near x = " + detail::fmt(p));
    if (in_a) out.points.push_back(p);
    list.push_back({{"x", p}, {"in_A", in_a}, {"left", detail::to_json(left)}, {"right", detail::to_json(right)}});
  }
  out.evidence["points"] = out.points;
  out.evidence["candidates"] = list;
  return out;
}

// ---------------------------------------------------------------- problem construction

/// Validates the data of a problem: interval, start point, nondegeneracy
/// and local integrability of 1/sigma^2 and mu/sigma^2 at every candidate
/// singular point, and x0 outside the singular set.
inline ProblemSpec build_problem(Interval J, double x0, Expr mu, Expr sigma, Expr b,
                                 std::vector<double> hints = {}, std::optional<double> base_point = {},
                                 const ClassifyOptions& opt = {}) {
  using K = ProblemError::Kind;
  if (!(J.left < J.right)) throw ProblemError(K::Invalid, "interval must satisfy l < r");
  if (!std::isfinite(x0) || !J.contains(x0))
    throw ProblemError(K::X0OutsideInterval, "x0 = " + detail::fmt(x0) + " is not inside (" + J.left.str() + ", " +
                                                  J.right.str() + ")");
  double s0 = 0.0;
  try {
    s0 = sigma.eval(x0);
  } catch (const DomainFault&) {
    throw ProblemError(K::SigmaZeroAtX0, "sigma is undefined at x0 = " + detail::fmt(x0));
  }
  if (s0 == 0.0) throw ProblemError(K::SigmaZeroAtX0, "sigma(x0) = 0 at x0 = " + detail::fmt(x0));
  if (base_point && !(std::isfinite(*base_point) && J.contains(*base_point)))
    throw ProblemError(K::Invalid, "base point " + detail::fmt(*base_point) + " is not inside the interval");

  ProblemSpec spec{J, x0, std::move(mu), std::move(sigma), std::move(b), std::move(hints), base_point};
  for (double h : spec.singularity_hints)
    if (!std::isfinite(h)) throw ProblemError(K::Invalid, "singularity hints must be finite");

  // Engelbert-Schmidt
  Expr two = Expr::number(2.0);
  Expr inv = simplify(Expr::number(1.0) / power(spec.sigma, two));
  Expr drift = simplify(call(Func::Abs, spec.mu) / power(spec.sigma, two));
  std::vector<double> pts = candidate_singularities(inv, J);
  for (double p : candidate_singularities(drift, J)) pts.push_back(p);
  for (double h : spec.singularity_hints)
    if (J.contains(h)) pts.push_back(h);
  pts = detail::merge_points(std::move(pts));
  CompiledExpr invc(inv), driftc(drift);
  for (double p : pts) {
    bool zero = false;
    try {
      zero = spec.sigma.eval(p) == 0.0;
    } catch (const DomainFault&) {
    }
    if (zero) throw ProblemError(K::EngelbertSchmidt, "sigma vanishes at x = " + detail::fmt(p));
    double delta = detail::shell_radius(p, pts, J);
    for (Side side : {Side::Left, Side::Right}) {
      const char* sname = side == Side::Left ? "left" : "right";
      auto vi = detail::expr_integrability(inv, invc, p, side, delta, opt);
      if (!vi.integrable())
        throw ProblemError(K::EngelbertSchmidt, "1/sigma^2 is not locally integrable (" + std::string(to_string(vi.status)) +
                                                    ") on the " + sname + " of x = " + detail::fmt(p));
      auto vd = detail::expr_integrability(drift, driftc, p, side, delta, opt);
      if (!vd.integrable())
        throw ProblemError(K::EngelbertSchmidt, "mu/sigma^2 is not locally integrable (" + std::string(to_string(vd.status)) +
                                                    ") on the " + sname + " of x = " + detail::fmt(p));
    }
  }

  SingularSet A = singular_set(spec, opt);
  for (double p : A.points)
    if (std::fabs(p - x0) <= 1e-12 * std::max(1.0, std::fabs(x0)))
      throw ProblemError(K::X0InSingularSet,
                         "x0 = " + detail::fmt(x0) + " lies in the singular set; Z is identically 0 after time 0, "
                         "which is trivially a martingale");
  return spec;
}

inline ProblemSpec build_problem(const ProblemSpec& raw, const ClassifyOptions& opt = {}) {
  return build_problem(raw.J, raw.x0, raw.mu, raw.sigma, raw.b, raw.singularity_hints, raw.base_point, opt);
}

// ---------------------------------------------------------------- effective interval

enum class EndpointKind { NaturalBoundary, SingularPoint };

struct EffectiveEndpoint {
  ExtendedReal location;
  EndpointKind kind = EndpointKind::NaturalBoundary;
};

inline std::pair<EffectiveEndpoint, EffectiveEndpoint> effective_interval(const ProblemSpec& spec,
                                                                          const SingularSet& A) {
  EffectiveEndpoint a{spec.J.left, EndpointKind::NaturalBoundary};
  EffectiveEndpoint b{spec.J.right, EndpointKind::NaturalBoundary};
  for (double p : A.points) {
    if (p < spec.x0 && ExtendedReal(p) > a.location) a = {p, EndpointKind::SingularPoint};
    if (p > spec.x0 && ExtendedReal(p) < b.location) b = {p, EndpointKind::SingularPoint};
  }
  return {a, b};
}

// ---------------------------------------------------------------- set B

/// Integrability of |x - p| b^2/sigma^2 on the given side of p.
inline IntegrabilityVerdict b_membership_verdict(const ProblemSpec& spec, const SingularSet& A, double p, Side side,
                                                 const ClassifyOptions& opt = {}) {
  if (std::find(A.points.begin(), A.points.end(), p) == A.points.end())
    throw std::invalid_argument("b_membership: " + detail::fmt(p) + " is not in the singular set");
  Expr w = simplify(call(Func::Abs, Expr::variable() - Expr::number(p)) * detail::bsq_over_sigsq(spec));
  CompiledExpr wc(w);
  std::vector<double> others = A.points;
  double delta = detail::shell_radius(p, others, spec.J);
  IntegrabilityOptions io = detail::integrability_opts(opt, delta);
  io.hint = leading_exponent(w, p, side);
  return local_integrability([&](double x) { return std::fabs(wc(x)); }, p, side, io);
}

/// p in B, i.e. int b^2(Y) dt diverges on the way into p.
inline bool b_membership(const ProblemSpec& spec, const SingularSet& A, double p, Side side,
                         const ClassifyOptions& opt = {}) {
  auto v = b_membership_verdict(spec, A, p, side, opt);
  if (v.inconclusive()) throw UndecidableError("b_membership", "|x - p| b^2/sigma^2 at p = " + detail::fmt(p));
  return v.divergent();
}

// ---------------------------------------------------------------- scale objects

/// rho, s for the drift 2 mu/sigma^2 and rho~, s~ for 2 mu/sigma^2 + 2 b/sigma
/// on (alpha, beta), both anchored at c.
class ScaleObjects {
 public:
  ScaleObjects(const ProblemSpec& spec, const EffectiveEndpoint& alpha, const EffectiveEndpoint& beta, double c,
               const ClassifyOptions& opt = {})
      : alpha_(alpha), beta_(beta), c_(c) {
    if (!(alpha.location < ExtendedReal(c) && ExtendedReal(c) < beta.location))
      throw ProblemError(ProblemError::Kind::Invalid,
                         "base point " + detail::fmt(c) + " is outside the effective interval");
    Expr two = Expr::number(2.0);
    Expr g = simplify(two * spec.mu / power(spec.sigma, two));
    Expr gt = simplify(g + two * spec.b / spec.sigma);
    Expr w = simplify(Expr::number(1.0) / power(spec.sigma, two));
    Interval inner{alpha.location, beta.location};
    std::vector<double> special;
    for (const Expr* e : {&g, &gt, &w})
      for (double p : candidate_singularities(*e, inner)) special.push_back(p);
    for (double p : candidate_singularities(detail::bsq_over_sigsq(spec), inner)) special.push_back(p);
    for (double h : spec.singularity_hints)
      if (inner.contains(h)) special.push_back(h);
    special = detail::merge_points(std::move(special));
    ScaleFunction::Options so;
    so.eps_cls = opt.eps_cls;
    so.rel_tol = std::min(1e-10, 1e-2 * opt.tol);
    plain_.emplace(CompiledExpr(g), std::nullopt, alpha.location, beta.location, c, special, so);
    tilde_.emplace(CompiledExpr(gt), CompiledExpr(w), alpha.location, beta.location, c, special, so);
  }

  const ScaleFunction& plain() const { return *plain_; }
  const ScaleFunction& tilde() const { return *tilde_; }
  const EffectiveEndpoint& alpha() const { return alpha_; }
  const EffectiveEndpoint& beta() const { return beta_; }
  double base_point() const { return c_; }

  double rho(double x) const { return plain_->rho(x); }
  double rho_tilde(double x) const { return tilde_->rho(x); }
  double s(double x) const { return plain_->s(x); }
  double s_tilde(double x) const { return tilde_->s(x); }

  ExtendedReal s_alpha() const { return plain_->s_left(); }
  ExtendedReal s_beta() const { return plain_->s_right(); }
  ExtendedReal s_tilde_alpha() const { return tilde_->s_left(); }
  ExtendedReal s_tilde_beta() const { return tilde_->s_right(); }

 private:
  EffectiveEndpoint alpha_, beta_;
  double c_;
  std::optional<ScaleFunction> plain_, tilde_;
};

// ---------------------------------------------------------------- endpoint tests

enum class Which { Alpha, Beta };

namespace detail {

// Integrability of f on the inner side of the effective endpoint.
template <class F>
IntegrabilityVerdict endpoint_integrability(const ScaleFunction& sf, Which which, F&& f, const ClassifyOptions& opt) {
  ExtendedReal e = which == Which::Alpha ? sf.alpha() : sf.beta();
  if (e.is_finite()) {
    auto io = integrability_opts(opt, sf.shell_delta(e.value()));
    return local_integrability(f, e.value(), which == Which::Alpha ? Side::Right : Side::Left, io);
  }
  auto io = integrability_opts(opt, sf.far_radius());
  return integrability_at_infinity(f, e, io);
}

inline Tri limit_finite(const ScaleFunction& sf, Which which) {
  return tri_integrable(which == Which::Alpha ? sf.left_limit_verdict() : sf.right_limit_verdict());
}

inline double W(const ScaleFunction& sf, Which which, double x) {
  return which == Which::Alpha ? sf.W_left(x) : sf.W_right(x);
}

// |s(e) - s| b^2 / (rho sigma^2) near e, for either scale function.
inline std::pair<Tri, nlohmann::json> good_form(const ProblemSpec& spec, const ScaleFunction& sf, Which which,
                                                const ClassifyOptions& opt) {
  nlohmann::json ev;
  Tri fin = limit_finite(sf, which);
  ev["limit"] = to_json(which == Which::Alpha ? sf.left_limit_verdict() : sf.right_limit_verdict());
  if (fin != Tri::True) return {fin == Tri::False ? Tri::False : Tri::Unknown, ev};
  if (is_structurally_zero(spec.b)) {
    ev["weighted"] = "b is identically zero";
    return {Tri::True, ev};
  }
  CompiledExpr q(bsq_over_sigsq(spec));
  auto f = [&](double x) { return W(sf, which, x) * std::fabs(q(x)); };
  auto v = endpoint_integrability(sf, which, f, opt);
  ev["weighted"] = to_json(v);
  return {tri_integrable(v), ev};
}

inline Tri combine_dual(Tri primary, Tri secondary, const std::string& what) {
  if (primary != Tri::Unknown && secondary != Tri::Unknown && primary != secondary)
    throw ConsistencyError(what + ": the two equivalent forms disagree (" + to_string(primary) + " vs " +
                           to_string(secondary) + ")");
  return primary != Tri::Unknown ? primary : secondary;
}

inline const char* which_name(Which w) { return w == Which::Alpha ? "alpha" : "beta"; }

}  // namespace detail

struct EndpointTest {
  Tri value = Tri::Unknown;
  Tri primary = Tri::Unknown;
  Tri secondary = Tri::Unknown;
  nlohmann::json evidence = nlohmann::json::object();
};

/// Good endpoint: s(e) finite and |s(e) - s| b^2/(rho sigma^2) integrable
/// near e. The same test with s~, rho~ runs alongside as a cross-check.
inline EndpointTest endpoint_good(const ProblemSpec& spec, const ScaleObjects& scale, Which which,
                                  const ClassifyOptions& opt = {}) {
  EndpointTest t;
  auto [p, pe] = detail::good_form(spec, scale.plain(), which, opt);
  auto [s, se] = detail::good_form(spec, scale.tilde(), which, opt);
  t.primary = p;
  t.secondary = s;
  t.evidence["s_form"] = pe;
  t.evidence["s_tilde_form"] = se;
  t.evidence["primary"] = to_json_value(p);
  t.evidence["secondary"] = to_json_value(s);
  t.value = detail::combine_dual(p, s, std::string("good endpoint ") + detail::which_name(which));
  return t;
}

/// Does the diffusion with drift mu + b sigma reach e in finite time?
/// Primary: s~(e) finite and |s~(e) - s~|/(rho~ sigma^2) integrable near e.
/// Cross-check: integrability of the inner integral of v~ near e.
inline EndpointTest feller_exits(const ProblemSpec& spec, const ScaleObjects& scale, Which which,
                                 const ClassifyOptions& opt = {}) {
  EndpointTest t;
  const ScaleFunction& sf = scale.tilde();
  CompiledExpr w(simplify(Expr::number(1.0) / power(spec.sigma, Expr::number(2.0))));
  Tri fin = detail::limit_finite(sf, which);
  t.evidence["s_tilde_limit"] =
      detail::to_json(which == Which::Alpha ? sf.left_limit_verdict() : sf.right_limit_verdict());
  if (fin == Tri::True) {
    auto f = [&](double x) { return detail::W(sf, which, x) * std::fabs(w(x)); };
    auto v = detail::endpoint_integrability(sf, which, f, opt);
    t.evidence["split_weighted"] = detail::to_json(v);
    t.primary = detail::tri_integrable(v);
  } else {
    t.primary = fin == Tri::False ? Tri::False : Tri::Unknown;
  }
  auto vv = detail::endpoint_integrability(sf, which, [&](double x) { return sf.V(x); }, opt);
  t.evidence["v_tilde"] = detail::to_json(vv);
  t.secondary = detail::tri_integrable(vv);
  t.evidence["primary"] = to_json_value(t.primary);
  t.evidence["secondary"] = to_json_value(t.secondary);
  t.value = detail::combine_dual(t.primary, t.secondary, std::string("exit at ") + detail::which_name(which));
  return t;
}

// ---------------------------------------------------------------- verdict

enum class Level { NotLocalMartingale, StrictLocalMartingale, Martingale, UniformlyIntegrableMartingale };

inline const char* to_string(Level l) {
  switch (l) {
    case Level::NotLocalMartingale: return "not_local_martingale";
    case Level::StrictLocalMartingale: return "strict_local_martingale";
    case Level::Martingale: return "martingale";
    case Level::UniformlyIntegrableMartingale: return "uniformly_integrable_martingale";
  }
  return "?";
}

struct EndpointAnalysis {
  Tri s_finite = Tri::Unknown;
  Tri s_tilde_finite = Tri::Unknown;
  Tri good = Tri::Unknown;
  Tri feller_exits = Tri::Unknown;
  std::optional<bool> in_B;
  nlohmann::json evidence = nlohmann::json::object();
};

struct Condition {
  std::string id;
  std::string paper_ref;  // the condition as a formula
  Tri holds = Tri::Unknown;
  nlohmann::json evidence = nlohmann::json::object();
};

struct Verdict {
  Level level = Level::NotLocalMartingale;
  SingularSet singular;
  EffectiveEndpoint alpha, beta;
  EndpointAnalysis alpha_analysis, beta_analysis;
  std::vector<Condition> certificate;

  const Condition* find(const std::string& id) const {
    for (const auto& c : certificate)
      if (c.id == id) return &c;
    return nullptr;
  }
};

inline nlohmann::json certificate_json(const Verdict& v) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : v.certificate)
    conds.push_back({{"id", c.id}, {"paper_ref", c.paper_ref}, {"holds", to_json_value(c.holds)}, {"evidence", c.evidence}});
  return {{"level", to_string(v.level)}, {"conditions", conds}};
}

namespace detail {

inline Tri b_zero_on(const ProblemSpec& spec, const ScaleObjects& scale) {
  if (is_structurally_zero(spec.b)) return Tri::True;
  CompiledExpr bc(spec.b);
  double v = 0.0;
  for (double x : scale.plain().knots())
    if (bc.try_eval(x, v) && v != 0.0) return Tri::False;
  try {
    auto r = integrate([&](double x) { return std::fabs(bc(x)); }, scale.alpha().location, scale.beta().location, 1e-14);
    return tri(r.value < 1e-12);
  } catch (const QuadratureError&) {
    return Tri::False;
  }
}

inline void require_decided(Tri t, const std::string& condition) {
  if (t == Tri::Unknown) throw UndecidableError(condition);
}

}  // namespace detail

/// Four-level classification of Z with a certificate of every condition used.
inline Verdict classify(const ProblemSpec& spec, const ClassifyOptions& opt = {}) {
  Verdict out;
  out.singular = singular_set(spec, opt);
  auto [alpha, beta] = effective_interval(spec, out.singular);
  out.alpha = alpha;
  out.beta = beta;
  auto& cert = out.certificate;
  cert.push_back({"singular_set", "A = {x in J : b^2/sigma^2 not in L1_loc(x)}", tri(!out.singular.points.empty()),
                  out.singular.evidence});
  nlohmann::json ei = {{"alpha", detail::ext_json(alpha.location)},
                       {"beta", detail::ext_json(beta.location)},
                       {"alpha_kind", alpha.kind == EndpointKind::SingularPoint ? "singular_point" : "natural_boundary"},
                       {"beta_kind", beta.kind == EndpointKind::SingularPoint ? "singular_point" : "natural_boundary"}};
  cert.push_back({"effective_interval",
                  "alpha = max(A u {l}) below x0, beta = min(A u {r}) above x0, (alpha, beta) inside J \\ A",
                  Tri::True, ei});

  // local martingale gate
  Tri gate = Tri::True;
  auto gate_side = [&](const EffectiveEndpoint& e, Which which, EndpointAnalysis& an) {
    if (e.kind != EndpointKind::SingularPoint) return Tri::True;
    Side side = which == Which::Alpha ? Side::Right : Side::Left;
    auto v = b_membership_verdict(spec, out.singular, e.location.value(), side, opt);
    Tri in_b = v.divergent() ? Tri::True : (v.integrable() ? Tri::False : Tri::Unknown);
    if (in_b != Tri::Unknown) an.in_B = in_b == Tri::True;
    an.evidence["in_B"] = detail::to_json(v);
    std::string id = std::string(detail::which_name(which)) + "_in_B";
    std::string ref = which == Which::Alpha ? "(x - alpha) b^2/sigma^2 not in L1_loc(alpha+)"
                                            : "(beta - x) b^2/sigma^2 not in L1_loc(beta-)";
    cert.push_back({id, ref, in_b, detail::to_json(v)});
    return in_b;
  };
  gate = tri_and(gate_side(alpha, Which::Alpha, out.alpha_analysis), gate_side(beta, Which::Beta, out.beta_analysis));
  cert.push_back({"local_martingale_gate", "alpha, beta in B u {l, r}", gate, nlohmann::json::object()});
  if (gate == Tri::Unknown) {
    const char* which = out.alpha_analysis.in_B.has_value() || alpha.kind == EndpointKind::NaturalBoundary
                            ? "beta_in_B"
                            : "alpha_in_B";
    throw UndecidableError(which, "B membership could not be decided");
  }
  if (gate == Tri::False) {
    out.level = Level::NotLocalMartingale;
    return out;
  }

  ScaleObjects scale(spec, alpha, beta, spec.c(), opt);
  struct PerEnd {
    EndpointTest good, exits;
  } ends[2];
  for (Which w : {Which::Alpha, Which::Beta}) {
    EndpointAnalysis& an = w == Which::Alpha ? out.alpha_analysis : out.beta_analysis;
    const ScaleFunction& p = scale.plain();
    const ScaleFunction& t = scale.tilde();
    an.s_finite = detail::limit_finite(p, w);
    an.s_tilde_finite = detail::limit_finite(t, w);
    PerEnd& pe = ends[w == Which::Alpha ? 0 : 1];
    pe.good = endpoint_good(spec, scale, w, opt);
    pe.exits = feller_exits(spec, scale, w, opt);
    an.good = pe.good.value;
    an.feller_exits = pe.exits.value;
    an.evidence["good"] = pe.good.evidence;
    an.evidence["exits"] = pe.exits.evidence;
    std::string n = detail::which_name(w);
    bool left = w == Which::Alpha;
    cert.push_back({n + "_s_finite", left ? "s(alpha) > -inf" : "s(beta) < +inf", an.s_finite,
                    detail::to_json(left ? p.left_limit_verdict() : p.right_limit_verdict())});
    cert.push_back({n + "_s_tilde_finite", left ? "s~(alpha) > -inf" : "s~(beta) < +inf", an.s_tilde_finite,
                    detail::to_json(left ? t.left_limit_verdict() : t.right_limit_verdict())});
    cert.push_back({n + "_good",
                    left ? "s(alpha) > -inf and (s - s(alpha)) b^2/(rho sigma^2) in L1_loc(alpha+)"
                         : "s(beta) < +inf and (s(beta) - s) b^2/(rho sigma^2) in L1_loc(beta-)",
                    an.good, pe.good.evidence});
    cert.push_back({n + "_exits",
                    left ? "s~(alpha) > -inf and (s~ - s~(alpha))/(rho~ sigma^2) in L1_loc(alpha+)"
                         : "s~(beta) < +inf and (s~(beta) - s~)/(rho~ sigma^2) in L1_loc(beta-)",
                    an.feller_exits, pe.exits.evidence});
  }

  const EndpointAnalysis& A = out.alpha_analysis;
  const EndpointAnalysis& B = out.beta_analysis;
  Tri ok_a = tri_or(tri_not(A.feller_exits), A.good);
  Tri ok_b = tri_or(tri_not(B.feller_exits), B.good);
  Tri mart = tri_and(ok_a, ok_b);
  cert.push_back({"martingale", "for each endpoint e: the diffusion with drift mu + b sigma does not exit at e, or e is good",
                  mart, {{"alpha_ok", to_json_value(ok_a)}, {"beta_ok", to_json_value(ok_b)}}});
  if (mart == Tri::Unknown) {
    if (ok_a == Tri::Unknown) {
      detail::require_decided(A.feller_exits, "alpha_exits");
      detail::require_decided(A.good, "alpha_good");
    }
    detail::require_decided(B.feller_exits, "beta_exits");
    detail::require_decided(B.good, "beta_good");
    detail::require_decided(mart, "martingale");
  }
  if (mart == Tri::False) {
    out.level = Level::StrictLocalMartingale;
    return out;
  }

  Tri ui_a = detail::b_zero_on(spec, scale);
  Tri ui_b = tri_and(A.good, tri_not(B.s_tilde_finite));
  Tri ui_c = tri_and(B.good, tri_not(A.s_tilde_finite));
  Tri ui_d = tri_and(A.good, B.good);
  Tri ui = tri_or(tri_or(ui_a, ui_b), tri_or(ui_c, ui_d));
  cert.push_back({"ui_a", "b = 0 a.e. on (alpha, beta)", ui_a, nlohmann::json::object()});
  cert.push_back({"ui_b", "alpha good and s~(beta) = +inf", ui_b, nlohmann::json::object()});
  cert.push_back({"ui_c", "beta good and s~(alpha) = -inf", ui_c, nlohmann::json::object()});
  cert.push_back({"ui_d", "alpha and beta both good", ui_d, nlohmann::json::object()});
  cert.push_back({"uniformly_integrable", "(a) or (b) or (c) or (d)", ui, nlohmann::json::object()});
  if (ui == Tri::Unknown) {
    for (auto [t, id] : {std::pair{A.good, "alpha_good"}, std::pair{B.good, "beta_good"},
                         std::pair{A.s_tilde_finite, "alpha_s_tilde_finite"},
                         std::pair{B.s_tilde_finite, "beta_s_tilde_finite"}})
      detail::require_decided(t, id);
    detail::require_decided(ui, "uniformly_integrable");
  }
  out.level = ui == Tri::True ? Level::UniformlyIntegrableMartingale : Level::Martingale;
  return out;
}

/// Direct classification for an empty singular set on (l, r): goodness in
/// the s~-form and exits through v~. Independent of the s-form and split
/// Feller integrals used by classify().
inline Level classify_mu_direct(const ProblemSpec& spec, const ClassifyOptions& opt = {}) {
  SingularSet A = singular_set(spec, opt);
  if (!A.points.empty()) throw std::invalid_argument("classify_mu_direct: singular set must be empty");
  EffectiveEndpoint l{spec.J.left, EndpointKind::NaturalBoundary}, r{spec.J.right, EndpointKind::NaturalBoundary};
  ScaleObjects scale(spec, l, r, spec.c(), opt);
  const ScaleFunction& t = scale.tilde();
  Tri good[2], exits[2], fin[2];
  for (Which w : {Which::Alpha, Which::Beta}) {
    int i = w == Which::Alpha ? 0 : 1;
    good[i] = detail::good_form(spec, t, w, opt).first;
    exits[i] = detail::tri_integrable(detail::endpoint_integrability(t, w, [&](double x) { return t.V(x); }, opt));
    fin[i] = detail::limit_finite(t, w);
  }
  Tri mart = tri_and(tri_or(tri_not(exits[0]), good[0]), tri_or(tri_not(exits[1]), good[1]));
  detail::require_decided(mart, "martingale");
  if (mart == Tri::False) return Level::StrictLocalMartingale;
  Tri ui = tri_or(tri_or(detail::b_zero_on(spec, scale), tri_and(good[0], tri_not(fin[1]))),
                  tri_or(tri_and(good[1], tri_not(fin[0])), tri_and(good[0], good[1])));
  detail::require_decided(ui, "uniformly_integrable");
  return ui == Tri::True ? Level::UniformlyIntegrableMartingale : Level::Martingale;
}

}  // namespace gsexp
