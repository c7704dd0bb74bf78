#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "gsexp/error.hpp"
#include "gsexp/extended_real.hpp"
#include "gsexp/expr.hpp"

namespace gsexp {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  long subdivisions = 0;
};

struct QuadOptions {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  std::size_t max_panels = std::size_t{1} << 20;
  int initial_panels = 1;
  // Return the current estimate instead of throwing when max_panels runs out.
  bool best_effort = false;
};

namespace detail {

struct GK15 {
  static constexpr double xgk[8] = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr double wgk[8] = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                   0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
};

struct Panel {
  double lo, hi, value, err;
  bool frozen;
  bool operator<(const Panel& o) const { return err < o.err; }
};

template <class G>
Panel gk15_panel(G& g, double lo, double hi) {
  double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
  double fc = g(c);
  double k = fc * GK15::wgk[7];
  double gs = fc * GK15::wg[3];
  for (int j = 0; j < 7; ++j) {
    double dx = h * GK15::xgk[j];
    // keep nodes off the endpoints when the panel is a few ulps wide
    double x1 = std::max(c - dx, std::nextafter(lo, hi)), x2 = std::min(c + dx, std::nextafter(hi, lo));
    double f1 = g(x1), f2 = g(x2);
    k += GK15::wgk[j] * (f1 + f2);
    if (j % 2 == 1) gs += GK15::wg[j / 2] * (f1 + f2);
  }
  Panel p{lo, hi, k * h, std::fabs((k - gs) * h), false};
  double scale = std::max(std::fabs(lo), std::fabs(hi));
  double ulp = std::nextafter(scale, std::numeric_limits<double>::infinity()) - scale;
  if (hi - lo <= 64.0 * ulp) p.frozen = true;
  return p;
}

// Global adaptive GK7/15 on a finite u-range.
template <class G>
QuadResult adaptive(G& g, double lo, double hi, const QuadOptions& opt) {
  std::priority_queue<Panel> active;
  double frozen_value = 0.0, frozen_err = 0.0;
  double total = 0.0, err = 0.0;
  long panels = 0;
  int n0 = std::max(1, opt.initial_panels);
  for (int i = 0; i < n0; ++i) {
    double a = lo + (hi - lo) * i / n0;
    double b = (i + 1 == n0) ? hi : lo + (hi - lo) * (i + 1) / n0;
    Panel p = gk15_panel(g, a, b);
    ++panels;
    total += p.value;
    err += p.err;
    if (p.frozen) {
      frozen_value += p.value;
      frozen_err += p.err;
    } else {
      active.push(p);
    }
  }
  auto tolerance = [&](double v) { return std::max(opt.abs_tol, opt.rel_tol * std::fabs(v)); };
  for (;;) {
    if (!(std::isfinite(total) && std::isfinite(err)))
      throw QuadratureError("integrate: non-finite partial result (integral diverges?)");
    if (err <= tolerance(total) || active.empty()) {
      // recompute from scratch to shed accumulated update drift
      double v = frozen_value, e = frozen_err;
      auto copy = active;
      while (!copy.empty()) {
        v += copy.top().value;
        e += copy.top().err;
        copy.pop();
      }
      total = v;
      err = e;
      if (err <= tolerance(total) || active.empty()) break;
    }
    // Panels at the roundoff floor cannot improve; stop once the rest is resolved.
    if (frozen_err > 0.0 && err - frozen_err <= tolerance(total)) break;
    if (static_cast<std::size_t>(panels) >= opt.max_panels) {
      if (opt.best_effort) break;
      throw QuadratureError("integrate: panel budget exhausted (" + std::to_string(panels) +
                            " panels, error estimate " + std::to_string(err) + ")");
    }
    Panel p = active.top();
    active.pop();
    double mid = 0.5 * (p.lo + p.hi);
    Panel l = gk15_panel(g, p.lo, mid), r = gk15_panel(g, mid, p.hi);
    panels += 1;
    // A split that does not shrink an already tiny relative error is
    // evaluation noise in f; further splitting cannot help.
    if (l.err + r.err >= p.err && p.err <= 1e-9 * (std::fabs(l.value) + std::fabs(r.value)))
      l.frozen = r.frozen = true;
    total += l.value + r.value - p.value;
    err += l.err + r.err - p.err;
    for (const Panel& q : {l, r}) {
      if (q.frozen) {
        frozen_value += q.value;
        frozen_err += q.err;
      } else {
        active.push(q);
      }
    }
  }
  return {total, err, panels};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod 7/15 quadrature over (a, b). Infinite ends are
/// compactified with the tangent map, written as x = a + cot(v) so that
/// the far tail sits near v = 0 where doubles are dense.
template <class F>
QuadResult integrate(F&& f, ExtendedReal a, ExtendedReal b, const QuadOptions& opt) {
  if (!(a < b)) throw std::invalid_argument("integrate: requires a < b");
  constexpr double half_pi = std::numbers::pi / 2;
  if (a.is_finite() && b.is_finite()) {
    auto g = [&](double x) { return f(x); };
    return detail::adaptive(g, a.value(), b.value(), opt);
  }
  QuadOptions o = opt;
  o.initial_panels = std::max(opt.initial_panels, 8);
  auto half_line = [&](double origin, double dir) {
    auto g = [&](double v) {
      double sv = std::sin(v);
      return f(origin + dir * (std::cos(v) / sv)) / (sv * sv);
    };
    return detail::adaptive(g, 0.0, half_pi, o);
  };
  if (!a.is_finite() && !b.is_finite()) {
    o.abs_tol = 0.5 * opt.abs_tol;
    QuadResult r = half_line(0.0, 1.0), l = half_line(0.0, -1.0);
    return {r.value + l.value, r.abs_error + l.abs_error, r.subdivisions + l.subdivisions};
  }
  if (a.is_finite()) return half_line(a.value(), 1.0);
  return half_line(b.value(), -1.0);
}

/// Integral with absolute error target `tol`.
template <class F>
QuadResult integrate(F&& f, ExtendedReal a, ExtendedReal b, double tol) {
  QuadOptions o;
  o.abs_tol = tol;
  return integrate(std::forward<F>(f), a, b, o);
}

// ---------------------------------------------------------------- integrability

enum class Integrability { Integrable, Divergent, Inconclusive };

inline const char* to_string(Integrability s) {
  switch (s) {
    case Integrability::Integrable: return "integrable";
    case Integrability::Divergent: return "divergent";
    case Integrability::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct IntegrabilityVerdict {
  enum class Method { Symbolic, Numeric };

  Integrability status = Integrability::Inconclusive;
  std::optional<double> estimated_exponent;  // f ~ C|x-p|^a (or C|x|^a at infinity)
  std::vector<std::pair<int, double>> dyadic_sums;
  Method method = Method::Numeric;
  std::string note;

  bool integrable() const { return status == Integrability::Integrable; }
  bool divergent() const { return status == Integrability::Divergent; }
  bool inconclusive() const { return status == Integrability::Inconclusive; }
};

struct IntegrabilityOptions {
  double eps_cls = 0.05;
  std::optional<double> hint;  // exact local exponent, if known
  double delta = 1.0;          // outer shell radius (finite point) or start radius (infinity)
  double rel_tol = 1e-9;
  int shells = 48;
};

namespace detail {

constexpr int kRatioWindow = 8;
constexpr int kMonotoneWindow = 5;
constexpr double kBandSlack = 1e-6;
constexpr double kFlatTol = 1e-5;  // quadrature noise allowed in "non-decreasing"

// lambda = log2 of the median growth ratio between consecutive shells.
// Finite point: f ~ t^a gives lambda = -(a+1); infinity: lambda = a+1.
// In both orientations lambda < 0 means the shells shrink (integrable).
inline void decide_from_shells(IntegrabilityVerdict& v, const std::vector<double>& sums, double eps,
                               bool at_infinity) {
  for (std::size_t k = 0; k < sums.size(); ++k) v.dyadic_sums.emplace_back(static_cast<int>(k), sums[k]);
  for (double s : sums) {
    if (std::isnan(s)) {
      v.status = Integrability::Inconclusive;
      v.note = "shell integral is NaN";
      return;
    }
  }
  for (double s : sums) {
    if (std::isinf(s)) {
      v.status = Integrability::Divergent;
      v.note = "shell integral overflowed";
      return;
    }
  }
  if (sums.empty()) {
    v.status = Integrability::Inconclusive;
    v.note = "no resolvable shells";
    return;
  }
  std::size_t nz = sums.size();
  while (nz > 0 && sums[nz - 1] == 0.0) --nz;
  if (nz < sums.size() && sums.size() - nz >= 2) {
    v.status = Integrability::Integrable;
    v.note = "integrand vanishes near the point";
    return;
  }
  if (sums.size() < kRatioWindow + 1) {
    v.status = Integrability::Inconclusive;
    v.note = "too few resolvable shells";
    return;
  }
  std::vector<double> ratios;
  for (std::size_t k = sums.size() - kRatioWindow; k < sums.size(); ++k) {
    if (!(sums[k - 1] > 0.0) || !(sums[k] > 0.0)) {
      v.status = Integrability::Inconclusive;
      v.note = "vanishing shell inside the ratio window";
      return;
    }
    ratios.push_back(sums[k] / sums[k - 1]);
  }
  std::sort(ratios.begin(), ratios.end());
  double med = 0.5 * (ratios[kRatioWindow / 2 - 1] + ratios[kRatioWindow / 2]);
  double lambda = std::log2(med);
  v.estimated_exponent = at_infinity ? lambda - 1.0 : -(1.0 + lambda);
  if (lambda <= -eps + kBandSlack) {
    v.status = Integrability::Integrable;
  } else if (lambda >= eps - kBandSlack) {
    v.status = Integrability::Divergent;
  } else {
    bool nondecreasing = true;
    for (std::size_t k = sums.size() - kMonotoneWindow + 1; k < sums.size(); ++k)
      if (sums[k] < sums[k - 1] * (1.0 - kFlatTol)) nondecreasing = false;
    if (nondecreasing) {
      v.status = Integrability::Divergent;
      v.note = "borderline exponent with non-decaying shells";
    } else {
      v.status = Integrability::Inconclusive;
      v.note = "exponent within the classification margin";
    }
  }
}

inline double ulp_of(double x) {
  double a = std::fabs(x);
  return std::nextafter(a, std::numeric_limits<double>::infinity()) - a;
}

}  // namespace detail

/// Decides whether a nonnegative f is integrable on a one-sided
/// neighbourhood of the finite point p, using dyadic shells
/// [p + delta 2^-(k+1), p + delta 2^-k] (mirrored on the left).
template <class F>
IntegrabilityVerdict local_integrability(F&& f, double p, Side side, const IntegrabilityOptions& opt = {}) {
  IntegrabilityVerdict v;
  if (opt.hint) {
    v.method = IntegrabilityVerdict::Method::Symbolic;
    v.estimated_exponent = *opt.hint;
    v.status = *opt.hint > -1.0 ? Integrability::Integrable : Integrability::Divergent;
    return v;
  }
  double dir = side == Side::Right ? 1.0 : -1.0;
  double floor_width = std::ldexp(detail::ulp_of(p), 32);  // abscissa rounding below ~2e-10
  QuadOptions qo;
  qo.abs_tol = 0.0;
  qo.rel_tol = opt.rel_tol;
  std::vector<double> sums;
  for (int k = 0; k <= opt.shells; ++k) {
    double inner = std::ldexp(opt.delta, -(k + 1)), outer = std::ldexp(opt.delta, -k);
    if (outer - inner < floor_width) break;
    double a = p + dir * inner, b = p + dir * outer;
    if (a > b) std::swap(a, b);
    QuadResult r;
    try {
      qo.abs_tol = 1e-300;
      r = integrate(f, a, b, qo);
    } catch (const QuadratureError&) {
      r.value = std::numeric_limits<double>::infinity();
    }
    sums.push_back(r.value);
  }
  detail::decide_from_shells(v, sums, opt.eps_cls, false);
  return v;
}

/// Integrability of a nonnegative f near +inf or -inf, on shells
/// [R 2^k, R 2^(k+1)] with R = opt.delta (or their mirror images).
template <class F>
IntegrabilityVerdict integrability_at_infinity(F&& f, ExtendedReal end, const IntegrabilityOptions& opt = {}) {
  if (end.is_finite()) throw std::invalid_argument("integrability_at_infinity: endpoint must be infinite");
  IntegrabilityVerdict v;
  if (opt.hint) {
    v.method = IntegrabilityVerdict::Method::Symbolic;
    v.estimated_exponent = *opt.hint;
    v.status = *opt.hint < -1.0 ? Integrability::Integrable : Integrability::Divergent;
    return v;
  }
  double dir = end.is_pos_inf() ? 1.0 : -1.0;
  QuadOptions qo;
  qo.abs_tol = 1e-300;
  qo.rel_tol = opt.rel_tol;
  std::vector<double> sums;
  for (int k = 0; k <= opt.shells; ++k) {
    double a = std::ldexp(opt.delta, k), b = std::ldexp(opt.delta, k + 1);
    if (dir < 0) std::swap(a, b), a = -a, b = -b;
    QuadResult r;
    try {
      r = integrate(f, a, b, qo);
    } catch (const QuadratureError&) {
      r.value = std::numeric_limits<double>::infinity();
    }
    sums.push_back(r.value);
  }
  detail::decide_from_shells(v, sums, opt.eps_cls, true);
  return v;
}

}  // namespace gsexp
