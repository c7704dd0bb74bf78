#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gsexp/expr.hpp"
#include "gsexp/extended_real.hpp"
#include "gsexp/quad.hpp"

namespace gsexp {

/// M(x) = int_c^x g on (alpha, beta), its exponential density rho = exp(-M),
/// the scale function s = int_c^x rho, and the derived one-sided quantities
///
///   W_right(x) = (s(beta) - s(x)) / rho(x)  = int_x^beta exp(-(M(y)-M(x))) dy
///   W_left(x)  = (s(x) - s(alpha)) / rho(x) = int_alpha^x exp(-(M(y)-M(x))) dy
///   V(x)       = |int_c^x exp(-(M(x)-M(y))) w(y) dy|
///
/// All of them are evaluated from a knot table by local integrals, so that
/// differences of M are never formed from large cumulative values near the
/// ends. Immutable after construction.
class ScaleFunction {
 public:
  struct Options {
    double eps_cls = 0.05;
    double rel_tol = 1e-10;
  };

  ScaleFunction(CompiledExpr g, std::optional<CompiledExpr> w, ExtendedReal alpha, ExtendedReal beta, double c,
                std::vector<double> interior_points, const Options& opt)
      : g_(std::move(g)), w_(std::move(w)), alpha_(alpha), beta_(beta), c_(c), opt_(opt), special_(interior_points) {
    if (!(alpha.value() < c && c < beta.value()))
      throw std::invalid_argument("ScaleFunction: base point must lie inside the interval");
    build_knots(interior_points);
    build_tables();
  }

  ExtendedReal alpha() const { return alpha_; }
  ExtendedReal beta() const { return beta_; }
  double base_point() const { return c_; }
  const std::vector<double>& knots() const { return x_; }

  /// int_c^x g
  double M(double x) const {
    std::size_t j = segment(x);
    return M_[j] + dM(x_[j], x);
  }
  double rho(double x) const { return std::exp(-M(x)); }

  /// s(x) = int_c^x rho
  double s(double x) const {
    std::size_t j = segment(x);
    double part = integrate_exp_neg_dM(x_[j], x);
    return s_[j] + rho_[j] * part;
  }

  /// Integrability of rho near beta (resp. alpha): s(beta) < inf.
  const IntegrabilityVerdict& right_limit_verdict() const { return right_verdict_; }
  const IntegrabilityVerdict& left_limit_verdict() const { return left_verdict_; }

  /// s(beta) and s(alpha) as extended reals; infinite when rho is not
  /// integrable, NaN-free. Inconclusive limits report +-inf.
  ExtendedReal s_right() const { return right_finite_ ? ExtendedReal(s_right_) : ExtendedReal::pos_inf(); }
  ExtendedReal s_left() const { return left_finite_ ? ExtendedReal(s_left_) : ExtendedReal::neg_inf(); }
  bool right_finite() const { return right_finite_; }
  bool left_finite() const { return left_finite_; }

  double W_right(double x) const {
    if (!right_finite_) return std::numeric_limits<double>::infinity();
    if (x >= x_.back()) return tail_right(x);
    std::size_t k = knot_above(x);
    // int_x^{x_k} exp(-(M(y)-M(x))) dy + exp(-(M(x_k)-M(x))) T_k
    double part = offset_integral(x, 1.0, x_[k] - x, -1.0, unit);
    return part + std::exp(-dM(x, x_[k])) * T_[k];
  }

  double W_left(double x) const {
    if (!left_finite_) return std::numeric_limits<double>::infinity();
    if (x <= x_[0]) return tail_left(x);
    std::size_t k = knot_below(x);
    // int_{x_k}^x exp(-(M(y)-M(x))) dy + exp(-(M(x_k)-M(x))) U_k
    double part = offset_integral(x, -1.0, x - x_[k], 1.0, unit);
    return part + std::exp(-dM(x, x_[k])) * U_[k];
  }

  bool has_v() const { return w_.has_value(); }

  double V(double x) const {
    if (!w_) throw std::logic_error("ScaleFunction::V: no weight configured");
    if (x == c_) return 0.0;
    auto w = [&](double y) { return std::fabs((*w_)(y)); };
    if (x > c_) {
      std::size_t k = std::max(knot_below(x), ic_);
      // exp(-(M(x)-M_k)) V_k + int_{x_k}^x exp(-(M(x)-M(y))) w(y) dy
      double part = offset_integral(x, -1.0, x - x_[k], -1.0, w);
      return std::exp(-dM(x_[k], x)) * V_[k] + part;
    }
    std::size_t k = std::min(knot_above(x), ic_);
    // int_x^{x_k} exp(-(M(x)-M(y))) w dy + exp(-(M(x)-M_k)) V_k
    double part = offset_integral(x, 1.0, x_[k] - x, 1.0, w);
    return part + std::exp(-dM(x_[k], x)) * V_[k];
  }

 private:
  static constexpr int kLadderOctaves = 200;
  static constexpr double kMaxAbsM = 600.0;

  // ---- knot construction

  void build_knots(const std::vector<double>& interior) {
    std::vector<double> xs{c_};
    auto ladder = [&](ExtendedReal e, double dir) {
      if (e.is_finite()) {
        double ev = e.value();
        double L = std::fabs(ev - c_);
        double floor = std::max(std::ldexp(detail::ulp_of(ev), 32), std::ldexp(L, -kLadderOctaves));
        for (int j = 1;; ++j) {
          double d = std::ldexp(L, -j);
          if (d < floor) break;
          xs.push_back(ev - dir * d);
        }
      } else {
        double S = std::max(1.0, std::fabs(c_));
        for (int j = 1; j <= kLadderOctaves; ++j) xs.push_back(c_ + dir * S * (std::ldexp(1.0, j) - 1.0));
      }
    };
    ladder(beta_, 1.0);
    ladder(alpha_, -1.0);
    for (double p : interior)
      if (alpha_.value() < p && p < beta_.value()) xs.push_back(p);
    std::sort(xs.begin(), xs.end());
    for (double v : xs) {
      if (!(alpha_.value() < v && v < beta_.value())) continue;
      if (!x_.empty() && v - x_.back() <= 4.0 * detail::ulp_of(v)) {
        if (v == c_) x_.back() = c_;
        continue;
      }
      x_.push_back(v);
    }
    ic_ = static_cast<std::size_t>(std::find(x_.begin(), x_.end(), c_) - x_.begin());
    if (ic_ == x_.size()) throw std::logic_error("ScaleFunction: base point lost while building knots");
  }

  // ---- local integrals

  QuadOptions inner_opts() const {
    QuadOptions o;
    o.abs_tol = 1e-13;
    o.rel_tol = 1e-12;
    return o;
  }
  QuadOptions outer_opts() const {
    QuadOptions o;
    o.abs_tol = 1e-300;
    o.rel_tol = opt_.rel_tol;
    return o;
  }

  // signed int_a^b g
  double dM(double a, double b) const {
    if (a == b) return 0.0;
    auto g = [&](double y) { return g_(y); };
    if (a < b) return integrate(g, a, b, inner_opts()).value;
    return -integrate(g, b, a, inner_opts()).value;
  }

  // int_a^b exp(-int_a^y g) dy  (a < b, or the signed analogue)
  double integrate_exp_neg_dM(double a, double b) const {
    if (a == b) return 0.0;
    double lo = std::min(a, b), hi = std::max(a, b);
    auto f = [&](double y) { return std::exp(-dM(a, y)); };
    double v = integrate(f, lo, hi, outer_opts()).value;
    return a < b ? v : -v;
  }

  // int_a^b exp(-int_y^b g) w(y) dy, a < b
  double integrate_weighted_to(double a, double b) const {
    return offset_integral(b, -1.0, b - a, -1.0, [&](double y) { return std::fabs((*w_)(y)); });
  }

  // int_a^b exp(int_a^y g) w(y) dy, a < b
  double integrate_weighted_from(double a, double b) const {
    return offset_integral(a, 1.0, b - a, 1.0, [&](double y) { return std::fabs((*w_)(y)); });
  }

  static double unit(double) { return 1.0; }

  // g at y, or one ulp back toward x when y is a point where g is undefined
  // (a node rounded onto a singular end of the range)
  double eval_near(double y, double x) const {
    double v = 0.0;
    if (g_.try_eval(y, v)) return v;
    double y2 = std::nextafter(y, x);
    if (y2 != x && g_.try_eval(y2, v)) return v;
    return g_(y);
  }
  template <class Wt>
  static double near(Wt& weight, double y, double x) {
    try {
      return weight(y);
    } catch (const DomainFault&) {
      double y2 = std::nextafter(y, x);
      if (y2 == x) throw;
      return weight(y2);
    }
  }

  // x + dir*u, never rounded back onto x itself (x may be a singular point)
  static double step(double x, double dir, double u) {
    double y = x + dir * u;
    return (u > 0.0 && y == x) ? std::nextafter(x, dir * std::numeric_limits<double>::infinity()) : y;
  }

  // The offset t = |y - x| is the integration variable so that short
  // distances far from the origin keep full precision.
  // Relative resolution of g on [lo, hi] when its argument is only known to
  // the ulp of a finite endpoint nearby.
  double argument_noise(double lo, double hi) const {
    double r = 0.0;
    for (const ExtendedReal& e : {alpha_, beta_}) {
      if (!e.is_finite()) continue;
      double d = std::min(std::fabs(lo - e.value()), std::fabs(hi - e.value()));
      if (d > 0.0) r = std::max(r, std::ldexp(detail::ulp_of(e.value()), 6) / d);
    }
    return r;
  }

  double offset_dM(double x, double t, double dir) const {
    if (t == 0.0) return 0.0;
    try {
      // Near a singular point g is only known to the rounding of x + u, so
      // a capped best-effort inner integral is as good as it gets.
      QuadOptions o = inner_opts();
      o.max_panels = 4096;
      o.best_effort = true;
      o.rel_tol = std::max(o.rel_tol, argument_noise(std::min(x, step(x, dir, t)), std::max(x, step(x, dir, t))));
      return integrate([&](double u) { return eval_near(step(x, dir, u), x); }, 0.0, t, o).value;
    } catch (const QuadratureError&) {
      // the inner integral runs into a non-integrable point; it diverges
      // with the sign of g there
      double v = 0.0;
      if (g_.try_eval(step(x, dir, t), v) && v != 0.0) return std::copysign(std::numeric_limits<double>::infinity(), v);
      throw;
    }
  }

  // int_0^T exp(sgn int_0^t g(x + dir s) ds) weight(x + dir t) dt. When the
  // integrand decays from t = 0 on a scale l much shorter than T the range
  // is mapped from (0, inf) in units of l and cut at T, so that the peak at
  // t = 0 is not stepped over.
  template <class Wt>
  double offset_integral(double x, double dir, double T, double sgn, Wt&& weight) const {
    if (!(T > 0.0)) return 0.0;
    double l = 1.0;
    bool decays = false;
    double g0 = 0.0;
    if (g_.try_eval(step(x, dir, std::ldexp(detail::ulp_of(x), 8)), g0) && sgn * g0 < 0.0 && std::isfinite(g0)) {
      l = 1.0 / std::fabs(g0);
      decays = true;
    }
    QuadOptions o = outer_opts();
    o.rel_tol = std::max(o.rel_tol, argument_noise(x, x));
    if (std::isfinite(T) && !(decays && T > 1e4 * l)) {
      auto f = [&](double t) { return std::exp(sgn * offset_dM(x, t, dir)) * near(weight, step(x, dir, t), x); };
      return integrate(f, ExtendedReal(0.0), ExtendedReal(T), o).value;
    }
    auto f = [&](double tau) {
      double t = l * tau;
      if (t > T) return 0.0;
      return l * std::exp(sgn * offset_dM(x, t, dir)) * near(weight, step(x, dir, t), x);
    };
    return integrate(f, ExtendedReal(0.0), ExtendedReal::pos_inf(), o).value;
  }

  // Nearest knot above x (resp. below) that is not so close that the
  // integral between them is dominated by rounding of the abscissae.
  std::size_t knot_above(double x) const {
    std::size_t k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    if (k + 1 < x_.size() && k > 0 && x_[k] - x < 0.25 * (x_[k] - x_[k - 1])) ++k;
    return std::min(k, x_.size() - 1);
  }
  std::size_t knot_below(double x) const {
    std::size_t k = segment(x);
    if (k > 0 && k + 1 < x_.size() && x - x_[k] < 0.25 * (x_[k + 1] - x_[k])) --k;
    return k;
  }

  std::size_t segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    if (it == x_.begin()) return 0;
    return static_cast<std::size_t>(it - x_.begin()) - 1;
  }

  // ---- tables

  // Walks outward from c and drops knots past the point where |M| leaves
  // the range in which exp(-M) is representable, or where g stops being
  // integrable in double precision.
  void truncate_ladders() {
    std::size_t n = x_.size();
    std::vector<double> d(n, 0.0), m(n, 0.0);
    std::size_t hi = n - 1, lo = 0;
    for (std::size_t j = ic_; j + 1 < n; ++j) {
      double step;
      try {
        step = dM(x_[j], x_[j + 1]);
      } catch (const QuadratureError&) {
        hi = j;
        break;
      }
      if (!std::isfinite(step) || std::fabs(m[j] + step) > kMaxAbsM) {
        hi = j;
        break;
      }
      d[j] = step;
      m[j + 1] = m[j] + step;
    }
    for (std::size_t j = ic_; j-- > 0;) {
      double step;
      try {
        step = dM(x_[j], x_[j + 1]);
      } catch (const QuadratureError&) {
        lo = j + 1;
        break;
      }
      if (!std::isfinite(step) || std::fabs(m[j + 1] - step) > kMaxAbsM) {
        lo = j + 1;
        break;
      }
      d[j] = step;
      m[j] = m[j + 1] - step;
    }
    truncated_right_ = hi + 1 < n;
    truncated_left_ = lo > 0;
    x_.assign(x_.begin() + lo, x_.begin() + hi + 1);
    dM_.assign(d.begin() + lo, d.begin() + hi + 1);
    M_.assign(m.begin() + lo, m.begin() + hi + 1);
    dM_.back() = 0.0;
    ic_ -= lo;
  }

  void build_tables() {
    truncate_ladders();
    std::size_t n = x_.size();
    A_.assign(n, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
      A_[j] = guarded([&] { return integrate_exp_neg_dM(x_[j], x_[j + 1]); });
    }
    rho_.resize(n);
    for (std::size_t j = 0; j < n; ++j) rho_[j] = std::exp(-M_[j]);
    s_.assign(n, 0.0);
    for (std::size_t j = ic_; j + 1 < n; ++j) s_[j + 1] = s_[j] + rho_[j] * A_[j];
    for (std::size_t j = ic_; j-- > 0;) s_[j] = s_[j + 1] - rho_[j] * A_[j];

    classify_limits();

    if (right_finite_) {
      T_.assign(n, 0.0);
      T_[n - 1] = right_tail_;
      for (std::size_t j = n - 1; j-- > 0;) T_[j] = A_[j] + std::exp(-dM_[j]) * T_[j + 1];
      s_right_ = s_[n - 1] + rho_[n - 1] * T_[n - 1];
    }
    if (left_finite_) {
      U_.assign(n, 0.0);
      U_[0] = left_tail_;
      for (std::size_t j = 0; j + 1 < n; ++j) U_[j + 1] = std::exp(dM_[j]) * (A_[j] + U_[j]);
      s_left_ = s_[0] - rho_[0] * U_[0];
    }
    if (w_) {
      V_.assign(n, 0.0);
      for (std::size_t j = ic_; j + 1 < n; ++j) {
        double b = guarded([&] { return integrate_weighted_to(x_[j], x_[j + 1]); });
        V_[j + 1] = std::exp(-dM_[j]) * V_[j] + b;
      }
      for (std::size_t j = ic_; j-- > 0;) {
        double b = guarded([&] { return integrate_weighted_from(x_[j], x_[j + 1]); });
        V_[j] = b + std::exp(dM_[j]) * V_[j + 1];
      }
    }
  }

  // Geometric extrapolation of int rho beyond the outermost knots, from the
  // ratio of the last two segment masses (the ladder is dyadic there).
  static double geometric_tail(double last, double prev) {
    if (!(last > 0.0) || !(prev > 0.0)) return 0.0;
    double q = last / prev;
    if (!(q < 0.999)) return 0.0;
    return last * q / (1.0 - q);
  }

  void classify_limits() {
    std::size_t n = x_.size();
    auto rho_f = [&](double x) { return rho(x); };
    IntegrabilityOptions io;
    io.eps_cls = opt_.eps_cls;
    io.rel_tol = 1e-9;
    // right end
    if (beta_.is_finite()) {
      io.delta = shell_delta(beta_.value());
      right_verdict_ = local_integrability(rho_f, beta_.value(), Side::Left, io);
    } else {
      io.delta = far_radius();
      right_verdict_ = integrability_at_infinity(rho_f, beta_, io);
    }
    if (alpha_.is_finite()) {
      io.delta = shell_delta(alpha_.value());
      left_verdict_ = local_integrability(rho_f, alpha_.value(), Side::Right, io);
    } else {
      io.delta = far_radius();
      left_verdict_ = integrability_at_infinity(rho_f, alpha_, io);
    }
    right_finite_ = right_verdict_.integrable();
    left_finite_ = left_verdict_.integrable();
    if (right_finite_) {
      if (truncated_right_ || n < 3)
        right_tail_ = direct_right(x_[n - 1]);
      else
        right_tail_ = geometric_tail(rho_[n - 2] * A_[n - 2], rho_[n - 3] * A_[n - 3]) / rho_[n - 1];
    }
    if (left_finite_) {
      if (truncated_left_ || n < 3)
        left_tail_ = direct_left(x_[0]);
      else
        left_tail_ = geometric_tail(rho_[0] * A_[0], rho_[1] * A_[1]) / rho_[0];
    }
  }

  template <class F>
  static double guarded(F&& f) {
    try {
      return f();
    } catch (const QuadratureError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // Beyond the outermost knots the tables carry no information; integrate
  // exp(-int_x^y g) from x to the endpoint directly.
  double direct_right(double x) const {
    double T = beta_.is_finite() ? beta_.value() - x : std::numeric_limits<double>::infinity();
    return guarded([&] { return offset_integral(x, 1.0, T, -1.0, unit); });
  }
  double direct_left(double x) const {
    double T = alpha_.is_finite() ? x - alpha_.value() : std::numeric_limits<double>::infinity();
    return guarded([&] { return offset_integral(x, -1.0, T, 1.0, unit); });
  }
  // Inside the last knot of a finite endpoint e a single offset integral to e
  // would need inner integrals resolved down to the ulp of e. Walk a dyadic
  // ladder from x toward e instead, each cell with its own base point, and
  // close it geometrically once cells reach the abscissa noise floor.
  double local_ladder(double x, double e, double dir, double sgn) const {
    double d = std::abs(e - x);
    double floor = std::ldexp(detail::ulp_of(e), 20);
    double total = 0.0, expo = 0.0, prev = 0.0, last = 0.0;
    double a = x;
    for (int j = 0; j < 60; ++j) {
      double w = std::ldexp(d, -(j + 1));
      double b = e - dir * w;
      double width = std::abs(b - a);
      double m = std::exp(expo) * offset_integral(a, dir, width, sgn, unit);
      total += m;
      prev = last;
      last = m;
      if (w < floor || !std::isfinite(total)) break;
      expo += sgn * offset_dM(a, width, dir);
      if (!(expo < 700.0)) return std::numeric_limits<double>::infinity();
      a = b;
    }
    return total + geometric_tail(last, prev);
  }

  double tail_right(double x) const {
    if (x <= x_.back()) return T_.back();
    if (beta_.is_finite()) return guarded([&] { return local_ladder(x, beta_.value(), 1.0, -1.0); });
    return direct_right(x);
  }
  double tail_left(double x) const {
    if (x >= x_[0]) return U_[0];
    if (alpha_.is_finite()) return guarded([&] { return local_ladder(x, alpha_.value(), -1.0, 1.0); });
    return direct_left(x);
  }

 public:
  /// Outer shell radius used for integrability tests at a finite endpoint.
  double shell_delta(double e) const {
    double d = 1.0;
    if (alpha_.is_finite() && beta_.is_finite()) d = std::min(d, 0.5 * (beta_.value() - alpha_.value()));
    for (double p : special_)
      if (p != e) d = std::min(d, 0.5 * std::fabs(p - e));
    return d;
  }

  /// Starting radius for integrability tests at an infinite endpoint.
  double far_radius() const {
    double r = std::max(1.0, std::fabs(c_));
    if (alpha_.is_finite()) r = std::max(r, std::fabs(alpha_.value()));
    if (beta_.is_finite()) r = std::max(r, std::fabs(beta_.value()));
    for (double p : special_) r = std::max(r, std::fabs(p));
    return 2.0 * r;
  }

 private:
  CompiledExpr g_;
  std::optional<CompiledExpr> w_;
  ExtendedReal alpha_, beta_;
  double c_;
  Options opt_;
  std::vector<double> special_;  // interior points that shells must not reach

  std::vector<double> x_;
  std::size_t ic_ = 0;
  std::vector<double> dM_, A_, M_, rho_, s_, T_, U_, V_;
  IntegrabilityVerdict right_verdict_, left_verdict_;
  bool right_finite_ = false, left_finite_ = false;
  bool truncated_right_ = false, truncated_left_ = false;
  double right_tail_ = 0.0, left_tail_ = 0.0;
  double s_right_ = 0.0, s_left_ = 0.0;
};

}  // namespace gsexp
