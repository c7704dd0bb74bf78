#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "gsexp/classify.hpp"
#include "gsexp/philox.hpp"

namespace gsexp {

struct SimConfig {
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  double truncation_radius = 1e6;  // for infinite ends of J
  unsigned threads = 0;            // 0: hardware concurrency
};

enum class PathStatus { Running, HitSingular, ExitedBoundary, Truncated };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::Running: return "running";
    case PathStatus::HitSingular: return "hit_singular";
    case PathStatus::ExitedBoundary: return "exited_boundary";
    case PathStatus::Truncated: return "truncated";
  }
  return "?";
}

struct PathState {
  double y = 0.0;
  double log_z = 0.0;
  PathStatus status = PathStatus::Running;
  double stop_time = std::numeric_limits<double>::infinity();
  double pre_hit_z = std::numeric_limits<double>::quiet_NaN();  // Z just before hitting A
};

/// Z (and Y) at the evaluation times, path-major.
struct SampleMatrix {
  std::vector<double> times;
  std::size_t n_paths = 0;
  std::vector<double> z, y;
  std::vector<PathState> final_state;

  double Z(std::size_t path, std::size_t j) const { return z[path * times.size() + j]; }
  double Y(std::size_t path, std::size_t j) const { return y[path * times.size() + j]; }
  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) c[p] = Z(p, j);
    return c;
  }
  std::size_t count(PathStatus s, std::size_t j) const {
    std::size_t n = 0;
    for (const PathState& st : final_state)
      if (st.status == s && st.stop_time <= times[j]) ++n;
    return n;
  }
};

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double t = 0.0;
};

namespace detail {

// Pairwise summation; the grouping depends only on the length.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline unsigned thread_count(unsigned requested, std::size_t work) {
  unsigned t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, work)));
}

// Runs body(i) for i in [0, n) on contiguous chunks; rethrows the first error.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  unsigned t = thread_count(threads, n);
  if (t == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < t; ++k) {
    std::size_t lo = n * k / t, hi = n * (k + 1) / t;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(m);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// A coefficient that skips the evaluator for constants and for x^c, the
// common shapes in the hot loops. Same bits as CompiledExpr.
class Coefficient {
 public:
  explicit Coefficient(const Expr& e) : f_(e) {
    Expr s = simplify(e);
    if (!e.depends_on_x()) {
      shape_ = Shape::Constant;
      k_ = f_(0.0);
    } else if (s.kind() == NodeKind::Pow && s.arg(0).kind() == NodeKind::Var && s.arg(1).kind() == NodeKind::Number) {
      shape_ = Shape::PowerOfX;
      k_ = s.arg(1).value();
    }
  }
  double operator()(double x) const {
    switch (shape_) {
      case Shape::Constant: return k_;
      case Shape::PowerOfX: {
        Fault fault = Fault::None;
        double v = pow_value(x, k_, fault);
        if (fault == Fault::None && std::isfinite(v)) return v;
        return f_(x);  // throws the detailed fault
      }
      default: return f_(x);
    }
  }

 private:
  enum class Shape { General, Constant, PowerOfX };
  CompiledExpr f_;
  Shape shape_ = Shape::General;
  double k_ = 0.0;
};

inline std::size_t step_count(double T, double dt) { return static_cast<std::size_t>(std::llround(T / dt)); }

inline void check_config(const ProblemSpec& spec, const SimConfig& cfg, double width) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(cfg.horizon >= cfg.dt)) throw std::invalid_argument("horizon must be at least dt");
  if (cfg.n_paths < 1) throw std::invalid_argument("need at least one path");
  if (!(cfg.truncation_radius > std::fabs(spec.x0)))
    throw std::invalid_argument("truncation radius must exceed |x0|");
  if (std::isfinite(width) && cfg.dt > width * width / 100.0)
    throw std::invalid_argument("dt too coarse for the interval: need dt <= (beta - alpha)^2/100");
}

}  // namespace detail

/// At a finite end e of J the exponential is killed (Z = 0) when
/// |x - e| b^2/sigma^2 is not integrable there, i.e. int b^2(Y) dt is
/// infinite on arrival; otherwise it is frozen.
inline bool kills_at_boundary(const ProblemSpec& spec, ExtendedReal e, Side side, const ClassifyOptions& opt = {}) {
  if (!e.is_finite() || is_structurally_zero(spec.b)) return false;
  double p = e.value();
  Expr w = simplify(call(Func::Abs, Expr::variable() - Expr::number(p)) * detail::bsq_over_sigsq(spec));
  CompiledExpr wc(w);
  double delta = detail::shell_radius(p, {}, spec.J);
  if (side == Side::Left) delta = std::min(delta, 0.5 * (p - spec.J.left.value()));
  auto v = detail::expr_integrability(w, wc, p, side, delta, opt);
  return v.divergent();
}

/// Euler-Maruyama for Y with the same Gaussian increments driving log Z.
/// Z = 0 from the first step that crosses (or comes within sigma sqrt(dt)
/// of) a point of A. At a finite end of J the path stops and Z is frozen,
/// or killed when int b^2 diverges there; beyond the truncation radius on
/// an infinite side Z is frozen.
inline SampleMatrix simulate_Z(const ProblemSpec& spec, const SingularSet& A, const SimConfig& cfg,
                               std::vector<double> eval_times) {
  auto [alpha, beta] = effective_interval(spec, A);
  double width = (alpha.location.is_finite() && beta.location.is_finite())
                     ? beta.location.value() - alpha.location.value()
                     : std::numeric_limits<double>::infinity();
  detail::check_config(spec, cfg, width);
  std::sort(eval_times.begin(), eval_times.end());
  std::vector<std::size_t> idx;
  for (double t : eval_times) {
    if (!(t >= 0.0 && t <= cfg.horizon + 1e-12)) throw std::invalid_argument("evaluation time outside [0, horizon]");
    idx.push_back(std::min(detail::step_count(t, cfg.dt), detail::step_count(cfg.horizon, cfg.dt)));
  }
  const std::size_t n_steps = detail::step_count(cfg.horizon, cfg.dt);
  const std::size_t nt = eval_times.size();
  const bool kill_l = kills_at_boundary(spec, spec.J.left, Side::Right);
  const bool kill_r = kills_at_boundary(spec, spec.J.right, Side::Left);
  const double l = spec.J.left.is_finite() ? spec.J.left.value() : -std::numeric_limits<double>::infinity();
  const double r = spec.J.right.is_finite() ? spec.J.right.value() : std::numeric_limits<double>::infinity();
  const double R = cfg.truncation_radius;
  detail::Coefficient mu(spec.mu), sigma(spec.sigma), b(spec.b);
  const double sq = std::sqrt(cfg.dt);

  SampleMatrix out;
  out.times = eval_times;
  out.n_paths = cfg.n_paths;
  out.z.assign(cfg.n_paths * nt, 0.0);
  out.y.assign(cfg.n_paths * nt, 0.0);
  out.final_state.resize(cfg.n_paths);

  detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t path) {
    PhiloxStream rng(cfg.seed, path);
    boost::random::normal_distribution<double> normal;
    PathState st;
    st.y = spec.x0;
    double zval = 1.0;
    bool alive = true;  // Z = exp(log_z) while running
    std::size_t next = 0;
    double* zrow = &out.z[path * nt];
    double* yrow = &out.y[path * nt];
    auto record = [&](std::size_t k) {
      while (next < nt && idx[next] == k) {
        if (alive && st.status == PathStatus::Running) zval = std::exp(st.log_z);
        zrow[next] = zval;
        yrow[next] = st.y;
        ++next;
      }
    };
    record(0);
    for (std::size_t k = 0; k < n_steps && st.status == PathStatus::Running; ++k) {
      double xi = normal(rng);
      double s = sigma(st.y), bb = b(st.y);
      double yn = st.y + mu(st.y) * cfg.dt + s * sq * xi;
      double lz = st.log_z + bb * sq * xi - 0.5 * bb * bb * cfg.dt;
      double t = static_cast<double>(k + 1) * cfg.dt;
      bool hit = false;
      for (double a : A.points)
        if ((st.y - a) * (yn - a) <= 0.0 || std::fabs(yn - a) < std::fabs(s) * sq) hit = true;
      if (hit) {
        st.pre_hit_z = std::exp(st.log_z);
        st.status = PathStatus::HitSingular;
        zval = 0.0;
        alive = false;
      } else if (yn <= l || yn >= r) {
        st.status = PathStatus::ExitedBoundary;
        zval = std::exp(st.log_z);
        if ((yn <= l && kill_l) || (yn >= r && kill_r)) {
          zval = 0.0;
          alive = false;
        }
      } else {
        st.y = yn;
        st.log_z = lz;
        if ((r == std::numeric_limits<double>::infinity() && yn > R) ||
            (l == -std::numeric_limits<double>::infinity() && yn < -R))
          st.status = PathStatus::Truncated;
        zval = std::exp(lz);
      }
      if (st.status != PathStatus::Running) st.stop_time = t;
      record(k + 1);
    }
    // stopped paths keep their value
    while (next < nt) {
      zrow[next] = zval;
      yrow[next] = st.y;
      ++next;
    }
    out.final_state[path] = st;
  });
  return out;
}

inline SampleMatrix simulate_Z(const ProblemSpec& spec, const SimConfig& cfg, std::vector<double> eval_times) {
  return simulate_Z(spec, singular_set(spec), cfg, std::move(eval_times));
}

/// Sample mean and standard error (n - 1 denominator).
inline MCEstimate estimate_mean(const std::vector<double>& samples, double t = 0.0) {
  if (samples.size() < 2) throw std::invalid_argument("estimate_mean: need at least two samples");
  std::size_t n = samples.size();
  double mean = detail::pairwise_sum(samples.data(), n) / static_cast<double>(n);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = (samples[i] - mean) * (samples[i] - mean);
  double var = detail::pairwise_sum(dev.data(), n) / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n)), n, t};
}

inline MCEstimate estimate_mean(const SampleMatrix& m, std::size_t j) { return estimate_mean(m.column(j), m.times[j]); }

enum class MartingaleOutcome { ConsistentWithMartingale, MeanDeficit };

inline const char* to_string(MartingaleOutcome o) {
  return o == MartingaleOutcome::MeanDeficit ? "mean_deficit" : "consistent_with_martingale";
}

struct MartingaleTest {
  MartingaleOutcome outcome = MartingaleOutcome::ConsistentWithMartingale;
  double z_score = 0.0;
  MCEstimate estimate;
  std::size_t n_truncated = 0, n_hit_singular = 0, n_exited = 0;
  std::string caveat;
};

/// One-sided upper 0.001 quantile of the standard normal.
inline constexpr double kMartingaleCritical = 3.090232306167813;

/// H0: E[Z_t] = 1 against E[Z_t] < 1 at level 0.001.
inline MartingaleTest martingale_test(const SampleMatrix& m, std::size_t j) {
  MartingaleTest r;
  r.estimate = estimate_mean(m, j);
  r.n_truncated = m.count(PathStatus::Truncated, j);
  r.n_hit_singular = m.count(PathStatus::HitSingular, j);
  r.n_exited = m.count(PathStatus::ExitedBoundary, j);
  double d = r.estimate.mean - 1.0;
  if (r.estimate.std_error > 0.0)
    r.z_score = d / r.estimate.std_error;
  else
    r.z_score = d < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  r.outcome = r.z_score < -kMartingaleCritical ? MartingaleOutcome::MeanDeficit
                                               : MartingaleOutcome::ConsistentWithMartingale;
  r.caveat = "heavy tails can hide a deficit: not rejecting is evidence, not proof";
  return r;
}

inline MartingaleTest martingale_test(const ProblemSpec& spec, const SimConfig& cfg, double t) {
  return martingale_test(simulate_Z(spec, cfg, {t}), 0);
}

/// E[int_0^tau b^2(W) dt] for Brownian motion from x0 stopped on leaving
/// (a, c), from the Green function of the interval.
inline double bm_occupation_expectation(const Expr& b_sq, double a, double c, double x0,
                                        const ClassifyOptions& opt = {}) {
  if (!(a < x0 && x0 < c)) throw std::invalid_argument("bm_occupation_expectation: need a < x0 < c");
  Expr y = Expr::variable();
  Expr left = simplify((y - Expr::number(a)) * b_sq), right = simplify((Expr::number(c) - y) * b_sq);
  CompiledExpr lf(left), rf(right);
  auto lv = detail::expr_integrability(left, lf, a, Side::Right, 0.5 * (x0 - a), opt);
  auto rv = detail::expr_integrability(right, rf, c, Side::Left, 0.5 * (c - x0), opt);
  if (lv.divergent() || rv.divergent())
    throw DivergentIntegralError("bm_occupation_expectation: weighted integral diverges at " +
                                 std::string(lv.divergent() ? "the left end" : "the right end"));
  if (lv.inconclusive() || rv.inconclusive())
    throw UndecidableError("bm_occupation_expectation", "weighted b^2 near an end");
  QuadOptions o;
  o.abs_tol = 1e-13;
  o.rel_tol = 1e-11;
  double I1 = integrate([&](double v) { return lf(v); }, ExtendedReal(a), ExtendedReal(x0), o).value;
  double I2 = integrate([&](double v) { return rf(v); }, ExtendedReal(x0), ExtendedReal(c), o).value;
  double L = c - a;
  return 2.0 * (c - x0) / L * I1 + 2.0 * (x0 - a) / L * I2;
}

/// Monte Carlo of int_0^tau b_k^2(W) dt for several b^2 at once on shared
/// Brownian paths (left-point sums, exit detected on the grid).
inline std::vector<MCEstimate> bm_occupation_mc(const std::vector<Expr>& b_sq, double a, double c, double x0,
                                                double dt, std::size_t n_paths, std::uint64_t seed,
                                                unsigned threads = 0) {
  if (!(a < x0 && x0 < c)) throw std::invalid_argument("bm_occupation_mc: need a < x0 < c");
  if (!(dt > 0.0) || n_paths < 2) throw std::invalid_argument("bm_occupation_mc: bad dt or path count");
  std::vector<detail::Coefficient> f;
  for (const Expr& e : b_sq) f.emplace_back(e);
  std::size_t K = f.size();
  std::vector<double> acc(n_paths * K, 0.0);
  double sq = std::sqrt(dt);
  detail::parallel_for(n_paths, threads, [&](std::size_t path) {
    PhiloxStream rng(seed, path);
    boost::random::normal_distribution<double> normal;
    double w = x0;
    std::vector<double> sum(K, 0.0);
    while (w > a && w < c) {
      for (std::size_t k = 0; k < K; ++k) sum[k] += f[k](w);
      w += sq * normal(rng);
    }
    for (std::size_t k = 0; k < K; ++k) acc[path * K + k] = sum[k] * dt;
  });
  std::vector<MCEstimate> out;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> col(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) col[p] = acc[p * K + k];
    out.push_back(estimate_mean(col));
  }
  return out;
}

/// Refinement check of: b^2/sigma^2 integrable on (c, d) iff int_0^t b^2(Y)
/// is finite before leaving (c, d). Each path is run on the fine grid dt/4
/// and, with the summed increments, on the coarse grid dt.
struct Det1Report {
  bool integrable = true;                 // classifier: no point of A in (c, d)
  std::vector<double> singular_points;    // points of A in (c, d)
  std::size_t n_paths_used = 0;           // confined paths, or crossing paths
  double ratio = 0.0;                     // fine / coarse statistic
  double threshold = 0.0;
  bool passed = false;
  std::string statistic;
};

inline Det1Report det1_property_check(const ProblemSpec& spec, const SimConfig& cfg, double c, double d) {
  if (!(ExtendedReal(c) > spec.J.left && ExtendedReal(d) < spec.J.right && c < spec.x0 && spec.x0 < d))
    throw std::invalid_argument("det1_property_check: need l < c < x0 < d < r");
  if (!(cfg.dt > 0.0) || !(cfg.horizon >= cfg.dt) || cfg.n_paths < 1)
    throw std::invalid_argument("det1_property_check: bad configuration");
  SingularSet A = singular_set(spec);
  Det1Report rep;
  for (double p : A.points)
    if (c < p && p < d) rep.singular_points.push_back(p);
  rep.integrable = rep.singular_points.empty();

  detail::Coefficient mu(spec.mu), sigma(spec.sigma);
  CompiledExpr b(spec.b);
  auto bsq = [&](double y) {
    double v = 0.0;
    return b.try_eval(y, v) ? v * v : std::numeric_limits<double>::infinity();
  };
  const std::size_t n_coarse = detail::step_count(cfg.horizon, cfg.dt);
  const double h = cfg.dt / 4.0, sh = std::sqrt(h);
  struct PathResult {
    double fine = 0.0, coarse = 0.0;
    bool confined = true, crossed = false;
  };
  std::vector<PathResult> res(cfg.n_paths);
  detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t path) {
    PhiloxStream rng(cfg.seed, path);
    boost::random::normal_distribution<double> normal;
    PathResult pr;
    double yf = spec.x0, yc = spec.x0;
    for (std::size_t k = 0; k < n_coarse; ++k) {
      double sum_xi = 0.0;
      pr.coarse += bsq(yc) * cfg.dt;
      for (int i = 0; i < 4; ++i) {
        double xi = normal(rng);
        sum_xi += xi;
        pr.fine += bsq(yf) * h;
        double yn = yf + mu(yf) * h + sigma(yf) * sh * xi;
        for (double p : rep.singular_points)
          if ((yf - p) * (yn - p) <= 0.0) pr.crossed = true;
        yf = yn;
        if (!(yf > c && yf < d)) pr.confined = false;
      }
      yc = yc + mu(yc) * cfg.dt + sigma(yc) * sh * sum_xi;  // sqrt(dt) * (sum xi)/2
      if (!(yc > c && yc < d)) pr.confined = false;
      if (!pr.confined) break;
    }
    res[path] = pr;
  });
  if (rep.integrable) {
    // ratio of mean accumulated integrals over paths confined to (c, d)
    std::vector<double> f, g;
    for (const auto& pr : res)
      if (pr.confined) {
        f.push_back(pr.fine);
        g.push_back(pr.coarse);
      }
    rep.n_paths_used = f.size();
    double sf = detail::pairwise_sum(f.data(), f.size()), sc = detail::pairwise_sum(g.data(), g.size());
    rep.ratio = sc > 0.0 ? sf / sc : (sf == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    rep.threshold = 0.10;
    rep.statistic = "sum of fine / sum of coarse over confined paths; pass if within 10% of 1";
    rep.passed = rep.n_paths_used > 0 && std::fabs(rep.ratio - 1.0) <= rep.threshold;
  } else {
    // median over crossing paths of the per-path fine / coarse ratio
    std::vector<double> q;
    for (const auto& pr : res)
      if (pr.crossed && pr.coarse > 0.0) q.push_back(pr.fine / pr.coarse);
    rep.n_paths_used = q.size();
    if (!q.empty()) {
      std::nth_element(q.begin(), q.begin() + q.size() / 2, q.end());
      rep.ratio = q[q.size() / 2];
    }
    rep.threshold = 2.0;
    rep.statistic = "median over crossing paths of fine / coarse; pass if above 2";
    rep.passed = rep.n_paths_used > 0 && rep.ratio > rep.threshold;
  }
  return rep;
}

// ---------------------------------------------------------------- text output

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string spec_fingerprint(const ProblemSpec& spec) {
  std::string s = "J=(" + spec.J.left.str() + "," + spec.J.right.str() + ");x0=" + detail::fmt(spec.x0) +
                  ";mu=" + spec.mu.str() + ";sigma=" + spec.sigma.str() + ";b=" + spec.b.str() + ";hints=";
  for (double h : spec.singularity_hints) s += detail::fmt(h) + ",";
  return s;
}

/// Header with the problem fingerprint, then per time: t mean std_error n_truncated
/// n_hit_singular n_exited.
inline std::string format_samples(const ProblemSpec& spec, const SampleMatrix& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "# spec %016llx paths %zu\n",
                static_cast<unsigned long long>(fnv1a(spec_fingerprint(spec))), m.n_paths);
  std::string out = buf;
  for (std::size_t j = 0; j < m.times.size(); ++j) {
    MCEstimate e = estimate_mean(m, j);
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %zu %zu %zu\n", m.times[j], e.mean, e.std_error,
                  m.count(PathStatus::Truncated, j), m.count(PathStatus::HitSingular, j),
                  m.count(PathStatus::ExitedBoundary, j));
    out += buf;
  }
  return out;
}

}  // namespace gsexp
