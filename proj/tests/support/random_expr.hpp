#pragma once

#include <random>
#include <string>

#include "gsexp/expr.hpp"

namespace gsexp::testing {

// Random well-formed expression trees over the full grammar.
class RandomExpr {
 public:
  explicit RandomExpr(std::uint64_t seed) : rng_(seed) {}

  Expr operator()(int depth = 4) { return gen(depth); }

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  std::mt19937_64& rng() { return rng_; }

 private:
  Expr leaf() {
    if (pick(2) == 0) return Expr::variable();
    switch (pick(3)) {
      case 0: return Expr::number(static_cast<double>(pick(7) - 3));
      case 1: return Expr::number(uniform(-5.0, 5.0));
      default: return Expr::number(std::ldexp(uniform(0.5, 1.0), pick(40) - 20));
    }
  }

  Expr gen(int depth) {
    if (depth <= 0 || pick(5) == 0) return leaf();
    switch (pick(7)) {
      case 0: return gen(depth - 1) + gen(depth - 1);
      case 1: return gen(depth - 1) - gen(depth - 1);
      case 2: return gen(depth - 1) * gen(depth - 1);
      case 3: return gen(depth - 1) / gen(depth - 1);
      case 4: {
        Expr ex = pick(2) ? Expr::number(static_cast<double>(pick(5) - 2)) : gen(depth - 2);
        return power(gen(depth - 1), ex);
      }
      case 5: return -gen(depth - 1);
      default: {
        static constexpr Func fs[] = {Func::Exp, Func::Log, Func::Sqrt, Func::Abs, Func::Sign, Func::Pow};
        Func f = fs[pick(6)];
        if (f == Func::Pow) return Expr::call(f, {gen(depth - 1), gen(depth - 2)});
        return call(f, gen(depth - 1));
      }
    }
  }

  std::mt19937_64 rng_;
};

// Evaluates e at x; returns false on a domain fault.
inline bool eval_ok(const Expr& e, double x, double& out) {
  try {
    out = e.eval(x);
    return true;
  } catch (const DomainFault&) {
    return false;
  }
}

}  // namespace gsexp::testing
