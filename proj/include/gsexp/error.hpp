#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

namespace gsexp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed coefficient expression. `offset()` is the 1-based character position.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error("parse error at offset " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation of an expression at a point where it is undefined.
class DomainFault : public Error {
 public:
  DomainFault(std::string subexpression, double x, const std::string& reason)
      : Error("domain fault in '" + subexpression + "' at x = " + format_x(x) + ": " + reason),
        subexpression_(std::move(subexpression)),
        x_(x) {}

  const std::string& subexpression() const noexcept { return subexpression_; }
  double x() const noexcept { return x_; }

 private:
  static std::string format_x(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }

  std::string subexpression_;
  double x_;
};

/// Adaptive quadrature ran out of its panel budget.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// A numerical integrability decision landed in the inconclusive band.
class UndecidableError : public Error {
 public:
  explicit UndecidableError(std::string condition, const std::string& detail = {})
      : Error("undecidable integrability in condition '" + condition + "'" +
              (detail.empty() ? std::string() : ": " + detail)),
        condition_(std::move(condition)) {}

  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

/// Invalid problem data (interval, start point, Engelbert-Schmidt conditions, ...).
class ProblemError : public Error {
 public:
  enum class Kind {
    Invalid,
    X0OutsideInterval,
    SigmaZeroAtX0,
    EngelbertSchmidt,
    X0InSingularSet,
    AccumulatingSingularities,
  };

  ProblemError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Two provably equivalent numerical routes disagreed.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// An expectation formula needs an integral that does not converge.
class DivergentIntegralError : public Error {
 public:
  using Error::Error;
};

}  // namespace gsexp
