#pragma once

#include <cmath>
#include <compare>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace gsexp {

/// A double that may also be -inf or +inf, never NaN.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;

  // NOLINTNEXTLINE(google-explicit-constructor)
  ExtendedReal(double v) : v_(v) {
    if (std::isnan(v)) throw std::domain_error("ExtendedReal: NaN is not an extended real");
  }

  static ExtendedReal pos_inf() { return ExtendedReal(std::numeric_limits<double>::infinity()); }
  static ExtendedReal neg_inf() { return ExtendedReal(-std::numeric_limits<double>::infinity()); }

  bool is_finite() const { return std::isfinite(v_); }
  bool is_pos_inf() const { return v_ == std::numeric_limits<double>::infinity(); }
  bool is_neg_inf() const { return v_ == -std::numeric_limits<double>::infinity(); }

  double value() const { return v_; }

  friend bool operator==(const ExtendedReal&, const ExtendedReal&) = default;
  friend std::strong_ordering operator<=>(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.v_ < b.v_) return std::strong_ordering::less;
    if (a.v_ > b.v_) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  ExtendedReal operator-() const { return ExtendedReal(-v_); }

  friend ExtendedReal operator+(const ExtendedReal& a, const ExtendedReal& b) {
    if ((a.is_pos_inf() && b.is_neg_inf()) || (a.is_neg_inf() && b.is_pos_inf()))
      throw std::domain_error("ExtendedReal: inf - inf is undefined");
    return ExtendedReal(a.v_ + b.v_);
  }
  friend ExtendedReal operator-(const ExtendedReal& a, const ExtendedReal& b) { return a + (-b); }
  friend ExtendedReal operator*(const ExtendedReal& a, const ExtendedReal& b) {
    if ((!a.is_finite() && b.v_ == 0.0) || (!b.is_finite() && a.v_ == 0.0))
      throw std::domain_error("ExtendedReal: 0 * inf is undefined");
    return ExtendedReal(a.v_ * b.v_);
  }

  /// "-inf", "+inf" or the value with 17 significant digits.
  std::string str() const {
    if (is_pos_inf()) return "+inf";
    if (is_neg_inf()) return "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v_);
    return buf;
  }

 private:
  double v_ = 0.0;
};

}  // namespace gsexp
