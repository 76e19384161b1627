#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyapsample {

/// Raised for evaluations outside a function's domain (sqrt of a negative
/// number, division by an interval containing zero, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace rounding {

// Directed rounding emulated with error-free transformations: the exact
// rounding error of +, *, / and sqrt is recovered (TwoSum / FMA) and the
// result is stepped one ulp outward only when the operation was inexact.

inline constexpr double kInf = std::numeric_limits<double>::infinity();
// Below this magnitude the FMA residual may itself underflow.
inline constexpr double kTiny = 0x1p-969;

inline double down(double x) { return std::nextafter(x, -kInf); }
inline double up(double x) { return std::nextafter(x, kInf); }

inline double two_sum_err(double a, double b, double s) {
  const double bb = s - a;
  return (a - (s - bb)) + (b - bb);
}

inline double add_down(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) return s;
  return two_sum_err(a, b, s) < 0.0 ? down(s) : s;
}
inline double add_up(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) return s;
  return two_sum_err(a, b, s) > 0.0 ? up(s) : s;
}
inline double sub_down(double a, double b) { return add_down(a, -b); }
inline double sub_up(double a, double b) { return add_up(a, -b); }

inline bool underflow_risk(double r, double a, double b) {
  return (r != 0.0 && std::abs(r) < kTiny) || (r == 0.0 && a != 0.0 && b != 0.0);
}

inline double mul_down(double a, double b) {
  const double p = a * b;
  if (!std::isfinite(p)) return p;
  if (underflow_risk(p, a, b)) return down(p);
  return std::fma(a, b, -p) < 0.0 ? down(p) : p;
}
inline double mul_up(double a, double b) {
  const double p = a * b;
  if (!std::isfinite(p)) return p;
  if (underflow_risk(p, a, b)) return up(p);
  return std::fma(a, b, -p) > 0.0 ? up(p) : p;
}

// sign of (a/b - q) equals sign(a - q*b) * sign(b)
inline double div_down(double a, double b) {
  const double q = a / b;
  if (!std::isfinite(q)) return q;
  if (underflow_risk(q, a, 1.0)) return down(q);
  const double r = std::fma(-q, b, a);
  return (b > 0.0 ? r < 0.0 : r > 0.0) ? down(q) : q;
}
inline double div_up(double a, double b) {
  const double q = a / b;
  if (!std::isfinite(q)) return q;
  if (underflow_risk(q, a, 1.0)) return up(q);
  const double r = std::fma(-q, b, a);
  return (b > 0.0 ? r > 0.0 : r < 0.0) ? up(q) : q;
}

inline double sqrt_down(double a) {
  const double s = std::sqrt(a);
  if (s == 0.0 || !std::isfinite(s)) return s;
  return std::fma(-s, s, a) < 0.0 ? down(s) : s;
}
inline double sqrt_up(double a) {
  const double s = std::sqrt(a);
  if (!std::isfinite(s)) return s;
  if (s == 0.0) return a > 0.0 ? up(0.0) : 0.0;
  return std::fma(-s, s, a) > 0.0 ? up(s) : s;
}

}  // namespace rounding

/// Closed interval [lo, hi] with outward-rounded arithmetic.  Every
/// operation returns an enclosure of the exact real image.
class Interval {
 public:
  constexpr Interval() = default;
  constexpr Interval(double v) : lo_(v), hi_(v) {}  // NOLINT(implicit)
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo <= hi)) {
      throw std::invalid_argument("Interval: lower endpoint exceeds upper endpoint (" +
                                  std::to_string(lo) + " > " + std::to_string(hi) + ")");
    }
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double mid() const { return 0.5 * lo_ + 0.5 * hi_; }
  double width() const { return hi_ - lo_; }
  bool contains(double x) const { return lo_ <= x && x <= hi_; }
  bool contains_zero() const { return lo_ <= 0.0 && 0.0 <= hi_; }
  bool subset_of(const Interval& o) const { return o.lo_ <= lo_ && hi_ <= o.hi_; }
  bool is_degenerate() const { return lo_ == hi_; }

  Interval& operator+=(const Interval& o) { return *this = *this + o; }
  Interval& operator-=(const Interval& o) { return *this = *this - o; }
  Interval& operator*=(const Interval& o) { return *this = *this * o; }
  Interval& operator/=(const Interval& o) { return *this = *this / o; }

  friend Interval operator+(const Interval& a, const Interval& b) {
    return checked(rounding::add_down(a.lo_, b.lo_), rounding::add_up(a.hi_, b.hi_));
  }
  friend Interval operator-(const Interval& a, const Interval& b) {
    return checked(rounding::sub_down(a.lo_, b.hi_), rounding::sub_up(a.hi_, b.lo_));
  }
  friend Interval operator-(const Interval& a) { return Interval(-a.hi_, -a.lo_); }

  friend Interval operator*(const Interval& a, const Interval& b) {
    if (a.is_degenerate() && a.lo_ == 0.0) return Interval(0.0);
    if (b.is_degenerate() && b.lo_ == 0.0) return Interval(0.0);
    const double c[4][2] = {{a.lo_, b.lo_}, {a.lo_, b.hi_}, {a.hi_, b.lo_}, {a.hi_, b.hi_}};
    double lo = rounding::kInf;
    double hi = -rounding::kInf;
    for (const auto& p : c) {
      lo = std::min(lo, rounding::mul_down(p[0], p[1]));
      hi = std::max(hi, rounding::mul_up(p[0], p[1]));
    }
    return checked(lo, hi);
  }

  friend Interval operator/(const Interval& a, const Interval& b) {
    if (b.contains_zero()) throw DomainError("interval division by an interval containing zero");
    const double c[4][2] = {{a.lo_, b.lo_}, {a.lo_, b.hi_}, {a.hi_, b.lo_}, {a.hi_, b.hi_}};
    double lo = rounding::kInf;
    double hi = -rounding::kInf;
    for (const auto& p : c) {
      lo = std::min(lo, rounding::div_down(p[0], p[1]));
      hi = std::max(hi, rounding::div_up(p[0], p[1]));
    }
    return checked(lo, hi);
  }

  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

  friend std::ostream& operator<<(std::ostream& os, const Interval& a) {
    return os << '[' << a.lo_ << ", " << a.hi_ << ']';
  }

 private:
  static Interval checked(double lo, double hi) {
    if (std::isnan(lo) || std::isnan(hi)) throw DomainError("interval arithmetic produced NaN");
    return Interval(lo, hi);
  }

  double lo_ = 0.0;
  double hi_ = 0.0;
};

using IntervalVector = std::vector<Interval>;

/// Dense row-major grid of intervals.
class IntervalMatrix {
 public:
  IntervalMatrix() = default;
  IntervalMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, Interval(0.0)) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Interval& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Interval& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Interval> data_;
};

/// Tolerance below zero that sqrt clamps instead of rejecting.
inline constexpr double kSqrtClampTol = 1e-12;

inline Interval sqrt(const Interval& a) {
  if (a.hi() < 0.0 || a.lo() < -kSqrtClampTol) {
    throw DomainError("sqrt of an interval with negative part");
  }
  const double lo = a.lo() < 0.0 ? 0.0 : rounding::sqrt_down(a.lo());
  return Interval(lo, rounding::sqrt_up(a.hi()));
}

inline Interval abs(const Interval& a) {
  if (a.lo() >= 0.0) return a;
  if (a.hi() <= 0.0) return -a;
  return Interval(0.0, std::max(-a.lo(), a.hi()));
}

namespace detail {
// x^k for x >= 0 by repeated squaring with outward rounding.
inline Interval pow_nonneg(Interval x, unsigned k) {
  Interval result(1.0);
  while (k > 0) {
    if (k & 1u) result = result * x;
    k >>= 1u;
    if (k > 0) x = x * x;
  }
  // products of non-negative intervals stay non-negative but rounding may
  // dip the lower endpoint a hair below zero; clamp it.
  return Interval(std::max(0.0, result.lo()), result.hi());
}
}  // namespace detail

/// Tight integer power: even powers map intervals straddling zero to [0, max].
inline Interval pow_int(const Interval& a, int k) {
  if (k < 0) throw std::invalid_argument("pow_int: negative exponent");
  if (k == 0) return Interval(1.0);
  const auto uk = static_cast<unsigned>(k);
  if (a.lo() >= 0.0) return detail::pow_nonneg(a, uk);
  if (a.hi() <= 0.0) {
    const Interval p = detail::pow_nonneg(-a, uk);
    return (k % 2 == 0) ? p : -p;
  }
  if (k % 2 == 0) {
    const double m = std::max(-a.lo(), a.hi());
    return Interval(0.0, detail::pow_nonneg(Interval(m), uk).hi());
  }
  return Interval(-detail::pow_nonneg(Interval(-a.lo()), uk).hi(),
                  detail::pow_nonneg(Interval(a.hi()), uk).hi());
}

/// max(|lo|, |hi|)
inline double magnitude_upper(const Interval& a) { return std::max(std::abs(a.lo()), std::abs(a.hi())); }

inline Interval hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

inline bool overlaps(const Interval& a, const Interval& b) { return a.lo() <= b.hi() && b.lo() <= a.hi(); }

}  // namespace lyapsample
