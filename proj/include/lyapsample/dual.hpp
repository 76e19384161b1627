#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "lyapsample/interval.hpp"

namespace lyapsample {

/// Largest state dimension supported by the second-order carrier.
inline constexpr int kMaxDim = 8;

// ---------------------------------------------------------------------------
// Scalar primitives for double.  Interval overloads live in interval.hpp.

inline double sqrt(double x) {
  if (x < 0.0) {
    if (x < -kSqrtClampTol) throw DomainError("sqrt of a negative number");
    x = 0.0;
  }
  return std::sqrt(x);
}

inline double abs(double x) { return std::abs(x); }

inline double pow_int(double x, int k) {
  if (k < 0) throw std::invalid_argument("pow_int: negative exponent");
  double r = 1.0;
  double b = x;
  auto e = static_cast<unsigned>(k);
  while (e > 0) {
    if (e & 1u) r *= b;
    e >>= 1u;
    if (e > 0) b *= b;
  }
  return r;
}

inline double checked_div(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}
inline Interval checked_div(const Interval& a, const Interval& b) { return a / b; }

/// +1 / -1 when the sign is certain, 0 when the value may be zero.
inline int certain_sign(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }
inline int certain_sign(const Interval& x) { return x.lo() > 0.0 ? 1 : (x.hi() < 0.0 ? -1 : 0); }

inline double constant_like(double, double c) { return c; }
inline Interval constant_like(const Interval&, double c) { return Interval(c); }

// ---------------------------------------------------------------------------

/// Value, gradient and Hessian of a scalar with respect to n seed variables.
/// The Hessian is stored as its packed upper triangle, so it is symmetric by
/// construction.
template <class T>
class Dual2 {
 public:
  static constexpr int kPacked = kMaxDim * (kMaxDim + 1) / 2;

  Dual2() = default;

  static Dual2 constant(T v, int n) {
    Dual2 d;
    d.n_ = n;
    d.v_ = v;
    d.clear_derivatives();
    return d;
  }

  static Dual2 variable(T v, int index, int n) {
    Dual2 d = constant(v, n);
    d.g_[static_cast<std::size_t>(index)] = T(1.0);
    return d;
  }

  int dim() const { return n_; }
  const T& value() const { return v_; }
  const T& grad(int i) const { return g_[static_cast<std::size_t>(i)]; }
  const T& hess(int i, int j) const { return h_[idx(i, j)]; }

  T& value() { return v_; }
  T& grad(int i) { return g_[static_cast<std::size_t>(i)]; }
  T& hess(int i, int j) { return h_[idx(i, j)]; }

  /// Generic chain rule for y = phi(u) given phi(u.v), phi'(u.v), phi''(u.v).
  static Dual2 chain(const Dual2& u, const T& f0, const T& f1, const T& f2) {
    Dual2 r;
    r.n_ = u.n_;
    r.v_ = f0;
    for (int i = 0; i < u.n_; ++i) r.g_[i] = f1 * u.g_[i];
    for (int i = 0; i < u.n_; ++i) {
      for (int j = i; j < u.n_; ++j) {
        r.h_[idx_n(i, j, u.n_)] = f1 * u.h_[idx_n(i, j, u.n_)] + f2 * (u.g_[i] * u.g_[j]);
      }
    }
    return r;
  }

  friend Dual2 operator+(const Dual2& a, const Dual2& b) {
    Dual2 r;
    r.n_ = a.n_;
    r.v_ = a.v_ + b.v_;
    for (int i = 0; i < a.n_; ++i) r.g_[i] = a.g_[i] + b.g_[i];
    for (int k = 0; k < packed(a.n_); ++k) r.h_[k] = a.h_[k] + b.h_[k];
    return r;
  }

  friend Dual2 operator-(const Dual2& a, const Dual2& b) {
    Dual2 r;
    r.n_ = a.n_;
    r.v_ = a.v_ - b.v_;
    for (int i = 0; i < a.n_; ++i) r.g_[i] = a.g_[i] - b.g_[i];
    for (int k = 0; k < packed(a.n_); ++k) r.h_[k] = a.h_[k] - b.h_[k];
    return r;
  }

  friend Dual2 operator-(const Dual2& a) {
    Dual2 r;
    r.n_ = a.n_;
    r.v_ = -a.v_;
    for (int i = 0; i < a.n_; ++i) r.g_[i] = -a.g_[i];
    for (int k = 0; k < packed(a.n_); ++k) r.h_[k] = -a.h_[k];
    return r;
  }

  friend Dual2 operator*(const Dual2& a, const Dual2& b) {
    Dual2 r;
    const int n = a.n_;
    r.n_ = n;
    r.v_ = a.v_ * b.v_;
    for (int i = 0; i < n; ++i) r.g_[i] = a.g_[i] * b.v_ + a.v_ * b.g_[i];
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const auto k = idx_n(i, j, n);
        r.h_[k] = a.h_[k] * b.v_ + a.v_ * b.h_[k] + a.g_[i] * b.g_[j] + a.g_[j] * b.g_[i];
      }
    }
    return r;
  }

  friend Dual2 operator*(const Dual2& a, const T& s) {
    Dual2 r;
    r.n_ = a.n_;
    r.v_ = a.v_ * s;
    for (int i = 0; i < a.n_; ++i) r.g_[i] = a.g_[i] * s;
    for (int k = 0; k < packed(a.n_); ++k) r.h_[k] = a.h_[k] * s;
    return r;
  }
  friend Dual2 operator*(const T& s, const Dual2& a) { return a * s; }

  friend Dual2 operator/(const Dual2& a, const Dual2& b) {
    // 1/v: first derivative -1/v^2, second 2/v^3
    const T inv = checked_div(T(1.0), b.v_);
    const T inv2 = inv * inv;
    const Dual2 recip = chain(b, inv, -inv2, T(2.0) * inv2 * inv);
    return a * recip;
  }

  friend Dual2 sqrt(const Dual2& u) {
    const T s = sqrt(u.v_);
    const T f1 = checked_div(T(0.5), s);
    const T f2 = -checked_div(f1, T(2.0) * u.v_);
    return chain(u, s, f1, f2);
  }

  friend Dual2 pow_int(const Dual2& u, int k) {
    if (k == 0) return constant(T(1.0), u.n_);
    if (k == 1) return u;
    const T f0 = pow_int(u.v_, k);
    const T f1 = T(static_cast<double>(k)) * pow_int(u.v_, k - 1);
    const T f2 = T(static_cast<double>(k) * (k - 1)) * pow_int(u.v_, k - 2);
    return chain(u, f0, f1, f2);
  }

  friend Dual2 abs(const Dual2& u) {
    const int s = certain_sign(u.v_);
    if (s == 0) throw DomainError("abs is not differentiable at zero");
    return s > 0 ? u : -u;
  }

  friend int certain_sign(const Dual2& u) { return certain_sign(u.v_); }
  friend Dual2 constant_like(const Dual2& proto, double c) { return constant(T(c), proto.n_); }

 private:
  static constexpr int packed(int n) { return n * (n + 1) / 2; }
  static std::size_t idx_n(int i, int j, int n) {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i * (2 * n - i + 1) / 2 + (j - i));
  }
  std::size_t idx(int i, int j) const { return idx_n(i, j, n_); }

  void clear_derivatives() {
    for (int i = 0; i < n_; ++i) g_[static_cast<std::size_t>(i)] = T(0.0);
    for (int k = 0; k < packed(n_); ++k) h_[static_cast<std::size_t>(k)] = T(0.0);
  }

  int n_ = 0;
  T v_{};
  std::array<T, kMaxDim> g_{};
  std::array<T, kPacked> h_{};
};

/// First-order tangent (value plus one directional derivative) over any
/// scalar type, including Dual2.  Nesting Tangent<Dual2<Interval>> yields
/// second-order enclosures of a directional derivative such as dW/dt.
template <class T>
struct Tangent {
  T v;
  T d;

  static Tangent chain(const Tangent& u, const T& f0, const T& f1) { return {f0, f1 * u.d}; }

  friend Tangent operator+(const Tangent& a, const Tangent& b) { return {a.v + b.v, a.d + b.d}; }
  friend Tangent operator-(const Tangent& a, const Tangent& b) { return {a.v - b.v, a.d - b.d}; }
  friend Tangent operator-(const Tangent& a) { return {-a.v, -a.d}; }
  friend Tangent operator*(const Tangent& a, const Tangent& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Tangent operator/(const Tangent& a, const Tangent& b) {
    const T inv = checked_div(constant_like(b.v, 1.0), b.v);
    const T q = a.v * inv;
    return {q, (a.d - q * b.d) * inv};
  }
  friend Tangent sqrt(const Tangent& u) {
    const T s = sqrt(u.v);
    return chain(u, s, checked_div(constant_like(s, 0.5), s));
  }
  friend Tangent pow_int(const Tangent& u, int k) {
    if (k == 0) return {constant_like(u.v, 1.0), constant_like(u.v, 0.0)};
    if (k == 1) return u;
    return chain(u, pow_int(u.v, k), constant_like(u.v, static_cast<double>(k)) * pow_int(u.v, k - 1));
  }
  friend Tangent abs(const Tangent& u) {
    const int s = certain_sign(u.v);
    if (s == 0) throw DomainError("abs is not differentiable at zero");
    return s > 0 ? u : -u;
  }
  friend int certain_sign(const Tangent& u) { return certain_sign(u.v); }
  friend Tangent constant_like(const Tangent& proto, double c) {
    return {constant_like(proto.v, c), constant_like(proto.v, 0.0)};
  }
};

template <class T>
inline Dual2<T> checked_div(const Dual2<T>& a, const Dual2<T>& b) {
  return a / b;
}
template <class T>
inline Tangent<T> checked_div(const Tangent<T>& a, const Tangent<T>& b) {
  return a / b;
}

}  // namespace lyapsample
