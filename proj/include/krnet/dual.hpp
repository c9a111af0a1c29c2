#pragma once

#include <cmath>
#include <ostream>

namespace krnet::ad {

/// Truncated second-order Taylor coefficient along one spatial direction v:
/// value = f(x), first = v.grad f, second = v^T H v.
struct DualScalar {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;

  constexpr DualScalar() = default;
  constexpr DualScalar(double v) : value(v) {}  // NOLINT: constants lift implicitly
  constexpr DualScalar(double v, double d1, double d2) : value(v), first(d1), second(d2) {}

  /// Independent variable seeded with direction component `dir`.
  static constexpr DualScalar variable(double v, double dir) { return {v, dir, 0.0}; }

  DualScalar& operator+=(const DualScalar& o) {
    value += o.value;
    first += o.first;
    second += o.second;
    return *this;
  }
  DualScalar& operator-=(const DualScalar& o) {
    value -= o.value;
    first -= o.first;
    second -= o.second;
    return *this;
  }
  DualScalar& operator*=(const DualScalar& o);
  DualScalar& operator/=(const DualScalar& o);
};

constexpr DualScalar operator-(const DualScalar& a) { return {-a.value, -a.first, -a.second}; }

constexpr DualScalar operator+(const DualScalar& a, const DualScalar& b) {
  return {a.value + b.value, a.first + b.first, a.second + b.second};
}
constexpr DualScalar operator-(const DualScalar& a, const DualScalar& b) {
  return {a.value - b.value, a.first - b.first, a.second - b.second};
}
constexpr DualScalar operator*(const DualScalar& a, const DualScalar& b) {
  return {a.value * b.value, a.first * b.value + a.value * b.first,
          a.second * b.value + 2.0 * a.first * b.first + a.value * b.second};
}

/// Applies a scalar function given g(v), g'(v), g''(v).
constexpr DualScalar chain(const DualScalar& a, double g0, double g1, double g2) {
  return {g0, g1 * a.first, g2 * a.first * a.first + g1 * a.second};
}

inline DualScalar reciprocal(const DualScalar& a) {
  const double inv = 1.0 / a.value;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline DualScalar operator/(const DualScalar& a, const DualScalar& b) { return a * reciprocal(b); }

inline DualScalar& DualScalar::operator*=(const DualScalar& o) { return *this = *this * o; }
inline DualScalar& DualScalar::operator/=(const DualScalar& o) { return *this = *this / o; }

inline DualScalar exp(const DualScalar& a) {
  const double e = std::exp(a.value);
  return chain(a, e, e, e);
}
inline DualScalar log(const DualScalar& a) {
  const double inv = 1.0 / a.value;
  return chain(a, std::log(a.value), inv, -inv * inv);
}
inline DualScalar sin(const DualScalar& a) {
  const double s = std::sin(a.value);
  return chain(a, s, std::cos(a.value), -s);
}
inline DualScalar cos(const DualScalar& a) {
  const double c = std::cos(a.value);
  return chain(a, c, -std::sin(a.value), -c);
}
inline DualScalar tanh(const DualScalar& a) {
  const double t = std::tanh(a.value);
  const double d = 1.0 - t * t;
  return chain(a, t, d, -2.0 * t * d);
}
inline DualScalar sqrt(const DualScalar& a) {
  const double r = std::sqrt(a.value);
  return chain(a, r, 0.5 / r, -0.25 / (r * a.value));
}

inline bool isfinite(const DualScalar& a) {
  return std::isfinite(a.value) && std::isfinite(a.first) && std::isfinite(a.second);
}

inline std::ostream& operator<<(std::ostream& os, const DualScalar& a) {
  return os << "(" << a.value << ", " << a.first << ", " << a.second << ")";
}

}  // namespace krnet::ad
