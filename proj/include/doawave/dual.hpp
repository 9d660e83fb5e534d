#pragma once

#include <cmath>
#include <complex>

namespace doawave {

// Forward-mode dual number: value plus derivative with respect to one
// designated parameter.
struct DualReal {
  double value = 0.0;
  double deriv = 0.0;

  constexpr DualReal() = default;
  constexpr DualReal(double v, double d = 0.0) : value(v), deriv(d) {}

  static constexpr DualReal variable(double v) { return {v, 1.0}; }
};

constexpr DualReal operator+(DualReal a, DualReal b) { return {a.value + b.value, a.deriv + b.deriv}; }
constexpr DualReal operator-(DualReal a, DualReal b) { return {a.value - b.value, a.deriv - b.deriv}; }
constexpr DualReal operator-(DualReal a) { return {-a.value, -a.deriv}; }
constexpr DualReal operator*(DualReal a, DualReal b) {
  return {a.value * b.value, a.value * b.deriv + a.deriv * b.value};
}
constexpr DualReal operator/(DualReal a, DualReal b) {
  return {a.value / b.value, (a.deriv * b.value - a.value * b.deriv) / (b.value * b.value)};
}

inline DualReal sin(DualReal a) { return {std::sin(a.value), std::cos(a.value) * a.deriv}; }
inline DualReal cos(DualReal a) { return {std::cos(a.value), -std::sin(a.value) * a.deriv}; }
inline DualReal exp(DualReal a) {
  const double e = std::exp(a.value);
  return {e, e * a.deriv};
}
inline DualReal sqrt(DualReal a) {
  const double s = std::sqrt(a.value);
  return {s, s > 0.0 ? a.deriv / (2.0 * s) : 0.0};
}
// Subgradient 0 at the kink.
inline DualReal relu(DualReal a) { return a.value > 0.0 ? a : DualReal{}; }

struct DualComplex {
  DualReal re;
  DualReal im;

  constexpr DualComplex() = default;
  constexpr DualComplex(DualReal r, DualReal i = {}) : re(r), im(i) {}
  DualComplex(std::complex<double> value, std::complex<double> deriv = {})
      : re(value.real(), deriv.real()), im(value.imag(), deriv.imag()) {}

  std::complex<double> value() const { return {re.value, im.value}; }
  std::complex<double> deriv() const { return {re.deriv, im.deriv}; }
};

constexpr DualComplex operator+(DualComplex a, DualComplex b) { return {a.re + b.re, a.im + b.im}; }
constexpr DualComplex operator-(DualComplex a, DualComplex b) { return {a.re - b.re, a.im - b.im}; }
constexpr DualComplex operator*(DualComplex a, DualComplex b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
constexpr DualComplex operator*(DualReal s, DualComplex a) { return {s * a.re, s * a.im}; }
constexpr DualComplex conj(DualComplex a) { return {a.re, -a.im}; }
// |a|^2
constexpr DualReal norm(DualComplex a) { return a.re * a.re + a.im * a.im; }
// exp(j * phase)
inline DualComplex expj(DualReal phase) { return {cos(phase), sin(phase)}; }

}  // namespace doawave
