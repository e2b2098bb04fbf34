#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "arqsec/error.hpp"

namespace arqsec::special {

namespace detail {

// E1(x) for 0 < x <= 1:  -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
inline double e1_series(double x) {
  double sum = 0.0;
  double term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= -x / k;
    const double del = -term / k;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-17) break;
  }
  return -std::numbers::egamma - std::log(x) + sum;
}

// e^x E1(x) for x > 1, modified Lentz evaluation of the continued fraction
// 1/(x+1- 1/(x+3- 4/(x+5- ...))).
inline double e1_scaled_fraction(double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h;
}

}  // namespace detail

/// Exponential integral E1(x) = \int_x^\infty e^{-t}/t dt, x > 0.
///
/// Power series below x = 1, continued fraction above. Relative error is
/// below 1e-13 on [1e-6, 50]; see tests/test_expint.cpp for the reference
/// values it is checked against.
inline double expint_e1(double x) {
  if (!(x > 0.0)) throw DomainError("expint_e1: x must be positive");
  if (x <= 1.0) return detail::e1_series(x);
  if (x > 745.0) return 0.0;
  return std::exp(-x) * detail::e1_scaled_fraction(x);
}

/// e^x E1(x); finite for arbitrarily large x.
inline double expint_e1_scaled(double x) {
  if (!(x > 0.0)) throw DomainError("expint_e1_scaled: x must be positive");
  if (x <= 1.0) return std::exp(x) * detail::e1_series(x);
  return detail::e1_scaled_fraction(x);
}

}  // namespace arqsec::special
