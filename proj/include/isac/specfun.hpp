#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace isac {

/// log Gamma(x) for x > 0.
inline double ln_gamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("ln_gamma: x must be > 0");
#if defined(__GLIBC__) || defined(__unix__) || defined(__APPLE__)
  int sign = 0;
  return ::lgamma_r(x, &sign);  // reentrant, no signgam global
#else
  return std::lgamma(x);
#endif
}

inline double log_beta(double a, double b) { return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b); }

namespace detail {

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 2000000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("beta_cf: continued fraction did not converge");
}

}  // namespace detail

/// log of the regularized incomplete beta I_x(a, b), kept in the log domain
/// so deep tails with large shape parameters do not underflow.
inline double log_betainc_reg(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("log_betainc_reg: a, b must be > 0");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("log_betainc_reg: x must be in [0, 1]");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x == 1.0) return 0.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return log_front + std::log(detail::beta_cf(a, b, x) / a);
  }
  // symmetry: I_x(a,b) = 1 - I_{1-x}(b,a); the complement is not a deep tail here
  const double comp = std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) *
                      detail::beta_cf(b, a, 1.0 - x) / b;
  return std::log1p(-comp);
}

/// Regularized incomplete beta I_x(a, b).
inline double betainc_reg(double a, double b, double x) {
  const double lg = log_betainc_reg(a, b, x);
  return std::isinf(lg) ? 0.0 : std::exp(lg);
}

/// Gauss hypergeometric 2F1(a, b; c; -x) for x >= 0, restricted to the
/// parameter patterns the closed-form analysis needs:
///  - c == b      : (1+x)^{-a}
///  - c == b + 1  : through the incomplete-beta representation (requires a > b)
///  - otherwise   : direct series, convergent for x < 1
inline double gauss_2f1_neg(double a, double b, double c, double x) {
  if (!(c > 0.0)) throw std::invalid_argument("gauss_2f1_neg: c must be > 0");
  if (x < 0.0) throw std::invalid_argument("gauss_2f1_neg: x must be >= 0 (argument is -x)");
  if (x == 0.0) return 1.0;
  constexpr double kPatternTol = 1e-9;
  if (std::abs(c - b) < kPatternTol) return std::exp(-a * std::log1p(x));
  if (std::abs(c - (b + 1.0)) < kPatternTol && a > b) {
    // 2F1(a, b; b+1; -x) = b B(b, a-b) x^{-b} I_{x/(1+x)}(b, a-b)
    const double z = x / (1.0 + x);
    const double lg = std::log(b) + log_beta(b, a - b) - b * std::log(x) +
                      log_betainc_reg(b, a - b, z);
    return std::exp(lg);
  }
  if (x < 1.0) {
    double term = 1.0, sum = 1.0;
    for (int k = 0; k < 100000; ++k) {
      term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * (-x);
      sum += term;
      if (std::abs(term) < 1e-16 * std::abs(sum)) return sum;
    }
    throw std::runtime_error("gauss_2f1_neg: series did not converge");
  }
  throw std::domain_error("gauss_2f1_neg: parameter pattern outside supported regimes");
}

}  // namespace isac
