#pragma once

#include <cmath>
#include <complex>

namespace isac {

/// Argument window below which the removable singularity of the Dirichlet
/// ratio is replaced by its limit.
inline constexpr double kDirichletOnGridTol = 1e-12;

/// Normalized Dirichlet kernel
///
///   D_N(theta) = (1/N) * sum_{i=0}^{N-1} exp(j 2 pi theta i / N),
///
/// the Doppler-domain response of a length-N rectangular frame to a tone at
/// fractional bin offset theta. Exactly N-periodic in theta; D_N(0) = 1 and
/// D_N(k) = 0 for integer k not a multiple of N.
inline std::complex<double> dirichlet_sum(double theta, int n) {
  const double tr = std::remainder(theta, static_cast<double>(n));  // (-N/2, N/2]
  if (std::abs(tr) < kDirichletOnGridTol) return {1.0, 0.0};
  const double pi = 3.14159265358979323846264338328;
  const double ratio = std::sin(pi * tr) / (n * std::sin(pi * tr / n));
  const double ph = pi * tr * (n - 1) / n;
  return {ratio * std::cos(ph), ratio * std::sin(ph)};
}

/// |D_N(theta)|.
inline double dirichlet_amp(double theta, int n) {
  const double tr = std::remainder(theta, static_cast<double>(n));
  if (std::abs(tr) < kDirichletOnGridTol) return 1.0;
  const double pi = 3.14159265358979323846264338328;
  return std::abs(std::sin(pi * tr) / (n * std::sin(pi * tr / n)));
}

}  // namespace isac
