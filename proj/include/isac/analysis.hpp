#pragma once

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "isac/dirichlet.hpp"
#include "isac/grid.hpp"
#include "isac/specfun.hpp"

namespace isac {

namespace diag {
/// Count of results clamped into their declared range (kept instead of
/// stderr spam inside Monte Carlo loops).
inline std::atomic<long>& clamp_count() {
  static std::atomic<long> c{0};
  return c;
}
}  // namespace diag

/// Moment-matched Nakagami approximation of a noisy amplitude |Z' + n|,
/// n ~ CN(0, sigma2):  varpi = (Z'^2+s2)^2 / (2 Z'^2 s2 + s2^2),
/// omega = Z'^2 + s2, vartheta = varpi/omega.
struct NakagamiParams {
  double varpi;
  double omega;
  double vartheta;
};

inline NakagamiParams nakagami_params(double z_prime, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("nakagami_params: sigma2 must be > 0");
  const double p = z_prime * z_prime;
  const double denom = 2.0 * p * sigma2 + sigma2 * sigma2;
  const double omega = p + sigma2;
  const double varpi = omega * omega / denom;
  return {varpi, omega, varpi / omega};
}

/// varpi - 1 computed without cancellation: Z'^4 / (2 Z'^2 s2 + s2^2).
inline double nakagami_varpi_minus_one(double z_prime, double sigma2) {
  const double p = z_prime * z_prime;
  return p * p / (2.0 * p * sigma2 + sigma2 * sigma2);
}

/// Fractional peak offset of a Doppler in grid units: nu*N*t_s = kappa + chi
/// with integer kappa and chi in (-1/2, 1/2].
struct FractionalOffset {
  int kappa;
  double chi;
};

inline FractionalOffset fractional_offset(double nu_hz, const OtfsGrid& g) {
  const double x = nu_hz * g.n * g.t_s();
  const int kappa = static_cast<int>(std::ceil(x - 0.5));
  return {kappa, x - kappa};
}

/// Noiseless Dirichlet amplitudes at the peak and its two neighbors, plus the
/// interpolation angle they induce. a_k2 belongs to bin k1+1 (offset chi-1),
/// a_k3 to k1-1 (offset chi+1); all reported as magnitudes.
struct KernelAmps {
  double a_k1;
  double a_k2;
  double a_k3;
  double psi_prime;  ///< from the larger side amplitude, sign per its side
  double chi;        ///< fractional offset behind these amplitudes
};

inline KernelAmps kernel_amps(double nu_true_hz, const OtfsGrid& g, double x_p) {
  const double chi = fractional_offset(nu_true_hz, g).chi;
  KernelAmps a;
  a.chi = chi;
  a.a_k1 = x_p * dirichlet_amp(chi, g.n);
  a.a_k2 = x_p * dirichlet_amp(chi - 1.0, g.n);
  a.a_k3 = x_p * dirichlet_amp(chi + 1.0, g.n);
  const double sn = std::sin(kPi / g.n), cn = std::cos(kPi / g.n);
  const double t = (a.a_k2 >= a.a_k3) ? sn * a.a_k2 / (a.a_k1 + a.a_k2 * cn)
                                      : -sn * a.a_k3 / (a.a_k1 + a.a_k3 * cn);
  a.psi_prime = std::atan(t);
  return a;
}

inline double kernel_amp_larger_side(const KernelAmps& a) { return std::max(a.a_k2, a.a_k3); }
inline double kernel_amp_smaller_side(const KernelAmps& a) { return std::min(a.a_k2, a.a_k3); }

/// Probability that the correct side peak wins the noisy comparison,
/// evaluated through the regularized incomplete beta in the log domain.
/// z2_prime / z3_prime are the noiseless amplitudes of bins k1+1 / k1-1.
inline double p_eff_closed(double z2_prime, double z3_prime, double sigma2) {
  if (z2_prime < 0.0 || z3_prime < 0.0)
    throw std::invalid_argument("p_eff_closed: amplitudes must be >= 0");
  if (z2_prime == 0.0 && z3_prime == 0.0)
    throw std::invalid_argument("p_eff_closed: amplitudes must not both be zero");
  const NakagamiParams n2 = nakagami_params(z2_prime, sigma2);
  const NakagamiParams n3 = nakagami_params(z3_prime, sigma2);
  double p;
  if (z2_prime >= z3_prime) {
    p = betainc_reg(n3.varpi, n2.varpi, n3.vartheta / (n2.vartheta + n3.vartheta));
  } else {
    p = betainc_reg(n2.varpi, n3.varpi, n2.vartheta / (n2.vartheta + n3.vartheta));
  }
  if (p < 0.0 || p > 1.0) {
    ++diag::clamp_count();
    p = std::min(1.0, std::max(0.0, p));
  }
  return p;
}

/// Average of p_eff_closed over a uniform fractional offset, midpoint rule on
/// chi in (0, 1/2) (the two signs are symmetric). h_abs is the cascaded LoS
/// gain magnitude multiplying the kernel amplitudes.
inline double p_eff_closed_fraction_avg(double h_abs, const OtfsGrid& g, double x_p,
                                        double sigma2, int npts = 2000) {
  double acc = 0.0;
  for (int i = 0; i < npts; ++i) {
    const double chi = 0.5 * (i + 0.5) / npts;
    const KernelAmps a = kernel_amps(chi / (g.n * g.t_s()), g, x_p);
    acc += p_eff_closed(h_abs * a.a_k2, h_abs * a.a_k3, sigma2);
  }
  return acc / npts;
}

/// E[Z_1/Z_2] for independent Nakagami amplitudes (gamma power moments).
inline double ratio_moment1(const NakagamiParams& n1, const NakagamiParams& n2) {
  if (!(n2.varpi > 0.5)) throw std::invalid_argument("ratio_moment1: varpi2 must exceed 1/2");
  const double lg = ln_gamma(n2.varpi - 0.5) + ln_gamma(n1.varpi + 0.5) - ln_gamma(n2.varpi) -
                    ln_gamma(n1.varpi);
  return std::exp(lg) * std::sqrt(n2.vartheta / n1.vartheta);
}

/// E[Z_1^2/Z_2^2]; diverges for varpi2 <= 1.
inline double ratio_moment2(const NakagamiParams& n1, const NakagamiParams& n2) {
  if (!(n2.varpi > 1.0)) throw std::invalid_argument("ratio_moment2: varpi2 must exceed 1");
  return n1.varpi / (n2.varpi - 1.0) * n2.vartheta / n1.vartheta;
}

/// Density of R = Z_1/Z_2 for independent Nakagami amplitudes.
inline double nakagami_ratio_pdf(double r, const NakagamiParams& n1, const NakagamiParams& n2) {
  if (r <= 0.0) return 0.0;
  const double lf = std::log(2.0) + n2.varpi * std::log(n2.vartheta) +
                    n1.varpi * std::log(n1.vartheta) + ln_gamma(n1.varpi + n2.varpi) -
                    ln_gamma(n1.varpi) - ln_gamma(n2.varpi) + (2.0 * n1.varpi - 1.0) * std::log(r) -
                    (n1.varpi + n2.varpi) * std::log(n1.vartheta * r * r + n2.vartheta);
  return std::exp(lf);
}

namespace detail {

inline double mse_prefactor(const KernelAmps& a, const OtfsGrid& g) {
  const double s = std::sin(a.psi_prime);
  const double sn = std::sin(kPi / g.n);
  const double ts = g.t_s();
  return s * s * s * s / (sn * sn * kPi * kPi * ts * ts);
}

/// Second inverse-power moment term varpi1*vartheta2 / ((varpi2-1)*vartheta1)
/// with the pole difference computed stably from the amplitudes.
inline double mse_moment2_term(double z1p, double z2p, double sigma2) {
  const NakagamiParams n1 = nakagami_params(z1p, sigma2);
  const NakagamiParams n2 = nakagami_params(z2p, sigma2);
  const double w2m1 = nakagami_varpi_minus_one(z2p, sigma2);
  return n1.varpi / w2m1 * n2.vartheta / n1.vartheta;
}

inline void check_mse_inputs(double z1p, double z2p, const char* fn) {
  if (!(z2p > 0.0))
    throw std::invalid_argument(std::string(fn) + ": side amplitude must be > 0 (varpi2 <= 1 pole)");
  if (!(z1p > z2p))
    throw std::invalid_argument(std::string(fn) + ": need z1' > z2'");
}

}  // namespace detail

/// Closed-form conditional MSE of the ratio estimator [Hz^2], given correct
/// peak/side-peak selection. z1_prime / z2_prime are the largest and second
/// largest noiseless amplitudes.
inline double mse_approx(const KernelAmps& amps, double z1_prime, double z2_prime, double sigma2,
                         const OtfsGrid& g) {
  detail::check_mse_inputs(z1_prime, z2_prime, "mse_approx");
  const NakagamiParams n1 = nakagami_params(z1_prime, sigma2);
  const NakagamiParams n2 = nakagami_params(z2_prime, sigma2);
  const double r = z1_prime / z2_prime;
  const double m1 = ratio_moment1(n1, n2);
  const double m2 = detail::mse_moment2_term(z1_prime, z2_prime, sigma2);
  double eps = detail::mse_prefactor(amps, g) * (r * r - 2.0 * r * m1 + m2);
  if (eps < 0.0) {
    ++diag::clamp_count();
    eps = 0.0;
  }
  return eps;
}

/// Upper bound of the achievable MSE [Hz^2]: the gamma-ratio moment replaced
/// by sqrt(varpi1*vartheta2/(varpi2*vartheta1)) = sqrt(omega1/omega2).
inline double mse_upper(const KernelAmps& amps, double z1_prime, double z2_prime, double sigma2,
                        const OtfsGrid& g) {
  detail::check_mse_inputs(z1_prime, z2_prime, "mse_upper");
  const double o1 = z1_prime * z1_prime + sigma2;
  const double o2 = z2_prime * z2_prime + sigma2;
  const double r = z1_prime / z2_prime;
  const double m2 = detail::mse_moment2_term(z1_prime, z2_prime, sigma2);
  return detail::mse_prefactor(amps, g) * (r * r - 2.0 * r * std::sqrt(o1 / o2) + m2);
}

/// mse_upper with the amplitudes parameterized by the cascaded LoS gain
/// magnitude: Z_i' = h_abs * a_{k_i}. Monotonically decreasing in h_abs.
inline double mse_upper_given_h(const KernelAmps& amps, double h_abs, double sigma2,
                                const OtfsGrid& g) {
  return mse_upper(amps, h_abs * amps.a_k1, h_abs * kernel_amp_larger_side(amps), sigma2, g);
}

/// Error sandwich around the MSE upper bound: returns (delta_lower,
/// delta_upper) with  eps + delta_lower < eps_up < eps + delta_upper.
/// The deltas follow the Stirling-ratio bounds on the gamma-ratio moment,
///   delta = 2 pref R sqrt(varpi1/varpi2) sqrt(vartheta2/vartheta1) (alpha - 1),
/// evaluated in the log domain.
inline std::pair<double, double> mse_error_sandwich(const KernelAmps& amps, double z1_prime,
                                                    double z2_prime, double sigma2,
                                                    const OtfsGrid& g) {
  detail::check_mse_inputs(z1_prime, z2_prime, "mse_error_sandwich");
  const NakagamiParams n1 = nakagami_params(z1_prime, sigma2);
  const NakagamiParams n2 = nakagami_params(z2_prime, sigma2);
  const double w1 = n1.varpi, w2 = n2.varpi;
  if (!(w1 > 1.0) || !(w2 > 1.0))
    throw std::invalid_argument("mse_error_sandwich: requires varpi1, varpi2 > 1");
  const double base = w1 * std::log1p(1.0 / (2.0 * w1)) + (w2 - 1.0) * std::log1p(-1.0 / (2.0 * w2));
  const double corr1 = std::log1p(1.0 / (12.0 * w1) + 1.0 / (288.0 * w1));
  const double corr2 = std::log1p(1.0 / (12.0 * w2) + 1.0 / (288.0 * w2));
  const double corr1u = std::log1p(1.0 / (12.0 * (w1 + 0.5)) + 1.0 / (288.0 * (w1 + 0.5)));
  const double corr2u = std::log1p(1.0 / (12.0 * (w2 - 0.5)) + 1.0 / (288.0 * (w2 - 0.5)));
  const double log_alpha_lower = base - corr1 - corr2;
  const double log_alpha_upper = base + corr1u + corr2u;
  const double common = 2.0 * detail::mse_prefactor(amps, g) * (z1_prime / z2_prime) *
                        std::sqrt(w1 / w2) * std::sqrt(n2.vartheta / n1.vartheta);
  return {common * std::expm1(log_alpha_lower), common * std::expm1(log_alpha_upper)};
}

}  // namespace isac
