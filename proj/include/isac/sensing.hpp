#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "isac/channel.hpp"
#include "isac/dirichlet.hpp"
#include "isac/grid.hpp"

namespace isac {

/// Output of the peak-ratio Doppler estimator.
struct SenseReport {
  Eigen::VectorXd z;       ///< per-Doppler-bin amplitudes at the LoS delay bin
  int k1 = 0;              ///< peak bin (argmax, ties toward the smallest index)
  int k2 = 0;              ///< (k1+1) mod N
  int k3 = 0;              ///< (k1-1) mod N
  bool side_right = true;  ///< z[k2] >= z[k3]
  double psi_hat = 0.0;    ///< interpolation angle [rad]
  double nu_hat_hz = 0.0;  ///< Doppler estimate, principal interval [-1/(2t_s), 1/(2t_s))
  int m_wrap = 0;          ///< Doppler-period wrap applied to reach the principal interval
};

/// Amplitudes |Y[k, l_los]| for k = 0..N-1.
inline Eigen::VectorXd extract_los_bin(const CMat& y, const OtfsGrid& g, int l_los) {
  if (y.rows() != g.n || y.cols() != g.m)
    throw std::invalid_argument("extract_los_bin: frame dimensions do not match grid");
  if (l_los < 0 || l_los >= g.m)
    throw std::invalid_argument("extract_los_bin: l_los out of [0, m)");
  return y.col(l_los).cwiseAbs();
}

/// Convenience heuristic when the LoS delay bin is not known a priori: the
/// first delay column at or after the pilot whose peak amplitude exceeds
/// 6*sigma. The estimator itself always takes the bin as an input.
inline int detect_los_bin(const CMat& y, const OtfsGrid& g, double sigma) {
  for (int l = g.l_p; l <= g.l_p + g.l_max && l < g.m; ++l)
    if (y.col(l).cwiseAbs().maxCoeff() > 6.0 * sigma) return l;
  throw std::runtime_error("detect_los_bin: no delay bin with pilot energy above 6*sigma");
}

/// Peak-ratio Doppler estimator.
///
/// Finds the peak bin k1 and compares the two adjacent side peaks; the
/// larger one fixes the sign of the fractional offset, and the amplitude
/// ratio gives the offset itself through
///
///   tan(psi) = +- sin(pi/N) z[ks] / (z[k1] + z[ks] cos(pi/N)).
///
/// Noiseless amplitudes make this exact for any fractional Doppler. The
/// estimate is reported in the principal interval [-1/(2t_s), 1/(2t_s)).
inline SenseReport ratio_estimate(const Eigen::VectorXd& z, const OtfsGrid& g) {
  const int n = static_cast<int>(z.size());
  if (n != g.n) throw std::invalid_argument("ratio_estimate: z length does not match grid.n");
  if (n < 3) throw std::invalid_argument("ratio_estimate: need at least 3 Doppler bins");
  if (z.minCoeff() < 0.0) throw std::invalid_argument("ratio_estimate: amplitudes must be >= 0");
  if (!(z.maxCoeff() > 0.0)) throw std::invalid_argument("ratio_estimate: no pilot energy");

  SenseReport rep;
  rep.z = z;
  int k1 = 0;
  z.maxCoeff(&k1);  // Eigen returns the first maximal entry
  rep.k1 = k1;
  rep.k2 = (k1 + 1) % n;
  rep.k3 = (k1 + n - 1) % n;
  const double z1 = z(rep.k1), z2 = z(rep.k2), z3 = z(rep.k3);
  rep.side_right = z2 >= z3;

  const double sn = std::sin(kPi / n), cn = std::cos(kPi / n);
  const double t = rep.side_right ? sn * z2 / (z1 + z2 * cn) : -sn * z3 / (z1 + z3 * cn);
  rep.psi_hat = std::atan(t);

  const double ts = g.t_s();
  const double raw = (rep.k1 - g.k_p) / (n * ts) + rep.psi_hat / (kPi * ts);
  rep.m_wrap = static_cast<int>(std::floor(raw * ts + 0.5));
  rep.nu_hat_hz = raw - rep.m_wrap / ts;
  return rep;
}

/// On-grid baseline: the peak bin's Doppler without fractional correction.
inline double integer_peak_estimate(const Eigen::VectorXd& z, const OtfsGrid& g) {
  const int n = static_cast<int>(z.size());
  if (n != g.n) throw std::invalid_argument("integer_peak_estimate: z length mismatch");
  if (n < 3) throw std::invalid_argument("integer_peak_estimate: need at least 3 bins");
  if (!(z.maxCoeff() > 0.0)) throw std::invalid_argument("integer_peak_estimate: no pilot energy");
  int k1 = 0;
  z.maxCoeff(&k1);
  const double ts = g.t_s();
  const double raw = (k1 - g.k_p) / (n * ts);
  return raw - std::floor(raw * ts + 0.5) / ts;
}

/// Independent brute-force oracle: least-squares fit of the Dirichlet
/// amplitude profile over a fine Doppler grid spanning one principal
/// interval. Scale is profiled out, so the fit reduces to maximizing the
/// normalized correlation with the profile.
inline double oracle_grid_estimate(const Eigen::VectorXd& z, const OtfsGrid& g, int oversample) {
  if (oversample < 64) throw std::invalid_argument("oracle_grid_estimate: oversample must be >= 64");
  const int n = static_cast<int>(z.size());
  if (n != g.n) throw std::invalid_argument("oracle_grid_estimate: z length mismatch");
  const double ts = g.t_s();
  const int cand = oversample * n;
  double best_score = -1.0, best_nu = 0.0;
  for (int c = 0; c < cand; ++c) {
    const double nu = (static_cast<double>(c) / cand - 0.5) / ts;
    double zp = 0.0, pp = 0.0;
    for (int k = 0; k < n; ++k) {
      const double p = dirichlet_amp(g.k_p - k + nu * n * ts, n);
      zp += z(k) * p;
      pp += p * p;
    }
    const double score = zp * zp / pp;
    if (score > best_score) {
      best_score = score;
      best_nu = nu;
    }
  }
  return best_nu;
}

/// Speed from the LoS Doppler: v = nu * lambda / cos(theta_u).
inline double doppler_to_velocity(double nu_hz, double lambda_m, double theta_u) {
  const double c = std::cos(theta_u);
  if (std::abs(c) < 1e-12)
    throw std::invalid_argument("doppler_to_velocity: cos(theta_u) = 0 is undefined");
  return nu_hz * lambda_m / c;
}

}  // namespace isac
