#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "isac/dirichlet.hpp"
#include "isac/grid.hpp"
#include "isac/rng.hpp"

namespace isac {

inline constexpr double kSpeedOfLight = 299792458.0;

/// One user->IRS propagation path.
struct PathUI {
  cxd gain;           ///< complex gain
  int delay_tap = 0;  ///< integer delay in taps of 1/(M delta_f)
  double doppler_hz = 0.0;
  double phi = 0.0;  ///< IRS elevation effective angle [rad]
  double psi = 0.0;  ///< IRS azimuth effective angle [rad]
};

/// One IRS->BS propagation path.
struct PathIB {
  cxd gain;
  int delay_tap = 0;
  double doppler_hz = 0.0;  ///< zero for the line-of-sight path (static BS/IRS)
  double theta_bs = 0.0;    ///< BS effective angle of arrival [rad]
  double phi = 0.0;
  double psi = 0.0;
};

/// IRS array response, Kronecker product of the two axis progressions with
/// the first axis outermost: entry (i1*n2 + i2) = exp(j(i1*u + i2*v)).
inline CVec steer_irs(double u, double v, int n1, int n2) {
  CVec a(n1 * n2);
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i2 = 0; i2 < n2; ++i2)
      a(i1 * n2 + i2) = std::polar(1.0, i1 * u + i2 * v);
  return a;
}

/// BS uniform-linear-array response: entry i = exp(j i theta).
inline CVec steer_bs(double theta, int n_b) {
  CVec a(n_b);
  for (int i = 0; i < n_b; ++i) a(i) = std::polar(1.0, i * theta);
  return a;
}

/// Full physical instance: grid, both hop path lists, array sizes and powers.
/// Index 0 of each path list is the line-of-sight path and must hold the
/// strictly smallest delay of its hop.
struct Scenario {
  OtfsGrid grid;
  std::vector<PathUI> ui_paths;
  std::vector<PathIB> ib_paths;
  int n_b = 4;
  int n_i1 = 8, n_i2 = 8;
  double sigma2 = 0.01;  ///< per-cell noise power (linear)
  double x_p = 1.0;      ///< pilot amplitude

  int n_i() const { return n_i1 * n_i2; }
  double snr_db() const { return 10.0 * std::log10(x_p * x_p / sigma2); }

  const PathUI& los_ui() const { return ui_paths.front(); }
  const PathIB& los_ib() const { return ib_paths.front(); }

  /// Delay bin of the received pilot over the LoS-LoS pair.
  int los_delay_bin() const {
    return grid.l_p + ui_paths.front().delay_tap + ib_paths.front().delay_tap;
  }

  void validate() const {
    grid.validate();
    if (ui_paths.empty() || ib_paths.empty())
      throw std::invalid_argument("Scenario: both hops need at least one path");
    if (n_b < 1 || n_i1 < 1 || n_i2 < 1)
      throw std::invalid_argument("Scenario: array sizes must be >= 1");
    if (sigma2 < 0.0) throw std::invalid_argument("Scenario: sigma2 must be >= 0");
    if (!(x_p > 0.0)) throw std::invalid_argument("Scenario: x_p must be > 0");
    const double nu_lim = 0.5 / grid.t_s();
    for (std::size_t p = 0; p < ui_paths.size(); ++p) {
      if (ui_paths[p].delay_tap < 0)
        throw std::invalid_argument("Scenario: negative UI delay tap");
      if (p > 0 && ui_paths[p].delay_tap <= ui_paths[0].delay_tap)
        throw std::invalid_argument("Scenario: LoS UI path must have strictly minimal delay");
      if (std::abs(ui_paths[p].doppler_hz) >= nu_lim)
        throw std::invalid_argument("Scenario: UI Doppler exceeds representable range");
    }
    for (std::size_t p = 0; p < ib_paths.size(); ++p) {
      if (ib_paths[p].delay_tap < 0)
        throw std::invalid_argument("Scenario: negative IB delay tap");
      if (p > 0 && ib_paths[p].delay_tap <= ib_paths[0].delay_tap)
        throw std::invalid_argument("Scenario: LoS IB path must have strictly minimal delay");
      if (std::abs(ib_paths[p].doppler_hz) >= nu_lim)
        throw std::invalid_argument("Scenario: IB Doppler exceeds representable range");
    }
    for (const auto& pu : ui_paths)
      for (const auto& pb : ib_paths)
        if (pu.delay_tap + pb.delay_tap > grid.l_max)
          throw std::invalid_argument("Scenario: cascaded delay exceeds grid.l_max");
  }
};

/// Element-wise IRS coupling of a path pair: d = conj(a_I(IB)) .* a_I(UI),
/// so that the IRS factor of the cascaded gain is g(xi) = sum_i d_i xi_i.
inline CVec irs_coupling(const PathUI& ui, const PathIB& ib, int n_i1, int n_i2) {
  const CVec a_ui = steer_irs(ui.phi, ui.psi, n_i1, n_i2);
  const CVec a_ib = steer_irs(ib.phi, ib.psi, n_i1, n_i2);
  return a_ib.conjugate().cwiseProduct(a_ui);
}

inline cxd irs_gain(const CVec& xi, const PathUI& ui, const PathIB& ib, int n_i1, int n_i2) {
  return (irs_coupling(ui, ib, n_i1, n_i2).cwiseProduct(xi)).sum();
}

/// Combined beamforming scalar r^H a_B(theta) * a_I^H(IB) diag(xi) a_I(UI).
inline cxd beta_gain(const CVec& r, const CVec& xi, const PathUI& ui, const PathIB& ib,
                     int n_i1, int n_i2) {
  if (xi.size() != static_cast<Eigen::Index>(n_i1) * n_i2)
    throw std::invalid_argument("beta_gain: xi length does not match IRS size");
  const CVec a_b = steer_bs(ib.theta_bs, static_cast<int>(r.size()));
  return r.dot(a_b) * irs_gain(xi, ui, ib, n_i1, n_i2);
}

/// Doppler-independent phase of a path pair (the part of the cascaded gain
/// that does not depend on the receive delay bin): h_ib h_ui e^{j2pi nu_ib tau_ui}.
inline cxd path_pair_coeff(const PathUI& ui, const PathIB& ib, const OtfsGrid& g) {
  const double tau_ui = ui.delay_tap / (g.m * g.delta_f);
  return ib.gain * ui.gain * std::polar(1.0, 2.0 * kPi * ib.doppler_hz * tau_ui);
}

/// Cascaded gain of one path pair at receive delay bin l_rx, excluding the
/// beamforming factor beta_gain().
inline cxd cascaded_gain(const PathUI& ui, const PathIB& ib, const OtfsGrid& g, int l_rx) {
  const int l_tau = ui.delay_tap + ib.delay_tap;
  if (l_rx < l_tau) throw std::invalid_argument("cascaded_gain: l_rx below combined delay");
  const double nu_sum = ui.doppler_hz + ib.doppler_hz;
  const double pos_phase = 2.0 * kPi * nu_sum * (l_rx - l_tau) / (g.m * g.delta_f);
  return path_pair_coeff(ui, ib, g) * std::polar(1.0, pos_phase);
}

namespace detail {

/// Per-pair kernel weights: D[d] for the circular Doppler offset d = (k'-k) mod N.
inline std::vector<cxd> doppler_kernel_row(double nu_hz, const OtfsGrid& g) {
  const double a = nu_hz * g.n * g.t_s();
  std::vector<cxd> d(g.n);
  for (int t = 0; t < g.n; ++t) d[t] = dirichlet_sum(t + a, g.n);
  return d;
}

}  // namespace detail

/// Delay-Doppler coupling matrix of one path pair (dense, MN x MN, row-major
/// cell order k*M + l). Row (k, l) couples only to the delay column
/// l' = (l - l_tau) mod M; circularly wrapped rows (l < l_tau) pick up the
/// extra phase e^{-j2pi(k'/N + nu t_s)}. The truncated variant zeroes every
/// column whose delay lies in the pilot+guard band.
inline CMat psi_matrix(const PathUI& ui, const PathIB& ib, const OtfsGrid& g, bool truncated) {
  g.validate();
  const int l_tau = ui.delay_tap + ib.delay_tap;
  if (l_tau > g.l_max) throw std::invalid_argument("psi_matrix: combined delay exceeds l_max");
  const double nu = ui.doppler_hz + ib.doppler_hz;
  const auto dk = detail::doppler_kernel_row(nu, g);
  const int n = g.n, m = g.m;
  CMat p = CMat::Zero(n * m, n * m);
  for (int l = 0; l < m; ++l) {
    const int lc = ((l - l_tau) % m + m) % m;
    if (truncated && g.in_guard_band(lc)) continue;
    const bool wrapped = l < l_tau;
    const cxd col_phase = std::polar(1.0, -2.0 * kPi * nu * lc / (m * g.delta_f)) *
                          (wrapped ? std::polar(1.0, -2.0 * kPi * nu * g.t_s()) : cxd(1.0, 0.0));
    for (int k = 0; k < n; ++k) {
      for (int kc = 0; kc < n; ++kc) {
        cxd v = dk[((kc - k) % n + n) % n] * col_phase;
        if (wrapped) v *= std::polar(1.0, -2.0 * kPi * kc / n);
        p(k * m + l, kc * m + lc) = v;
      }
    }
  }
  return p;
}

/// y += w * Psi(ui, ib) * x without forming the coupling matrix. Skips
/// all-zero input columns, so pilot-only frames cost O(N^2) per pair.
inline void apply_psi_add(CMat& y, const CMat& x, cxd w, const PathUI& ui, const PathIB& ib,
                          const OtfsGrid& g, bool truncated) {
  const int l_tau = ui.delay_tap + ib.delay_tap;
  if (l_tau > g.l_max) throw std::invalid_argument("apply_psi_add: combined delay exceeds l_max");
  const double nu = ui.doppler_hz + ib.doppler_hz;
  const auto dk = detail::doppler_kernel_row(nu, g);
  const int n = g.n, m = g.m;
  std::vector<cxd> xe(n);
  for (int lc = 0; lc < m; ++lc) {
    if (truncated && g.in_guard_band(lc)) continue;
    if (x.col(lc).isZero(0.0)) continue;
    const int l = (lc + l_tau) % m;
    const bool wrapped = l < l_tau;
    cxd col_phase = w * std::polar(1.0, -2.0 * kPi * nu * lc / (m * g.delta_f));
    if (wrapped) col_phase *= std::polar(1.0, -2.0 * kPi * nu * g.t_s());
    for (int kc = 0; kc < n; ++kc) {
      xe[kc] = x(kc, lc);
      if (wrapped) xe[kc] *= std::polar(1.0, -2.0 * kPi * kc / n);
    }
    for (int k = 0; k < n; ++k) {
      cxd acc(0.0, 0.0);
      for (int kc = 0; kc < n; ++kc) acc += xe[kc] * dk[((kc - k) % n + n) % n];
      y(k, l) += col_phase * acc;
    }
  }
}

/// Effective end-to-end channel for a given combiner and IRS phase vector:
/// H = sum_{p1,p2} coeff * beta * Psi^{p1,p2}.
inline CMat effective_channel(const Scenario& s, const CVec& r, const CVec& xi, bool truncated) {
  s.validate();
  CMat h = CMat::Zero(s.grid.n * s.grid.m, s.grid.n * s.grid.m);
  for (const auto& pu : s.ui_paths)
    for (const auto& pb : s.ib_paths)
      h += path_pair_coeff(pu, pb, s.grid) * beta_gain(r, xi, pu, pb, s.n_i1, s.n_i2) *
           psi_matrix(pu, pb, s.grid, truncated);
  return h;
}

/// Received frame y = H x + n with per-cell complex Gaussian noise of power
/// sigma2 (sigma2 = 0 gives a noiseless run).
inline CMat simulate_rx(const CMat& frame, const Scenario& s, const CVec& r, const CVec& xi,
                        Rng& rng) {
  if (frame.rows() != s.grid.n || frame.cols() != s.grid.m)
    throw std::invalid_argument("simulate_rx: frame dimensions do not match grid");
  CMat y = CMat::Zero(s.grid.n, s.grid.m);
  for (const auto& pu : s.ui_paths)
    for (const auto& pb : s.ib_paths) {
      const cxd w = path_pair_coeff(pu, pb, s.grid) * beta_gain(r, xi, pu, pb, s.n_i1, s.n_i2);
      apply_psi_add(y, frame, w, pu, pb, s.grid, /*truncated=*/false);
    }
  if (s.sigma2 > 0.0)
    for (int k = 0; k < s.grid.n; ++k)
      for (int l = 0; l < s.grid.m; ++l) y(k, l) += rng.cgaussian(s.sigma2);
  return y;
}

/// Knobs for drawing random scenarios.
struct ScenarioParams {
  OtfsGrid grid{};
  int n_b = 4;
  int n_i1 = 8, n_i2 = 8;
  int l_ui = 4, l_ib = 4;          ///< path counts per hop (index 0 = LoS)
  double v_max_mps = 120.0 / 3.6;  ///< user speed bound
  double f_c_hz = 28e9;            ///< carrier frequency
  double x_p = 1.0;
  double sigma2 = 0.01;
  bool ib_doppler = false;  ///< give non-LoS IRS->BS paths Doppler (moving scatterers)
};

inline double wavelength(double f_c_hz) { return kSpeedOfLight / f_c_hz; }

/// Largest user Doppler magnitude for the given speed/carrier.
inline double max_doppler_hz(double v_max_mps, double f_c_hz) {
  return v_max_mps / wavelength(f_c_hz);
}

/// Draw a scenario: LoS paths at delay 0, non-LoS taps uniform in
/// [1, l_max/2] per hop (so every cascaded delay fits l_max), unit-magnitude
/// random-phase gains, user Doppler nu = (v_max/lambda) cos(theta) with
/// theta uniform. Deterministic for a fixed rng state.
inline Scenario random_scenario(const ScenarioParams& p, Rng& rng) {
  p.grid.validate();
  if (p.l_ui < 1 || p.l_ib < 1)
    throw std::invalid_argument("random_scenario: need at least one path per hop");
  const int budget = p.grid.l_max / 2;
  if ((p.l_ui > 1 || p.l_ib > 1) && budget < 1)
    throw std::invalid_argument("random_scenario: l_max too small for multipath delays");
  const double nu_max = max_doppler_hz(p.v_max_mps, p.f_c_hz);
  if (nu_max >= 0.5 / p.grid.t_s())
    throw std::invalid_argument("random_scenario: v_max exceeds representable Doppler");

  Scenario s;
  s.grid = p.grid;
  s.n_b = p.n_b;
  s.n_i1 = p.n_i1;
  s.n_i2 = p.n_i2;
  s.sigma2 = p.sigma2;
  s.x_p = p.x_p;
  s.ui_paths.resize(p.l_ui);
  s.ib_paths.resize(p.l_ib);
  for (int i = 0; i < p.l_ui; ++i) {
    auto& path = s.ui_paths[i];
    path.gain = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
    path.delay_tap = (i == 0) ? 0 : rng.uniform_int(1, budget);
    path.doppler_hz = nu_max * std::cos(rng.uniform(0.0, 2.0 * kPi));
    path.phi = rng.uniform(-kPi, kPi);
    path.psi = rng.uniform(-kPi, kPi);
  }
  for (int i = 0; i < p.l_ib; ++i) {
    auto& path = s.ib_paths[i];
    path.gain = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
    path.delay_tap = (i == 0) ? 0 : rng.uniform_int(1, budget);
    path.doppler_hz = (i > 0 && p.ib_doppler)
                          ? nu_max * std::cos(rng.uniform(0.0, 2.0 * kPi))
                          : 0.0;
    path.theta_bs = rng.uniform(-kPi, kPi);
    path.phi = rng.uniform(-kPi, kPi);
    path.psi = rng.uniform(-kPi, kPi);
  }
  s.validate();
  return s;
}

}  // namespace isac
