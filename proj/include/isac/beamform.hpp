#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "isac/analysis.hpp"
#include "isac/channel.hpp"
#include "isac/rng.hpp"

namespace isac {

/// Constraint set admits no solution (sensing target too aggressive for the
/// scenario, or a sub-problem bound exceeded).
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pairwise traces Tr{Psi^{q} (Psi^{q'})^H} over path-pair indices
/// q = p1 * L_ib + p2. Hermitian as a table; zero whenever the two pairs
/// have different cascaded delays (disjoint column support).
class TraceTable {
 public:
  TraceTable(int l_ui, int l_ib) : l_ui_(l_ui), l_ib_(l_ib), t_(l_ui * l_ib * l_ui * l_ib) {}

  int pairs() const { return l_ui_ * l_ib_; }
  int pair_index(int p1, int p2) const { return p1 * l_ib_ + p2; }

  cxd& at(int q, int qp) { return t_[q * pairs() + qp]; }
  cxd at(int q, int qp) const { return t_[q * pairs() + qp]; }

 private:
  int l_ui_, l_ib_;
  std::vector<cxd> t_;
};

/// Build the trace table without touching any MN x MN matrix: for equal
/// cascaded delays the trace factors into a Doppler correlation sum times a
/// delay-column phase sum (each Psi row has a single delay column).
inline TraceTable build_trace_table(const Scenario& s, bool truncated = true) {
  const OtfsGrid& g = s.grid;
  const int l_ui = static_cast<int>(s.ui_paths.size());
  const int l_ib = static_cast<int>(s.ib_paths.size());
  TraceTable tab(l_ui, l_ib);
  const int np = tab.pairs();
  std::vector<int> ltau(np);
  std::vector<double> nu(np);
  std::vector<std::vector<cxd>> dk(np);
  for (int p1 = 0; p1 < l_ui; ++p1)
    for (int p2 = 0; p2 < l_ib; ++p2) {
      const int q = tab.pair_index(p1, p2);
      ltau[q] = s.ui_paths[p1].delay_tap + s.ib_paths[p2].delay_tap;
      if (ltau[q] > g.l_max)
        throw std::invalid_argument("build_trace_table: cascaded delay exceeds l_max");
      nu[q] = s.ui_paths[p1].doppler_hz + s.ib_paths[p2].doppler_hz;
      dk[q] = detail::doppler_kernel_row(nu[q], g);
    }
  for (int q = 0; q < np; ++q) {
    for (int qp = 0; qp < np; ++qp) {
      if (ltau[q] != ltau[qp]) {
        tab.at(q, qp) = cxd(0.0, 0.0);
        continue;
      }
      cxd inner(0.0, 0.0);
      for (int t = 0; t < g.n; ++t) inner += dk[q][t] * std::conj(dk[qp][t]);
      inner *= static_cast<double>(g.n);
      const double dnu = nu[q] - nu[qp];
      const cxd wrap_phase = std::polar(1.0, -2.0 * kPi * dnu * g.t_s());
      cxd colsum(0.0, 0.0);
      for (int lc = 0; lc < g.m; ++lc) {
        if (truncated && g.in_guard_band(lc)) continue;
        cxd ph = std::polar(1.0, -2.0 * kPi * dnu * lc / (g.m * g.delta_f));
        if (lc >= g.m - ltau[q]) ph *= wrap_phase;  // circularly wrapped rows
        colsum += ph;
      }
      tab.at(q, qp) = inner * colsum;
    }
  }
  return tab;
}

namespace detail {

inline CMat hermitize(CMat h) { return 0.5 * (h + h.adjoint()); }

}  // namespace detail

/// Combiner quadratic form: ||H_truc||_F^2 = r^H A r for the given IRS phases.
inline CMat matrix_A(const Scenario& s, const CVec& xi, const TraceTable& tab) {
  const int l_ui = static_cast<int>(s.ui_paths.size());
  const int l_ib = static_cast<int>(s.ib_paths.size());
  std::vector<cxd> cg(tab.pairs());  // coeff * irs gain per pair
  std::vector<CVec> ab(l_ib);
  for (int p2 = 0; p2 < l_ib; ++p2) ab[p2] = steer_bs(s.ib_paths[p2].theta_bs, s.n_b);
  for (int p1 = 0; p1 < l_ui; ++p1)
    for (int p2 = 0; p2 < l_ib; ++p2)
      cg[tab.pair_index(p1, p2)] = path_pair_coeff(s.ui_paths[p1], s.ib_paths[p2], s.grid) *
                                   irs_gain(xi, s.ui_paths[p1], s.ib_paths[p2], s.n_i1, s.n_i2);
  CMat a = CMat::Zero(s.n_b, s.n_b);
  for (int p1 = 0; p1 < l_ui; ++p1)
    for (int p2 = 0; p2 < l_ib; ++p2)
      for (int q1 = 0; q1 < l_ui; ++q1)
        for (int q2 = 0; q2 < l_ib; ++q2) {
          const int q = tab.pair_index(p1, p2), qp = tab.pair_index(q1, q2);
          const cxd w = cg[q] * std::conj(cg[qp]) * tab.at(q, qp);
          a.noalias() += w * (ab[p2] * ab[q2].adjoint());
        }
  return detail::hermitize(std::move(a));
}

/// IRS quadratic form: ||H_truc||_F^2 = xi^H B xi for the given combiner.
inline CMat matrix_B(const Scenario& s, const CVec& r, const TraceTable& tab) {
  const int l_ui = static_cast<int>(s.ui_paths.size());
  const int l_ib = static_cast<int>(s.ib_paths.size());
  const int ni = s.n_i();
  std::vector<cxd> cr(tab.pairs());  // coeff * (r^H a_B) per pair
  std::vector<CVec> d(tab.pairs());  // element-wise IRS coupling per pair
  for (int p1 = 0; p1 < l_ui; ++p1)
    for (int p2 = 0; p2 < l_ib; ++p2) {
      const int q = tab.pair_index(p1, p2);
      cr[q] = path_pair_coeff(s.ui_paths[p1], s.ib_paths[p2], s.grid) *
              r.dot(steer_bs(s.ib_paths[p2].theta_bs, s.n_b));
      d[q] = irs_coupling(s.ui_paths[p1], s.ib_paths[p2], s.n_i1, s.n_i2);
    }
  CMat b = CMat::Zero(ni, ni);
  for (int q = 0; q < tab.pairs(); ++q)
    for (int qp = 0; qp < tab.pairs(); ++qp) {
      const cxd w = cr[q] * std::conj(cr[qp]) * tab.at(q, qp);
      b.noalias() += w * (d[qp].conjugate() * d[q].transpose());
    }
  return detail::hermitize(std::move(b));
}

/// Dominant eigenpair of a Hermitian matrix, eigenvector normalized so its
/// first significant entry is real positive (deterministic global phase).
inline std::pair<double, CVec> top_eigvec(const CMat& h) {
  const double scale = std::max(h.cwiseAbs().maxCoeff(), 1e-300);
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("top_eigvec: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> es(detail::hermitize(h));
  if (es.info() != Eigen::Success) throw std::runtime_error("top_eigvec: eigensolver failed");
  const Eigen::Index last = h.rows() - 1;
  CVec v = es.eigenvectors().col(last);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-9) {
      v *= std::conj(v(i)) / std::abs(v(i));
      break;
    }
  }
  return {es.eigenvalues()(last), v};
}

/// Combiner step: maximize r^H A r subject to ||r|| = 1 and
/// |r^H a_los|^2 >= lambda_r. Returns the dominant eigenvector when it
/// already meets the constraint; otherwise the constrained optimum in
/// span{u1, a_los} with the constraint active.
inline CVec solve_r(const CMat& a_mat, const CVec& a_los, double lambda_r) {
  const double alos2 = a_los.squaredNorm();
  if (lambda_r > alos2 * (1.0 + 1e-12))
    throw InfeasibleError("solve_r: lambda_r exceeds ||a_los||^2");
  auto [lam, u1] = top_eigvec(a_mat);
  if (std::norm(u1.dot(a_los)) >= lambda_r) return u1;

  const CVec alpha = a_los / std::sqrt(alos2);
  CVec beta = u1 - alpha * (alpha.dot(u1));
  const double nb = beta.norm();
  if (nb < 1e-12) return alpha;  // u1 parallel to a_los (constraint was met above)
  beta /= nb;
  const cxd c1 = alpha.dot(u1);  // alpha^H u1
  const cxd c2 = beta.dot(u1);   // beta^H u1
  const double t2 = std::min(1.0, lambda_r / alos2);
  const cxd x1 = std::sqrt(t2) * (std::abs(c1) > 1e-14 ? c1 / std::abs(c1) : cxd(1.0, 0.0));
  const cxd x2 =
      std::sqrt(std::max(0.0, 1.0 - t2)) * (std::abs(c2) > 1e-14 ? c2 / std::abs(c2) : cxd(1.0, 0.0));
  return x1 * alpha + x2 * beta;
}

/// Unconstrained IRS step: element-wise phases of the dominant eigenvector.
inline CVec solve_xi_closed(const CMat& b_mat) {
  const CVec u2 = top_eigvec(b_mat).second;
  CVec xi(u2.size());
  for (Eigen::Index i = 0; i < u2.size(); ++i) {
    const double a = std::abs(u2(i));
    xi(i) = a > 0.0 ? u2(i) / a : cxd(1.0, 0.0);
  }
  return xi;
}

struct AdmmResult {
  CVec xi;
  bool converged = false;
  int iterations = 0;
  double violation = 0.0;
};

/// Consensus-ADMM IRS step for an active sensing constraint
/// |z2^H a_theta|^2 >= lambda_xi with unit-modulus phases. Splitting: z1
/// carries the modulus constraint, z2 the sensing constraint; the xi update
/// solves the regularized quadratic (2 rho I - B) xi = rho sum(z_i + mu_i).
/// The returned xi is projected to unit modulus.
inline AdmmResult admm_xi(const CMat& b_mat, const CVec& a_theta, double lambda_xi, double rho,
                          double eps1, int t_max, const CVec& xi_init) {
  const int ni = static_cast<int>(b_mat.rows());
  const double atheta2 = a_theta.squaredNorm();
  const double reach = a_theta.lpNorm<1>();  // max |z^H a_theta| over unit-modulus z
  if (lambda_xi > reach * reach * (1.0 + 1e-9))
    throw InfeasibleError("admm_xi: lambda_xi exceeds the unit-modulus reach of a_theta");

  CMat lhs = 2.0 * rho * CMat::Identity(ni, ni) - b_mat;
  Eigen::LDLT<CMat> fact(lhs);
  if (fact.info() != Eigen::Success || !fact.isPositive()) {
    // rho at the top eigenvalue can leave the system semidefinite; nudge it
    ++diag::clamp_count();
    fact.compute(lhs + 1e-9 * std::max(rho, 1.0) * CMat::Identity(ni, ni));
  }

  CVec xi = xi_init, z1 = xi_init, z2 = xi_init;
  CVec mu1 = CVec::Zero(ni), mu2 = CVec::Zero(ni);
  AdmmResult res;
  res.xi = xi;
  double best_viol = std::numeric_limits<double>::infinity();
  const double sql = std::sqrt(lambda_xi);
  for (int t = 0; t < t_max; ++t) {
    xi = fact.solve(rho * (z1 + mu1 + z2 + mu2));
    // unit-modulus projection
    for (int i = 0; i < ni; ++i) {
      const cxd w = xi(i) - mu1(i);
      const double a = std::abs(w);
      z1(i) = a > 0.0 ? w / a : cxd(1.0, 0.0);
    }
    // sensing-constraint projection
    const CVec zeta = xi - mu2;
    const cxd ip = zeta.dot(a_theta);  // zeta^H a_theta
    if (std::abs(ip) < 1e-14) {
      z2 = zeta + (sql / atheta2) * a_theta;
    } else {
      const double push = std::max(0.0, sql - std::abs(ip));
      z2 = zeta + (push / (atheta2 * std::abs(ip))) * (a_theta * (a_theta.dot(zeta)));
    }
    mu1 += z1 - xi;
    mu2 += z2 - xi;
    res.iterations = t + 1;
    const double viol = std::max((xi - z1).norm(), (xi - z2).norm());
    if (viol < best_viol) {
      best_viol = viol;
      res.xi = xi;
    }
    if (viol < eps1) {
      res.converged = true;
      break;
    }
  }
  res.violation = best_viol;
  for (int i = 0; i < ni; ++i) {
    const double a = std::abs(res.xi(i));
    res.xi(i) = a > 0.0 ? res.xi(i) / a : cxd(1.0, 0.0);
  }
  return res;
}

/// Achievable rate (1/MN) log2 det(I + gamma H H^H) from the Hermitian
/// eigenvalues of H H^H (negatives from round-off clamped to zero).
inline double rate(const CMat& h, double gamma) {
  if (h.rows() != h.cols()) throw std::invalid_argument("rate: H must be square");
  const CMat gram = detail::hermitize(h * h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(gram, Eigen::EigenvaluesOnly);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    acc += std::log2(1.0 + gamma * std::max(0.0, es.eigenvalues()(i)));
  return acc / static_cast<double>(h.rows());
}

/// Frobenius lower bound (1/MN) log2(1 + gamma/N_s * ||H||_F^2); never above
/// rate(H, gamma/N_s), with equality for rank-one channels.
inline double rate_lower_bound(double frob2, double gamma, int n_s, int mn) {
  if (n_s < 1 || mn < 1) throw std::invalid_argument("rate_lower_bound: n_s, mn must be >= 1");
  return std::log2(1.0 + gamma / n_s * frob2) / mn;
}

/// Cascaded-gain floor gamma' meeting the MSE target: the root of
/// mse_upper_given_h(|h|) = gamma1 [Hz^2], found by bisection on the
/// monotone decreasing bound.
inline double gamma_prime(double gamma1_hz2, double nu_true_hz, const OtfsGrid& g, double sigma2,
                          double x_p) {
  if (!(gamma1_hz2 > 0.0)) throw std::invalid_argument("gamma_prime: gamma1 must be > 0");
  const KernelAmps amps = kernel_amps(nu_true_hz, g, x_p);
  if (!(kernel_amp_larger_side(amps) > 0.0))
    throw InfeasibleError("gamma_prime: on-grid Doppler leaves no side-peak information");
  const auto bound = [&](double h) { return mse_upper_given_h(amps, h, sigma2, g); };
  double lo = 1e-9;
  if (bound(lo) <= gamma1_hz2) return lo;  // target met by any gain
  double hi = 1.0;
  int grow = 0;
  while (bound(hi) > gamma1_hz2) {
    hi *= 2.0;
    if (++grow > 200) throw InfeasibleError("gamma_prime: gamma1 below the infimum of the bound");
  }
  while ((hi - lo) > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (bound(mid) > gamma1_hz2 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct BeamPair {
  CVec r;
  CVec xi;
};

/// Strongest-path beams: combiner matched to the LoS BS steering vector and
/// IRS phases conjugate-matched to the LoS coupling (maximal cascaded gain).
inline BeamPair baseline_strongest(const Scenario& s) {
  BeamPair p;
  p.r = steer_bs(s.los_ib().theta_bs, s.n_b);
  p.r /= p.r.norm();
  const CVec d = irs_coupling(s.los_ui(), s.los_ib(), s.n_i1, s.n_i2);
  p.xi = d.conjugate();
  return p;
}

/// Random IRS phases, combiner from the unconstrained quadratic-form step.
inline BeamPair baseline_random(const Scenario& s, Rng& rng) {
  BeamPair p;
  CVec xi(s.n_i());
  for (int i = 0; i < s.n_i(); ++i) xi(i) = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
  p.xi = xi;
  const TraceTable tab = build_trace_table(s, true);
  p.r = solve_r(matrix_A(s, xi, tab), steer_bs(s.los_ib().theta_bs, s.n_b), 0.0);
  return p;
}

struct OptimizeResult {
  CVec r;
  CVec xi;
  std::vector<double> objective_trace;  ///< ||H_truc||_F^2, entry 0 = initialization
  std::vector<BeamPair> iterates;       ///< recorded when requested
  double gamma_prime_value = 0.0;
  int iterations = 0;           ///< outer iterations executed
  int converged_at = -1;        ///< first outer iteration with relative change < 1e-8
  bool admm_used = false;
  bool feasible = true;
};

struct OptimizeOptions {
  int admm_max_iters = 20000;
  bool record_iterates = false;
};

/// Alternating subspace optimization of (r, xi): combiner step in closed
/// form, IRS step by phase extraction when the sensing constraint already
/// holds and by consensus ADMM otherwise. Steps that fail to improve the
/// objective keep the previous iterate, so the trace is nondecreasing.
inline OptimizeResult optimize(const Scenario& s, double gamma1_hz2, int t1, double eps1,
                               const OptimizeOptions& opt = {}) {
  s.validate();
  const OtfsGrid& g = s.grid;
  const double nu_los = s.los_ui().doppler_hz;
  const double gp = gamma_prime(gamma1_hz2, nu_los, g, s.sigma2, s.x_p);
  const double h_gain = std::abs(s.los_ib().gain * s.los_ui().gain);
  const double h_max = h_gain * std::sqrt(static_cast<double>(s.n_b)) * s.n_i();
  if (gp > h_max)
    throw InfeasibleError("optimize: sensing target needs |h_los| above the achievable maximum");

  OptimizeResult res;
  res.gamma_prime_value = gp;
  BeamPair bp = baseline_strongest(s);
  CVec r = bp.r, xi = bp.xi;
  const CVec a_los = steer_bs(s.los_ib().theta_bs, s.n_b);
  const CVec d_los = irs_coupling(s.los_ui(), s.los_ib(), s.n_i1, s.n_i2);
  const CVec a_theta = d_los.conjugate();
  const TraceTable tab = build_trace_table(s, true);

  const auto irs_factor = [&](const CVec& v) {
    return std::abs((d_los.cwiseProduct(v)).sum());
  };

  CMat a_mat = matrix_A(s, xi, tab);
  double obj = std::real(r.dot(a_mat * r));
  res.objective_trace.push_back(obj);
  if (opt.record_iterates) res.iterates.push_back({r, xi});

  for (int t = 1; t <= t1; ++t) {
    // combiner half-step; threshold from the current IRS phases
    const double lam_r = std::pow(gp / (h_gain * irs_factor(xi)), 2.0);
    a_mat = matrix_A(s, xi, tab);
    const CVec r_new = solve_r(a_mat, a_los, lam_r);
    if (std::real(r_new.dot(a_mat * r_new)) >= std::real(r.dot(a_mat * r))) r = r_new;

    // IRS half-step; threshold from the just-updated combiner
    const double lam_xi = std::pow(gp / (h_gain * std::abs(r.dot(a_los))), 2.0);
    const CMat b_mat = matrix_B(s, r, tab);
    const auto [b_top, u2] = top_eigvec(b_mat);
    CVec xi_new = solve_xi_closed(b_mat);
    if (std::norm(xi_new.dot(a_theta)) < lam_xi) {
      const AdmmResult ar = admm_xi(b_mat, a_theta, lam_xi, std::max(b_top, 1e-12), eps1,
                                    opt.admm_max_iters, xi);
      res.admm_used = true;
      xi_new = ar.xi;
    }
    if (std::real(xi_new.dot(b_mat * xi_new)) >= std::real(xi.dot(b_mat * xi))) xi = xi_new;

    const double obj_new = std::real(xi.dot(b_mat * xi));
    res.objective_trace.push_back(obj_new);
    if (opt.record_iterates) res.iterates.push_back({r, xi});
    res.iterations = t;
    if (std::abs(obj_new - obj) <= 1e-8 * std::max(std::abs(obj), 1e-300)) {
      res.converged_at = t;
      obj = obj_new;
      break;
    }
    obj = obj_new;
  }
  res.r = r;
  res.xi = xi;
  return res;
}

}  // namespace isac
