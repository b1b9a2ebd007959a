#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isac/rng.hpp"

namespace isac {

inline constexpr double kPi = 3.14159265358979323846264338328;

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// OTFS frame geometry and pilot/guard layout.
///
/// The delay-Doppler grid has n Doppler rows (index k) and m delay columns
/// (index l). A single pilot sits at (k_p, l_p); the delay band
/// [l_p - l_max, l_p + l_max] is reserved for the pilot and its guard so that
/// data never leaks into the pilot's delay spread. Slot duration is tied to
/// the subcarrier spacing: t_s = 1/delta_f.
struct OtfsGrid {
  int m = 64;             ///< delay bins (subcarriers)
  int n = 16;             ///< Doppler bins (time slots)
  double delta_f = 15e3;  ///< subcarrier spacing [Hz]
  int k_p = 8;            ///< pilot Doppler index
  int l_p = 32;           ///< pilot delay index
  int l_max = 8;          ///< maximum cascaded delay spread in taps

  double t_s() const { return 1.0 / delta_f; }
  double frame_duration() const { return n * t_s(); }
  double bandwidth() const { return m * delta_f; }
  double doppler_resolution() const { return 1.0 / (n * t_s()); }
  double delay_resolution() const { return 1.0 / (m * delta_f); }

  /// Cells available for data symbols: n * (m - 2*l_max - 1).
  int data_cell_count() const { return n * (m - 2 * l_max - 1); }

  /// True when delay column l lies in the pilot+guard delay band.
  bool in_guard_band(int l) const { return l >= l_p - l_max && l <= l_p + l_max; }

  void validate() const {
    if (m < 1 || n < 1) throw std::invalid_argument("OtfsGrid: m and n must be >= 1");
    if (!(delta_f > 0.0)) throw std::invalid_argument("OtfsGrid: delta_f must be > 0");
    if (k_p < 0 || k_p >= n) throw std::invalid_argument("OtfsGrid: k_p out of [0, n)");
    if (l_p < 0 || l_p >= m) throw std::invalid_argument("OtfsGrid: l_p out of [0, m)");
    if (l_max < 0) throw std::invalid_argument("OtfsGrid: l_max must be >= 0");
    if (l_p - l_max < 0 || l_p + l_max >= m)
      throw std::invalid_argument("OtfsGrid: guard band [l_p-l_max, l_p+l_max] must fit in [0, m)");
  }
};

inline OtfsGrid make_grid(int m, int n, double delta_f, int k_p, int l_p, int l_max) {
  OtfsGrid g{m, n, delta_f, k_p, l_p, l_max};
  g.validate();
  return g;
}

/// Grid with the pilot at the center of the delay-Doppler plane.
inline OtfsGrid make_centered_grid(int m, int n, double delta_f, int l_max) {
  return make_grid(m, n, delta_f, n / 2, m / 2, l_max);
}

/// Guard index sets: all Doppler rows except the pilot's, and the guard delay
/// columns around (but excluding) the pilot column.
struct GuardSets {
  std::vector<int> doppler;  ///< { k : k != k_p }
  std::vector<int> delay;    ///< { l : l_p - l_max <= l <= l_p + l_max, l != l_p }
};

inline GuardSets guard_index_sets(const OtfsGrid& g) {
  g.validate();
  GuardSets s;
  s.doppler.reserve(g.n - 1);
  for (int k = 0; k < g.n; ++k)
    if (k != g.k_p) s.doppler.push_back(k);
  s.delay.reserve(2 * g.l_max);
  for (int l = g.l_p - g.l_max; l <= g.l_p + g.l_max; ++l)
    if (l != g.l_p) s.delay.push_back(l);
  return s;
}

/// Arrange pilot, guard zeros and data symbols into an n x m frame.
///
/// The pilot cell carries x_p, every other cell of the guard delay band is
/// zero, and data fills the remaining cells in row-major (k, then l) order.
inline CMat place_symbols(const OtfsGrid& g, double x_p, std::span<const cxd> data) {
  g.validate();
  const int expected = g.data_cell_count();
  if (static_cast<int>(data.size()) != expected)
    throw std::invalid_argument("place_symbols: data length mismatch, expected " +
                                std::to_string(expected) + ", got " +
                                std::to_string(data.size()));
  CMat x = CMat::Zero(g.n, g.m);
  std::size_t idx = 0;
  for (int k = 0; k < g.n; ++k) {
    for (int l = 0; l < g.m; ++l) {
      if (k == g.k_p && l == g.l_p) {
        x(k, l) = cxd(x_p, 0.0);
      } else if (!g.in_guard_band(l)) {
        x(k, l) = data[idx++];
      }
    }
  }
  return x;
}

/// Frame with the pilot only (all data cells zero).
inline CMat pilot_frame(const OtfsGrid& g, double x_p) {
  return place_symbols(g, x_p, std::vector<cxd>(g.data_cell_count()));
}

/// Unit-power QPSK symbols.
inline std::vector<cxd> random_qpsk(int count, Rng& rng) {
  static const cxd kQpsk[4] = {{M_SQRT1_2, M_SQRT1_2},
                               {M_SQRT1_2, -M_SQRT1_2},
                               {-M_SQRT1_2, M_SQRT1_2},
                               {-M_SQRT1_2, -M_SQRT1_2}};
  std::vector<cxd> out(count);
  for (auto& s : out) s = kQpsk[rng.uniform_int(0, 3)];
  return out;
}

/// Inverse symplectic finite Fourier transform (unnormalized forward):
///   X_tf[nn, mm] = sum_{k,l} X_dd[k, l] exp(j 2 pi (nn k / N - mm l / M)).
inline CMat isfft(const CMat& dd) {
  const int n = static_cast<int>(dd.rows());
  const int m = static_cast<int>(dd.cols());
  const double pi = 3.14159265358979323846264338328;
  CMat fn(n, n), gm(m, m);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < n; ++k)
      fn(r, k) = std::polar(1.0, 2.0 * pi * r * k / n);
  for (int l = 0; l < m; ++l)
    for (int c = 0; c < m; ++c)
      gm(l, c) = std::polar(1.0, -2.0 * pi * c * l / m);
  return fn * dd * gm;
}

/// Symplectic finite Fourier transform with the 1/(NM) normalization;
/// exact inverse of isfft().
inline CMat sfft(const CMat& tf) {
  const int n = static_cast<int>(tf.rows());
  const int m = static_cast<int>(tf.cols());
  const double pi = 3.14159265358979323846264338328;
  CMat fn(n, n), gm(m, m);
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      fn(k, r) = std::polar(1.0, -2.0 * pi * r * k / n);
  for (int c = 0; c < m; ++c)
    for (int l = 0; l < m; ++l)
      gm(c, l) = std::polar(1.0, 2.0 * pi * c * l / m);
  return (fn * tf * gm) / (static_cast<double>(n) * m);
}

/// Row-major (k, l) -> k*M + l flattening used for vectorized channels.
inline int vec_index(int k, int l, const OtfsGrid& g) {
  if (k < 0 || k >= g.n || l < 0 || l >= g.m)
    throw std::out_of_range("vec_index: (k, l) out of range");
  return k * g.m + l;
}

inline std::pair<int, int> unvec_index(int i, const OtfsGrid& g) {
  if (i < 0 || i >= g.n * g.m) throw std::out_of_range("unvec_index: i out of range");
  return {i / g.m, i % g.m};
}

/// Flatten a frame in vec_index order.
inline CVec vec_frame(const CMat& x) {
  CVec v(x.rows() * x.cols());
  for (int k = 0; k < x.rows(); ++k)
    for (int l = 0; l < x.cols(); ++l)
      v(k * x.cols() + l) = x(k, l);
  return v;
}

inline CMat unvec_frame(const CVec& v, const OtfsGrid& g) {
  CMat x(g.n, g.m);
  for (int k = 0; k < g.n; ++k)
    for (int l = 0; l < g.m; ++l)
      x(k, l) = v(k * g.m + l);
  return x;
}

}  // namespace isac
