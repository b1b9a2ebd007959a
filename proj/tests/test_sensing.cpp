#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "isac/analysis.hpp"
#include "isac/sensing.hpp"

using namespace isac;
using Catch::Approx;

namespace {

/// Noiseless LoS amplitude column for a given fractional Doppler.
Eigen::VectorXd los_column(double nu_hz, const OtfsGrid& g, double scale) {
  Eigen::VectorXd z(g.n);
  for (int k = 0; k < g.n; ++k)
    z(k) = scale * dirichlet_amp(g.k_p - k + nu_hz * g.n * g.t_s(), g.n);
  return z;
}

}  // namespace

TEST_CASE("extract_los_bin returns the amplitude column") {
  const OtfsGrid g = make_grid(16, 8, 15e3, 4, 8, 2);
  CMat y = CMat::Zero(g.n, g.m);
  y(3, 9) = cxd(3.0, -4.0);
  const Eigen::VectorXd z = extract_los_bin(y, g, 9);
  CHECK(z(3) == Approx(5.0));
  CHECK(z.sum() == Approx(5.0));
  CHECK_THROWS_AS(extract_los_bin(y, g, 16), std::invalid_argument);
  CHECK_THROWS_AS(extract_los_bin(y, g, -1), std::invalid_argument);
}

TEST_CASE("ratio estimator is exact on noiseless columns") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  const double bin = 1.0 / (g.n * g.t_s());

  SECTION("reference case: nu = 2.3 bins at 15 kHz spacing") {
    const double nu = 2.3 * bin;
    CHECK(nu == Approx(2156.25));
    const SenseReport rep = ratio_estimate(los_column(nu, g, 0.7), g);
    CHECK(std::abs(rep.nu_hat_hz - nu) <= 1e-10 * std::abs(nu));
    // independent profile-fit oracle agrees to its grid step
    const double oracle = oracle_grid_estimate(los_column(nu, g, 0.7), g, 256);
    CHECK(std::abs(oracle - rep.nu_hat_hz) <= 1.0 / (256.0 * g.n * g.t_s()));
  }

  SECTION("on-grid Doppler hits the grid value with zero side peaks") {
    const double nu = -3.0 * bin;
    const SenseReport rep = ratio_estimate(los_column(nu, g, 1.0), g);
    CHECK(rep.psi_hat == 0.0);
    CHECK(rep.nu_hat_hz == Approx(nu));
  }

  SECTION("half-bin boundary lands on the closed end of the interval") {
    const double nu = (1.0 - 0.5) * bin;
    const SenseReport rep = ratio_estimate(los_column(nu, g, 1.0), g);
    CHECK(std::abs(rep.nu_hat_hz - nu) <= 1e-9 * bin);
    const double frac = rep.nu_hat_hz - (rep.k1 - g.k_p) / (g.n * g.t_s());
    CHECK(frac >= 0.0);
    CHECK(frac <= 0.5 * bin * (1 + 1e-12));
  }

  SECTION("property: exact recovery over random sizes, pilots and fractions") {
    Rng rng(42);
    for (int t = 0; t < 60; ++t) {
      const int n = 4 << rng.uniform_int(0, 3);  // 4..32
      const OtfsGrid gg = make_grid(16, n, 15e3, rng.uniform_int(0, n - 1), 8, 2);
      const double nu = rng.uniform(-0.5, 0.5) / gg.t_s();
      const SenseReport rep = ratio_estimate(los_column(nu, gg, rng.uniform(0.2, 5.0)), gg);
      CHECK(std::abs(rep.nu_hat_hz - nu) <= 1e-10 / (gg.n * gg.t_s()));
    }
  }
}

TEST_CASE("ratio estimator report invariants") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  const double bin = 1.0 / (g.n * g.t_s());
  Rng rng(7);

  SECTION("scale invariance") {
    const double nu = 1.37 * bin;
    Eigen::VectorXd z = los_column(nu, g, 1.0);
    for (int k = 0; k < g.n; ++k) z(k) += 0.01 * rng.uniform01();
    const SenseReport a = ratio_estimate(z, g);
    const SenseReport b = ratio_estimate(17.0 * z, g);
    CHECK(a.nu_hat_hz == Approx(b.nu_hat_hz));
    CHECK(a.k1 == b.k1);
  }

  SECTION("side selection and fractional interval") {
    for (int t = 0; t < 40; ++t) {
      Eigen::VectorXd z(g.n);
      for (int k = 0; k < g.n; ++k) z(k) = rng.uniform01();
      const SenseReport rep = ratio_estimate(z, g);
      CHECK(rep.k2 == (rep.k1 + 1) % g.n);
      CHECK(rep.k3 == (rep.k1 + g.n - 1) % g.n);
      CHECK(rep.side_right == (z(rep.k2) >= z(rep.k3)));
      const double frac = rep.psi_hat / (kPi * g.t_s());
      if (rep.side_right) {
        CHECK(frac >= 0.0);
        CHECK(frac <= 0.5 * bin * (1 + 1e-12));
      } else {
        CHECK(frac < 0.0);
        CHECK(frac >= -0.5 * bin * (1 + 1e-12));
      }
      CHECK(rep.nu_hat_hz >= -0.5 / g.t_s());
      CHECK(rep.nu_hat_hz < 0.5 / g.t_s());
    }
  }

  SECTION("circular rotation of the column shifts the estimate by whole bins") {
    const double nu = 0.8 * bin;
    const Eigen::VectorXd z = los_column(nu, g, 1.0);
    for (int shift : {1, 5, 11}) {
      Eigen::VectorXd zs(g.n);
      for (int k = 0; k < g.n; ++k) zs((k + shift) % g.n) = z(k);
      const SenseReport rep = ratio_estimate(zs, g);
      const double expect = std::remainder((nu + shift * bin) * g.t_s(), 1.0) / g.t_s();
      CHECK(rep.nu_hat_hz == Approx(expect).margin(1e-6));
    }
  }

  SECTION("degenerate inputs are rejected") {
    CHECK_THROWS_AS(ratio_estimate(Eigen::VectorXd::Zero(16), g), std::invalid_argument);
    const OtfsGrid g2 = make_grid(8, 2, 15e3, 0, 4, 1);
    CHECK_THROWS_AS(ratio_estimate(Eigen::VectorXd::Ones(2), g2), std::invalid_argument);
  }
}

TEST_CASE("integer peak baseline has the quantization floor") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  const double bin = 1.0 / (g.n * g.t_s());

  SECTION("on-grid Doppler is exact") {
    CHECK(integer_peak_estimate(los_column(2.0 * bin, g, 1.0), g) == Approx(2.0 * bin));
  }

  SECTION("half-bin offset errs by half a bin") {
    const double nu = (2.0 + 0.5) * bin;
    const double est = integer_peak_estimate(los_column(nu, g, 1.0), g);
    CHECK(std::abs(est - nu) == Approx(0.5 * bin).epsilon(1e-9));
  }

  SECTION("MSE over uniform fractions approaches bin^2/12") {
    Rng rng(11);
    double acc = 0.0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
      const double nu = (2.0 + rng.uniform(-0.5, 0.5)) * bin;
      const double e = integer_peak_estimate(los_column(nu, g, 1.0), g) - nu;
      acc += e * e;
    }
    CHECK(acc / trials == Approx(bin * bin / 12.0).epsilon(0.05));
  }
}

TEST_CASE("profile-fit oracle behaves as a grid search") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  const double bin = 1.0 / (g.n * g.t_s());

  SECTION("oversample precondition") {
    CHECK_THROWS_AS(oracle_grid_estimate(los_column(bin, g, 1.0), g, 32), std::invalid_argument);
  }

  SECTION("on-grid Doppler is recovered exactly on the candidate grid") {
    const double nu = -4.0 * bin;
    CHECK(oracle_grid_estimate(los_column(nu, g, 1.0), g, 64) == Approx(nu).margin(1e-9));
  }

  SECTION("high-SNR agreement with the ratio estimator") {
    Rng rng(13);
    const double sigma = std::pow(10.0, -30.0 / 20.0);  // 30 dB below unit peak
    const int oversample = 64;
    const double step = 1.0 / (oversample * g.n * g.t_s());
    int close = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      const double nu = rng.uniform(-0.45, 0.45) / g.t_s();
      Eigen::VectorXd z = los_column(nu, g, 1.0);
      for (int k = 0; k < g.n; ++k) z(k) = std::abs(z(k) + sigma * rng.gaussian());
      const double a = oracle_grid_estimate(z, g, oversample);
      const double b = ratio_estimate(z, g).nu_hat_hz;
      if (std::abs(a - b) <= 3.0 * step) ++close;
    }
    CHECK(close >= static_cast<int>(0.99 * trials));
  }
}

TEST_CASE("doppler_to_velocity inverts the LoS Doppler relation") {
  CHECK(doppler_to_velocity(0.0, 0.0107, 0.3) == 0.0);
  const double lambda = kSpeedOfLight / 28e9;
  CHECK(doppler_to_velocity(3111.3, lambda, 0.0) == Approx(120.0 / 3.6).epsilon(1e-3));
  CHECK(doppler_to_velocity(3111.3, lambda, kPi) == Approx(-120.0 / 3.6).epsilon(1e-3));
  CHECK_THROWS_AS(doppler_to_velocity(100.0, lambda, kPi / 2), std::invalid_argument);
}

TEST_CASE("detect_los_bin finds the first energetic delay column") {
  const OtfsGrid g = make_grid(16, 8, 15e3, 4, 8, 2);
  CMat y = CMat::Zero(g.n, g.m);
  y(2, 9) = cxd(10.0, 0.0);
  CHECK(detect_los_bin(y, g, 1.0) == 9);
  CHECK_THROWS_AS(detect_los_bin(CMat::Zero(g.n, g.m), g, 1.0), std::runtime_error);
}
