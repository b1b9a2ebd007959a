#include <catch2/catch_amalgamated.hpp>

#include "isac/channel.hpp"

using namespace isac;
using Catch::Approx;

namespace {

Scenario single_pair_scenario(const OtfsGrid& g, const PathUI& ui, const PathIB& ib) {
  Scenario s;
  s.grid = g;
  s.ui_paths = {ui};
  s.ib_paths = {ib};
  s.n_b = 4;
  s.n_i1 = 2;
  s.n_i2 = 2;
  s.sigma2 = 0.0;
  s.x_p = 1.0;
  return s;
}

}  // namespace

TEST_CASE("IRS steering vector follows the Kronecker axis order") {
  const CVec a0 = steer_irs(0.0, 0.0, 2, 2);
  for (int i = 0; i < 4; ++i) CHECK(a0(i) == cxd(1.0, 0.0));

  const CVec a1 = steer_irs(kPi, 0.0, 2, 2);
  CHECK(std::abs(a1(0) - cxd(1, 0)) < 1e-12);
  CHECK(std::abs(a1(1) - cxd(1, 0)) < 1e-12);
  CHECK(std::abs(a1(2) - cxd(-1, 0)) < 1e-12);
  CHECK(std::abs(a1(3) - cxd(-1, 0)) < 1e-12);

  // first axis outer, second inner: [1, -1, j, -j]
  const CVec a2 = steer_irs(kPi / 2, kPi, 2, 2);
  CHECK(std::abs(a2(0) - cxd(1, 0)) < 1e-12);
  CHECK(std::abs(a2(1) - cxd(-1, 0)) < 1e-12);
  CHECK(std::abs(a2(2) - cxd(0, 1)) < 1e-12);
  CHECK(std::abs(a2(3) - cxd(0, -1)) < 1e-12);

  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const CVec a = steer_irs(rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi), 4, 3);
    CHECK(a.squaredNorm() == Approx(12.0));
    for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a(i)) == Approx(1.0));
  }
}

TEST_CASE("BS steering vector entries are unit-modulus progressions") {
  const CVec a0 = steer_bs(0.0, 4);
  for (int i = 0; i < 4; ++i) CHECK(a0(i) == cxd(1.0, 0.0));
  const CVec a1 = steer_bs(kPi, 2);
  CHECK(std::abs(a1(1) - cxd(-1, 0)) < 1e-12);
  Rng rng(2);
  for (int t = 0; t < 10; ++t)
    CHECK(steer_bs(rng.uniform(-kPi, kPi), 8).squaredNorm() == Approx(8.0));
}

TEST_CASE("beta combines the BS and IRS responses") {
  PathUI ui{cxd(1, 0), 0, 0.0, 0.0, 0.0};
  PathIB ib{cxd(1, 0), 0, 0.0, 0.0, 0.0, 0.0};

  SECTION("boresight with all-ones phases") {
    const int nb = 4, n1 = 2, n2 = 2;
    CVec r = steer_bs(0.0, nb);
    r /= r.norm();
    const CVec xi = CVec::Ones(n1 * n2);
    CHECK(std::abs(beta_gain(r, xi, ui, ib, n1, n2) - cxd(std::sqrt(4.0) * 4.0, 0)) < 1e-12);
  }

  SECTION("phase-conjugate IRS choice maximizes the IRS factor") {
    Rng rng(3);
    ui.phi = rng.uniform(-kPi, kPi);
    ui.psi = rng.uniform(-kPi, kPi);
    ib.phi = rng.uniform(-kPi, kPi);
    ib.psi = rng.uniform(-kPi, kPi);
    const CVec xi = irs_coupling(ui, ib, 4, 4).conjugate();
    CHECK(std::abs(irs_gain(xi, ui, ib, 4, 4)) == Approx(16.0));
  }

  SECTION("combiner orthogonal to the BS response nulls the pair") {
    ib.theta_bs = 0.0;
    CVec r(2);
    r << cxd(M_SQRT1_2, 0), cxd(-M_SQRT1_2, 0);  // orthogonal to [1, 1]
    const CVec xi = CVec::Ones(4);
    CHECK(std::abs(beta_gain(r, xi, ui, ib, 2, 2)) < 1e-12);
  }

  SECTION("dimension mismatch is rejected") {
    CVec r = steer_bs(0.0, 2);
    CHECK_THROWS_AS(beta_gain(r, CVec::Ones(3), ui, ib, 2, 2), std::invalid_argument);
  }
}

TEST_CASE("cascaded gain carries both phase factors") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);

  SECTION("no IB Doppler and aligned receive bin give the plain product") {
    PathUI ui{cxd(0.6, 0.3), 2, 1234.0, 0.1, 0.2};
    PathIB ib{cxd(-0.2, 0.9), 3, 0.0, 0.3, 0.4, 0.5};
    const cxd got = cascaded_gain(ui, ib, g, 5);
    CHECK(std::abs(got - ui.gain * ib.gain) < 1e-12);
  }

  SECTION("IB Doppler chosen for a quarter-turn cross phase") {
    PathUI ui{cxd(1, 0), 4, 0.0, 0, 0};
    const double tau_ui = 4.0 / (g.m * g.delta_f);
    PathIB ib{cxd(1, 0), 0, 1.0 / (4.0 * tau_ui), 0, 0, 0};
    const cxd got = cascaded_gain(ui, ib, g, 4);
    CHECK(std::abs(got - cxd(0, 1)) < 1e-9);
  }

  SECTION("magnitude is the product of the gain magnitudes") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
      PathUI ui{std::polar(rng.uniform(0.1, 2.0), rng.uniform(0.0, 2 * kPi)),
                rng.uniform_int(0, 4), rng.uniform(-3e3, 3e3), 0, 0};
      PathIB ib{std::polar(rng.uniform(0.1, 2.0), rng.uniform(0.0, 2 * kPi)),
                rng.uniform_int(0, 4), rng.uniform(-1e3, 1e3), 0, 0, 0};
      const cxd got = cascaded_gain(ui, ib, g, 8);
      CHECK(std::abs(got) == Approx(std::abs(ui.gain) * std::abs(ib.gain)));
    }
  }

  SECTION("receive bin below the combined delay is rejected") {
    PathUI ui{cxd(1, 0), 3, 0.0, 0, 0};
    PathIB ib{cxd(1, 0), 2, 0.0, 0, 0, 0};
    CHECK_THROWS_AS(cascaded_gain(ui, ib, g, 4), std::invalid_argument);
  }
}

TEST_CASE("delay-Doppler coupling matrix structure") {
  const OtfsGrid g = make_grid(8, 4, 15e3, 2, 4, 2);
  PathUI ui{cxd(1, 0), 0, 0.0, 0, 0};
  PathIB ib{cxd(1, 0), 0, 0.0, 0, 0, 0};

  SECTION("zero Doppler and delay give the identity") {
    const CMat p = psi_matrix(ui, ib, g, false);
    CHECK((p - CMat::Identity(32, 32)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs((p * p.adjoint()).trace() - cxd(32, 0)) < 1e-9);
  }

  SECTION("integer Doppler permutes Doppler rows with unit weight") {
    const int kappa = 1;
    ui.doppler_hz = kappa / (g.n * g.t_s());
    const CMat p = psi_matrix(ui, ib, g, false);
    for (int k = 0; k < g.n; ++k)
      for (int l = 0; l < g.m; ++l)
        for (int kc = 0; kc < g.n; ++kc)
          for (int lc = 0; lc < g.m; ++lc) {
            const cxd v = p(k * g.m + l, kc * g.m + lc);
            if (lc == l && kc == ((k - kappa) % g.n + g.n) % g.n)
              CHECK(std::abs(v) == Approx(1.0));
            else
              CHECK(std::abs(v) < 1e-12);
          }
  }

  SECTION("each row couples to at most N entries in a single delay column") {
    ui.doppler_hz = 777.0;
    ui.delay_tap = 1;
    ib.delay_tap = 1;
    const CMat p = psi_matrix(ui, ib, g, false);
    for (int k = 0; k < g.n; ++k)
      for (int l = 0; l < g.m; ++l) {
        const int lc_expect = ((l - 2) % g.m + g.m) % g.m;
        int nnz = 0;
        for (int kc = 0; kc < g.n; ++kc)
          for (int lc = 0; lc < g.m; ++lc)
            if (std::abs(p(k * g.m + l, kc * g.m + lc)) > 1e-14) {
              ++nnz;
              CHECK(lc == lc_expect);
            }
        CHECK(nnz <= g.n);
      }
  }

  SECTION("Dirichlet row weights stay within unit magnitude") {
    ui.doppler_hz = 1234.5;
    const CMat p = psi_matrix(ui, ib, g, false);
    CHECK(p.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  }

  SECTION("truncation zeroes the pilot and guard columns") {
    ui.doppler_hz = 777.0;
    const CMat p = psi_matrix(ui, ib, g, true);
    for (int i = 0; i < 32; ++i)
      for (int kc = 0; kc < g.n; ++kc)
        for (int lc = g.l_p - g.l_max; lc <= g.l_p + g.l_max; ++lc)
          CHECK(p(i, kc * g.m + lc) == cxd(0.0, 0.0));
  }

  SECTION("delay beyond the budget is rejected") {
    ui.delay_tap = 2;
    ib.delay_tap = 1;
    CHECK_THROWS_AS(psi_matrix(ui, ib, g, false), std::invalid_argument);
  }
}

TEST_CASE("apply_psi_add matches the dense coupling matrix") {
  const OtfsGrid g = make_grid(8, 4, 15e3, 2, 4, 2);
  Rng rng(5);
  PathUI ui{std::polar(1.0, 0.4), 1, 911.0, 0.2, -0.7};
  PathIB ib{std::polar(1.0, -1.1), 1, 0.0, 0.9, 0.1, 0.3};
  CMat x(g.n, g.m);
  for (int k = 0; k < g.n; ++k)
    for (int l = 0; l < g.m; ++l) x(k, l) = cxd(rng.gaussian(), rng.gaussian());
  const cxd w(0.3, -0.8);
  for (bool trunc : {false, true}) {
    const CMat p = psi_matrix(ui, ib, g, trunc);
    CMat y = CMat::Zero(g.n, g.m);
    apply_psi_add(y, x, w, ui, ib, g, trunc);
    const CMat y_ref = unvec_frame(CVec(w * (p * vec_frame(x))), g);
    CHECK((y - y_ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("effective channel: scalar case and linearity") {
  const OtfsGrid g = make_grid(8, 4, 15e3, 2, 4, 2);

  SECTION("single trivial pair scales the identity") {
    PathUI ui{cxd(0.3, 0.4), 0, 0.0, 0, 0};
    PathIB ib{cxd(-0.5, 0.1), 0, 0.0, 0, 0, 0};
    Scenario s = single_pair_scenario(g, ui, ib);
    CVec r = steer_bs(0.0, s.n_b);
    r /= r.norm();
    const CVec xi = CVec::Ones(4);
    const cxd c = path_pair_coeff(ui, ib, g) * beta_gain(r, xi, ui, ib, 2, 2);
    const CMat h = effective_channel(s, r, xi, false);
    CHECK((h - c * CMat::Identity(32, 32)).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("pairs sharing delay and Doppler add coherently") {
    PathUI ui{cxd(1, 0), 0, 555.0, 0.1, 0.2};
    PathIB ib1{cxd(0.5, 0.5), 0, 0.0, 0.3, 0.4, 0.5};
    PathIB ib2{cxd(-0.2, 0.1), 1, 0.0, 0.3, 0.4, 0.5};
    CVec r = steer_bs(0.3, 4);
    r /= r.norm();
    const CVec xi = steer_irs(0.2, -0.4, 2, 2);
    const Scenario one = single_pair_scenario(g, ui, ib1);
    Scenario both = one;
    both.ib_paths.push_back(ib2);
    const Scenario two = single_pair_scenario(g, ui, ib2);
    const CMat hm = effective_channel(both, r, xi, false);
    const CMat ha = effective_channel(one, r, xi, false);
    const CMat hb = effective_channel(two, r, xi, false);
    CHECK((hm - (ha + hb)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("simulate_rx propagates the frame and calibrated noise") {
  const OtfsGrid g = make_grid(16, 8, 15e3, 4, 8, 2);
  PathUI ui{cxd(0.8, -0.6), 0, 0.0, 0.3, -0.2};
  PathIB ib{cxd(0.6, 0.8), 0, 0.0, 0.1, 0.5, -0.4};
  Scenario s = single_pair_scenario(g, ui, ib);
  CVec r = steer_bs(ib.theta_bs, s.n_b);
  r /= r.norm();
  const CVec xi = irs_coupling(ui, ib, 2, 2).conjugate();

  SECTION("noiseless zero-delay zero-Doppler channel is a scalar") {
    Rng rng(6);
    CMat x(g.n, g.m);
    for (int k = 0; k < g.n; ++k)
      for (int l = 0; l < g.m; ++l) x(k, l) = cxd(rng.gaussian(), rng.gaussian());
    const CMat y = simulate_rx(x, s, r, xi, rng);
    const cxd c = path_pair_coeff(ui, ib, g) * beta_gain(r, xi, ui, ib, 2, 2);
    CHECK((y - c * x).cwiseAbs().maxCoeff() < 1e-10);
  }

  SECTION("zero input leaves calibrated noise") {
    Scenario sn = s;
    sn.sigma2 = 1.0;
    Rng rng(7);
    double acc = 0.0;
    int cnt = 0;
    const CMat x = CMat::Zero(g.n, g.m);
    while (cnt < 100000) {
      const CMat y = simulate_rx(x, sn, r, xi, rng);
      acc += y.squaredNorm();
      cnt += g.n * g.m;
    }
    CHECK(acc / cnt > 0.98);
    CHECK(acc / cnt < 1.02);
  }

  SECTION("pilot-only LoS frame concentrates on one delay column") {
    Scenario sp = s;
    sp.ui_paths[0].doppler_hz = 700.0;  // fractional: Dirichlet spread in Doppler
    sp.ib_paths[0].delay_tap = 1;
    Rng rng(8);
    const CMat y = simulate_rx(pilot_frame(g, 1.0), sp, r, xi, rng);
    const int l_los = sp.los_delay_bin();
    for (int l = 0; l < g.m; ++l) {
      const double e = y.col(l).squaredNorm();
      if (l == l_los)
        CHECK(e > 0.0);
      else
        CHECK(e < 1e-20);
    }
    for (int k = 0; k < g.n; ++k) CHECK(std::abs(y(k, l_los)) > 0.0);
  }
}

TEST_CASE("random scenarios respect constraints and determinism") {
  ScenarioParams p;
  p.grid = make_grid(64, 16, 15e3, 8, 32, 8);

  SECTION("derived Doppler bound matches v/lambda") {
    CHECK(max_doppler_hz(120.0 / 3.6, 28e9) == Approx(3111.3).epsilon(1e-3));
  }

  SECTION("all cascaded delays fit the guard budget") {
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
      const Scenario s = random_scenario(p, rng);
      for (const auto& pu : s.ui_paths)
        for (const auto& pb : s.ib_paths) CHECK(pu.delay_tap + pb.delay_tap <= p.grid.l_max);
      for (const auto& pu : s.ui_paths)
        CHECK(std::abs(pu.doppler_hz) <= max_doppler_hz(p.v_max_mps, p.f_c_hz));
      CHECK(s.ib_paths[0].doppler_hz == 0.0);
    }
  }

  SECTION("fixed seed reproduces the scenario bit for bit") {
    Rng a(123), b(123);
    const Scenario s1 = random_scenario(p, a);
    const Scenario s2 = random_scenario(p, b);
    for (std::size_t i = 0; i < s1.ui_paths.size(); ++i) {
      CHECK(s1.ui_paths[i].gain == s2.ui_paths[i].gain);
      CHECK(s1.ui_paths[i].doppler_hz == s2.ui_paths[i].doppler_hz);
      CHECK(s1.ui_paths[i].delay_tap == s2.ui_paths[i].delay_tap);
    }
    for (std::size_t i = 0; i < s1.ib_paths.size(); ++i)
      CHECK(s1.ib_paths[i].theta_bs == s2.ib_paths[i].theta_bs);
  }

  SECTION("excessive speed is rejected") {
    ScenarioParams fast = p;
    fast.v_max_mps = 1000.0;  // ~9 kHz Doppler > delta_f/2
    Rng rng(10);
    CHECK_THROWS_AS(random_scenario(fast, rng), std::invalid_argument);
  }
}
