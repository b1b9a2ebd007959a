#include <catch2/catch_amalgamated.hpp>

#include "isac/grid.hpp"
#include "isac/rng.hpp"

using namespace isac;

TEST_CASE("guard index sets match the pilot/guard layout") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  const GuardSets s = guard_index_sets(g);
  CHECK(s.doppler.size() == 15);
  CHECK(s.delay.size() == 16);
  CHECK(g.data_cell_count() == 16 * (64 - 17));

  const OtfsGrid g0 = make_grid(64, 16, 15e3, 8, 32, 0);
  CHECK(guard_index_sets(g0).delay.empty());
  CHECK(g0.data_cell_count() == 16 * 63);

  const OtfsGrid tiny = make_grid(4, 2, 15e3, 0, 1, 1);
  CHECK(tiny.data_cell_count() == 2 * (4 - 3));
}

TEST_CASE("grid invariants are enforced") {
  CHECK_THROWS_AS(make_grid(64, 16, 15e3, 16, 32, 8), std::invalid_argument);  // k_p out of range
  CHECK_THROWS_AS(make_grid(64, 16, 15e3, 8, 60, 8), std::invalid_argument);   // guard falls off
  CHECK_THROWS_AS(make_grid(64, 16, -1.0, 8, 32, 8), std::invalid_argument);
  const OtfsGrid g = make_centered_grid(64, 16, 15e3, 8);
  CHECK(g.k_p == 8);
  CHECK(g.l_p == 32);
  CHECK(g.t_s() == 1.0 / 15e3);
  CHECK(g.frame_duration() == Catch::Approx(16.0 / 15e3));
  CHECK(g.bandwidth() == Catch::Approx(64 * 15e3));
}

TEST_CASE("place_symbols arranges pilot, guard and data") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);

  SECTION("all-zero data leaves only the pilot") {
    const CMat x = pilot_frame(g, 1.0);
    int nonzero = 0;
    for (int k = 0; k < g.n; ++k)
      for (int l = 0; l < g.m; ++l)
        if (std::abs(x(k, l)) > 0) ++nonzero;
    CHECK(nonzero == 1);
    CHECK(x(g.k_p, g.l_p) == cxd(1.0, 0.0));
  }

  SECTION("frame energy counts pilot plus unit data symbols") {
    const double x_p = 3.0;
    const std::vector<cxd> data(g.data_cell_count(), cxd(1.0, 0.0));
    const CMat x = place_symbols(g, x_p, data);
    CHECK(x.squaredNorm() == Catch::Approx(752.0 + x_p * x_p));
  }

  SECTION("wrong data length is rejected with counts") {
    const std::vector<cxd> data(751);
    try {
      place_symbols(g, 1.0, data);
      FAIL("expected a length error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("752") != std::string::npos);
      CHECK(msg.find("751") != std::string::npos);
    }
  }

  SECTION("layout scan: guard zeros exactly where required") {
    Rng rng(7);
    const auto data = random_qpsk(g.data_cell_count(), rng);
    const CMat x = place_symbols(g, 2.0, data);
    int data_cells = 0;
    for (int k = 0; k < g.n; ++k)
      for (int l = 0; l < g.m; ++l) {
        if (k == g.k_p && l == g.l_p) {
          CHECK(x(k, l) == cxd(2.0, 0.0));
        } else if (g.in_guard_band(l)) {
          CHECK(x(k, l) == cxd(0.0, 0.0));
        } else {
          CHECK(std::abs(x(k, l)) == Catch::Approx(1.0));
          ++data_cells;
        }
      }
    CHECK(data_cells == g.data_cell_count());
  }
}

TEST_CASE("isfft and sfft form an exact transform pair") {
  SECTION("zeros map to zeros") {
    const CMat z = CMat::Zero(4, 8);
    CHECK(isfft(z).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("unit impulse at the origin spreads to all ones") {
    CMat x = CMat::Zero(4, 4);
    x(0, 0) = 1.0;
    const CMat tf = isfft(x);
    CHECK((tf - CMat::Ones(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("round trip is the identity") {
    Rng rng(11);
    for (const auto [n, m] : {std::pair{4, 4}, {16, 64}, {8, 16}}) {
      CMat x(n, m);
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < m; ++l) x(k, l) = cxd(rng.gaussian(), rng.gaussian());
      CHECK((sfft(isfft(x)) - x).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("vec index maps row-major and is bijective") {
  const OtfsGrid g = make_grid(64, 16, 15e3, 8, 32, 8);
  CHECK(vec_index(0, 0, g) == 0);
  CHECK(vec_index(1, 0, g) == 64);
  for (int k = 0; k < g.n; ++k)
    for (int l = 0; l < g.m; ++l) {
      const auto [kk, ll] = unvec_index(vec_index(k, l, g), g);
      CHECK(kk == k);
      CHECK(ll == l);
    }
  CHECK_THROWS_AS(vec_index(16, 0, g), std::out_of_range);
  CHECK_THROWS_AS(unvec_index(64 * 16, g), std::out_of_range);
}
