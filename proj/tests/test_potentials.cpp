#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "balloc/potentials.hpp"
#include "balloc/rng.hpp"

using namespace balloc;

namespace {

NormalizedLoads random_y(std::size_t n, double scale, Rng& rng) {
  std::vector<double> y(n);
  double sum = 0;
  for (auto& v : y) {
    v = (rng.next_double() - 0.5) * scale;
    sum += v;
  }
  for (auto& v : y) v -= sum / static_cast<double>(n);
  std::sort(y.begin(), y.end(), std::greater<double>());
  return {y};
}

}  // namespace

TEST_CASE("gamma potential") {
  CHECK(gamma_potential({{0, 0, 0, 0}}, 0.7) == 8.0);  // 2n on a flat vector

  SUBCASE("hand value") {
    const double g = gamma_potential({{1, -1}}, std::log(2.0));
    CHECK(g == doctest::Approx(5.0).epsilon(1e-12));  // 2 + 1/2 + 1/2 + 2
  }

  SUBCASE("always at least 2n") {
    Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t n = 2 + rng.next_below(20);
      const auto y = random_y(n, 10.0, rng);
      CHECK(gamma_potential(y, 0.5) >= 2.0 * static_cast<double>(n));
    }
  }

  SUBCASE("permutation invariance") {
    CHECK(gamma_potential({{2, -1, -1}}, 0.3) ==
          gamma_potential({{-1, 2, -1}}, 0.3));
  }

  SUBCASE("overflow sentinel") {
    CHECK(gamma_potential({{2000.0, -2000.0}}, 1.0) ==
          std::numeric_limits<double>::infinity());
    CHECK(std::isfinite(gamma_potential({{600.0, -600.0}}, 1.0)));
  }

  SUBCASE("convex in each coordinate (finite differences)") {
    Rng rng(17);
    for (int rep = 0; rep < 3; ++rep) {
      auto y = random_y(6, 4.0, rng);
      const double h = 1e-4;
      for (std::size_t i = 0; i < y.y.size(); ++i) {
        auto lo = y, hi = y;
        lo.y[i] -= h;
        hi.y[i] += h;
        const double second_diff = gamma_potential(hi, 0.8) -
                                   2.0 * gamma_potential(y, 0.8) +
                                   gamma_potential(lo, 0.8);
        CHECK(second_diff >= -1e-6);
      }
    }
  }
}

TEST_CASE("layered constants") {
  SUBCASE("derived schedule") {
    const auto cfg = layered_constants(1.0, 1.0, 1.0, 0.1, 1024);
    CHECK(cfg.C == 6.0);
    CHECK(cfg.v == 36.0);  // max(log 12, 36)
    CHECK(cfg.z(1) == doctest::Approx(1800.0));
    CHECK(cfg.z(0) == 0.0);
    CHECK(cfg.alpha1 == doctest::Approx(84.0 * 0.1));
    CHECK(cfg.derived_mode);
    CHECK_FALSE(cfg.schedule_feasible());  // desk-scale n is far too small
  }

  SUBCASE("exploratory schedule") {
    const auto cfg = exploratory_constants(2.0, 0.5, 256);
    CHECK(cfg.z(1) == doctest::Approx(20.0));
    CHECK(cfg.z(2) == doctest::Approx(40.0));
    CHECK(cfg.k(1) == 2);  // n^{1/7} cap bites at n = 256
    CHECK_FALSE(cfg.derived_mode);
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(layered_constants(1, 1, 0.0, 0.1, 64), ValidationError);
    CHECK_THROWS_AS(layered_constants(1, 1, 1.0, 1.5, 64), ValidationError);
    CHECK_THROWS_AS(exploratory_constants(0.5, 0.5, 64), ValidationError);
  }
}

TEST_CASE("layered potentials") {
  const auto cfg = exploratory_constants(2.0, 0.5, 256);

  SUBCASE("flat vector clips to n") {
    const NormalizedLoads y{{0, 0, 0, 0, 0}};
    for (int j : {1, 2, 3}) {
      CHECK(phi_j(y, j, cfg) == 5.0);
      CHECK(psi_j(y, j, cfg) == 5.0);
    }
  }

  SUBCASE("hand value at j=1") {
    const double z1 = cfg.z(1);
    const NormalizedLoads y{{z1 + 1.0, -(z1 + 1.0)}};
    CHECK(phi_j(y, 1, cfg) == doctest::Approx(std::exp(0.5 * 2.0 * 1.0) + 1.0).epsilon(1e-12));
  }

  SUBCASE("psi dominates phi (alpha1 > alpha2)") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      const auto y = random_y(8, 60.0, rng);
      for (int j : {0, 1}) CHECK(psi_j(y, j, cfg) >= phi_j(y, j, cfg));
    }
  }

  SUBCASE("partial variants bracket the full ones") {
    Rng rng(6);
    for (int rep = 0; rep < 100; ++rep) {
      const auto y = random_y(10, 80.0, rng);
      for (int j : {0, 1, 2}) {
        const double dot = dot_phi_j(y, j, cfg);
        const double full = phi_j(y, j, cfg);
        CHECK(dot >= 0.0);
        CHECK(dot <= full);
        CHECK(full <= dot + 10.0);
        CHECK(full >= 10.0);  // each bin contributes at least 1
        CHECK(psi_j(y, j, cfg) >= 10.0);
        CHECK(dot_psi_j(y, j, cfg) <= psi_j(y, j, cfg));
      }
    }
  }

  SUBCASE("everything below z_j gives an empty partial sum") {
    const NormalizedLoads y{{1.0, -1.0}};
    CHECK(dot_phi_j(y, 1, cfg) == 0.0);  // z_1 = 20
  }

  SUBCASE("a bin exactly at z_j contributes 1") {
    const NormalizedLoads y{{20.0, -20.0}};
    CHECK(dot_phi_j(y, 1, cfg) == 1.0);
  }

  SUBCASE("raising any load never lowers phi_j") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
      auto y = random_y(6, 50.0, rng);
      const double before = phi_j(y, 1, cfg);
      y.y[rng.next_below(6)] += 0.5 + rng.next_double();
      CHECK(phi_j(y, 1, cfg) >= before);
    }
  }
}
