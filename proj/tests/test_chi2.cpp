#include <doctest.h>

#include "labscreen/chi2.hpp"
#include "labscreen/errors.hpp"
#include "oracles.hpp"

using namespace labscreen;

TEST_CASE("chi2_sf closed forms") {
  for (double x : {0.0, 0.1, 1.0, 3.5, 10.0, 40.0, 80.0}) {
    CHECK(chi2_sf(x, 2) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-13));
    CHECK(chi2_sf(x, 1) == doctest::Approx(std::erfc(std::sqrt(x / 2.0))).epsilon(1e-12));
    CHECK(chi2_sf(x, 4) == doctest::Approx(std::exp(-x / 2.0) * (1.0 + x / 2.0)).epsilon(1e-12));
  }
  CHECK(chi2_sf(0.0, 6) == 1.0);
  CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("chi2_sf against quadrature") {
  for (int df = 1; df <= 12; ++df) {
    for (double x = 0.0; x <= 60.0; x += 0.37) {
      CHECK(std::abs(chi2_sf(x, df) - oracle::chi2_sf(x, df)) < 1e-10);
    }
  }
}

TEST_CASE("incomplete gamma complements") {
  for (double a : {0.5, 1.0, 2.5, 7.0, 30.0}) {
    for (double x : {0.01, 0.5, 2.0, 9.0, 40.0}) {
      CHECK(regularized_gamma_p(a, x) + regularized_gamma_q(a, x) == doctest::Approx(1.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("chi2_sf domain") {
  CHECK_THROWS_AS(chi2_sf(-1.0, 3), Error);
  CHECK_THROWS_AS(chi2_sf(1.0, 0), Error);
}
