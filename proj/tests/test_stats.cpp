#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latmesh/stats.hpp"

using namespace latmesh::stats;

TEST_CASE("incomplete beta basics") {
    CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
    // I_x(1,1) is the identity
    for (double x : {0.1, 0.25, 0.5, 0.9})
        CHECK(incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-12));
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    for (double x : {0.05, 0.3, 0.7, 0.95})
        CHECK(incomplete_beta(2.5, 4.0, x) ==
              doctest::Approx(1.0 - incomplete_beta(4.0, 2.5, 1.0 - x)).epsilon(1e-12));
    // I_x(1,b) = 1 - (1-x)^b, closed form
    CHECK(incomplete_beta(1, 5, 0.2) ==
          doctest::Approx(1.0 - std::pow(0.8, 5)).epsilon(1e-12));
}

TEST_CASE("student t cdf matches table values") {
    CHECK(student_t_cdf(0.0, 5) == doctest::Approx(0.5).epsilon(1e-12));
    // classic two-sided 5% critical values: P(T <= t) = 0.975
    CHECK(student_t_cdf(12.706, 1) == doctest::Approx(0.975).epsilon(1e-4));
    CHECK(student_t_cdf(2.228, 10) == doctest::Approx(0.975).epsilon(1e-4));
    CHECK(student_t_cdf(2.045, 29) == doctest::Approx(0.975).epsilon(1e-4));
    CHECK(student_t_cdf(1.984, 100) == doctest::Approx(0.975).epsilon(1e-4));
    // symmetry
    for (double t : {0.5, 1.3, 2.7}) {
        CHECK(student_t_cdf(t, 7) + student_t_cdf(-t, 7) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    // t(df -> inf) approaches the normal
    CHECK(student_t_cdf(1.96, 100000) == doctest::Approx(normal_cdf(1.96)).epsilon(1e-4));
    CHECK_THROWS_AS(student_t_cdf(1.0, 0), std::invalid_argument);
}

TEST_CASE("normal cdf matches table values") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-9));
    CHECK(normal_cdf(-1.959963985) == doctest::Approx(0.025).epsilon(1e-9));
    CHECK(normal_cdf(3.0) == doctest::Approx(0.9986501).epsilon(1e-6));
}
