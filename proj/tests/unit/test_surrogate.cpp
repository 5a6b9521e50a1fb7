#include <doctest.h>

#include "../support/oracles.hpp"
#include "mmsim/surrogate.hpp"

#include <cmath>
#include <random>

using namespace mmsim;

TEST_CASE("occupancy of a moving body")
{
    const auto occ = occupancy_interval(10.0, 2.0, 1.0);
    REQUIRE(occ);
    CHECK(occ->start == doctest::Approx(4.5));
    CHECK(occ->end == doctest::Approx(5.5));
    CHECK_FALSE(occupancy_interval(-5.0, 2.0, 1.0));
    CHECK_FALSE(occupancy_interval(5.0, 0.0, 1.0));
    const auto sitting = occupancy_interval(0.5, 0.0, 1.0);
    REQUIRE(sitting);
    CHECK(std::isinf(sitting->end));
}

TEST_CASE("crossing ttc of a car and a walker arriving together")
{
    // 100 m at 8.333 m/s and 18 m at 1.5 m/s both arrive at 12 s.
    const auto ttc = crossing_ttc(100.0, 100.0 / 12.0, 2.25, 18.0, 1.5, 0.3);
    REQUIRE(ttc);
    const auto ref = oracle::crossing_ttc(100.0, 100.0 / 12.0, 2.25, 18.0, 1.5, 0.3);
    REQUIRE(ref);
    CHECK(*ttc == doctest::Approx(*ref).epsilon(1e-9));
    CHECK(*ttc < 12.0);
}

TEST_CASE("crossing ttc agrees with the extrapolation oracle")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> d(-5.0, 50.0), v(0.5, 15.0), h(0.2, 2.5), coin(0, 1);
    for (int i = 0; i < 300; ++i) {
        const double da = d(rng), db = d(rng), ha = h(rng), hb = h(rng);
        const double va = coin(rng) < 0.1 ? 0.0 : v(rng);
        const double vb = coin(rng) < 0.1 ? 0.0 : v(rng);
        const auto got = crossing_ttc(da, va, ha, db, vb, hb);
        const auto ref = oracle::crossing_ttc(da, va, ha, db, vb, hb);
        REQUIRE(got.has_value() == ref.has_value());
        if (got) CHECK(std::abs(*got - *ref) < 1e-6);
    }
}

TEST_CASE("following ttc")
{
    CHECK(*following_ttc(20.0, 12.0, 8.0) == doctest::Approx(5.0));
    CHECK_FALSE(following_ttc(20.0, 8.0, 12.0));
    CHECK_FALSE(following_ttc(20.0, 8.0, 8.0));
    CHECK(*following_ttc(0.0, 9.0, 8.0) == 0.0);
}

TEST_CASE("drac closed form, cap and oracle")
{
    CHECK(drac(20.0, 12.0, 8.0).value == doctest::Approx(0.4));
    CHECK(drac(20.0, 8.0, 12.0).value == 0.0);
    const auto sat = drac(0.0, 10.0, 0.0);
    CHECK(sat.saturated);
    CHECK(sat.value == kDracCap);
    CHECK(drac(0.1, 20.0, 0.0).saturated);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> g(0.5, 80.0), v(0.0, 20.0);
    for (int i = 0; i < 300; ++i) {
        const double gap = g(rng), vf = v(rng), vl = v(rng);
        CHECK(std::abs(drac(gap, vf, vl).value - oracle::drac(gap, vf, vl)) < 1e-6);
    }
}
