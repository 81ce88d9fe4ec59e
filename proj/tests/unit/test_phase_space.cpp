#include "mulab/errors.hpp"
#include "mulab/phase_space.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace mulab;
using Catch::Approx;

TEST_CASE("sup norm", "[phase_space]") {
    CHECK(sup_norm(Segment(1.0, 2, 8)) == 0.0);
    CHECK(sup_norm(Segment::constant(1.0, 8, Vector{{3.0, -4.0}})) == 4.0);
    const auto ramp = Segment::from_function(1.0, 1, 100, [](double w) { return Vector{{w}}; });
    CHECK(sup_norm(ramp) == Approx(1.0));
}

TEST_CASE("mu norm", "[phase_space]") {
    const auto g = growth_rate_by_id("exp");
    const auto unit = Segment::constant(1.0, 16, Vector{{1.0, -0.5}});
    const auto s = Segment::from_function(1.0, 1, 16, [](double w) { return Vector{{2.0 + w}}; });
    CHECK(mu_norm(s, 0.0, g, 0.6, 0.1) == sup_norm(s));
    // mu(1)^{-0.7} and mu(-1)^{+0.7}, both e^{-0.7}
    CHECK(mu_norm(unit, 1.0, g, 0.6, 0.1) == Approx(0.4965853037914095).epsilon(1e-14));
    CHECK(mu_norm(unit, -1.0, g, 0.6, 0.1) == Approx(0.4965853037914095).epsilon(1e-14));
    CHECK(std::pow(g(-1.0), -(-1.0) * 0.7) == Approx(std::exp(-0.7)));
}

TEST_CASE("mu norm is homogeneous and reduces to sup at 0", "[phase_space][property]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (const auto& g : builtin_catalogue()) {
        for (int trial = 0; trial < 50; ++trial) {
            Matrix v = Matrix::NullaryExpr(2, 13, [&] { return u(rng); });
            const Segment s(0.7, v);
            const double c = u(rng), t = 4.0 * u(rng);
            CHECK(mu_norm(s, 0.0, g, 0.55, 0.1) == sup_norm(s));
            CHECK(mu_norm(c * s, t, g, 0.55, 0.1) ==
                  Approx(std::abs(c) * mu_norm(s, t, g, 0.55, 0.1)).epsilon(1e-13));
        }
    }
}

TEST_CASE("interpolation", "[phase_space]") {
    const auto ramp = Segment::from_function(1.0, 1, 2, [](double w) { return Vector{{w}}; });
    CHECK(interpolate(ramp, -0.25)(0) == Approx(-0.25));
    CHECK(interpolate(ramp, -1.0)(0) == -1.0);
    CHECK(interpolate(ramp, 0.0)(0) == 0.0);
    CHECK_THROWS_AS(interpolate(ramp, 0.1), OutOfDomain);
    CHECK_THROWS_AS(interpolate(ramp, -1.5), OutOfDomain);

    const auto c = Segment::constant(2.0, 4, Vector{{1.5, -2.0}});
    const Vector mid = interpolate(c, -0.25);
    CHECK(mid(0) == 1.5);
    CHECK(mid(1) == -2.0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Segment rnd(1.0, Matrix::NullaryExpr(3, 9, [&] { return u(rng); }));
    for (int j = 0; j <= 8; ++j) CHECK((interpolate(rnd, rnd.omega(j)) - rnd.sample(j)).norm() == 0.0);
}

TEST_CASE("refinement of a smooth segment converges quadratically", "[phase_space][property]") {
    // sup of sin(3 w + 2) on [-1, 0] is 1 at w = (pi/2 - 2)/3, between nodes.
    auto f = [](double w) { return Vector{{std::sin(3.0 * w + 2.0)}}; };
    double exact = 1.0;
    for (int m : {8, 16, 32, 64, 128}) {
        const double err = exact - sup_norm(Segment::from_function(1.0, 1, m, f));
        CHECK(err >= 0.0);
        CHECK(err * m * m <= 12.0);
    }
}

TEST_CASE("jump segments", "[phase_space]") {
    const JumpSegment x0(1.0, 8, Vector{{2.0, -1.0}});
    CHECK(sup_norm(x0.base()) == 0.0);
    const C0Segment c(x0);
    CHECK(c.value_at_zero()(0) == 2.0);
    CHECK(sup_norm(c) == 2.0);
    const C0Segment mixed(Segment::constant(1.0, 8, Vector{{-1.0, 0.0}}), Vector{{1.0, 0.0}});
    CHECK(mixed.value_at_zero()(0) == 0.0);
    CHECK(sup_norm(mixed) == 1.0);
}

TEST_CASE("segment arithmetic checks shapes", "[phase_space]") {
    const Segment a(1.0, 2, 8), b(1.0, 2, 16);
    CHECK_THROWS_AS(a + b, InvalidArgument);
    CHECK_THROWS_AS(Segment(0.0, 1, 4), NonPositiveDelay);
    const auto f = Segment::constant(1.0, 4, Vector{{1.0, 2.0}});
    const auto back = Segment::from_flat(1.0, 2, f.flat());
    CHECK((back.values() - f.values()).norm() == 0.0);
}
