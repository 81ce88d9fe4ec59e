#include "mulab/errors.hpp"
#include "mulab/perturbation.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace mulab;
using Catch::Approx;

namespace {

EnvelopeParams params() { return {.delta = 2e-3, .gamma = 0.5, .lambda = 1e-3, .xi = 0.6, .eps = 0.1}; }

SaturationSpec planar_spec() {
    return {Vector{{0.0, 1.0}}, {{1, 0.0, 0.6}, {0, 0.37, -0.4}}};
}

} // namespace

TEST_CASE("saturation vanishes to first order at zero", "[perturbation]") {
    const auto g = growth_rate_by_id("exp");
    const auto pert = saturation_perturbation(g, 1.0, 16, params(), planar_spec());
    const Segment zero(1.0, 2, 16);
    for (double t : {-5.0, 0.0, 3.0}) {
        CHECK(pert.g(t, zero).norm() == 0.0);
        CHECK(pert.d2g(t, zero).norm() == 0.0);
    }
}

TEST_CASE("d2g matches finite differences of g", "[perturbation][property]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& g : builtin_catalogue()) {
        const auto pert = saturation_perturbation(g, 1.0, 16, params(), planar_spec());
        for (double t : {-3.0, -0.5, 0.7, 4.0}) {
            const double scale = 1.0 / mu_weight(t, g, 0.6, 0.1);
            const Segment phi(1.0, scale * Matrix::NullaryExpr(2, 17, [&] { return u(rng); }));
            const Segment dir(1.0, Matrix::NullaryExpr(2, 17, [&] { return u(rng); }));
            const double h = 1e-6 * scale;
            const Vector fd = (pert.g(t, phi + h * dir) - pert.g(t, phi - (h * dir))) / (2.0 * h);
            const Vector exact = pert.d2g(t, phi) * dir.flat();
            INFO(g.label() << " t=" << t);
            CHECK((fd - exact).cwiseAbs().maxCoeff() <= 1e-6 * std::max(exact.cwiseAbs().maxCoeff(), 1e-300) + 1e-18);
        }
    }
}

TEST_CASE("envelopes hold and the weighted one binds", "[perturbation][property]") {
    const auto times = uniform_grid(-8.0, 8.0, 33);
    for (const auto& g : builtin_catalogue()) {
        INFO(g.label());
        const auto pert = saturation_perturbation(g, 1.0, 16, params(), planar_spec());
        const auto rep = check_envelopes(pert, g, 1.0, 2, 16, times, 40, 9);
        CHECK(rep.pass());
        CHECK(rep.binding == "lipschitz_mu_norm");
        CHECK(rep.mu_norm.worst_ratio >= rep.sup_norm.worst_ratio);
        CHECK(rep.mu_norm.worst_ratio > 0.05);
    }
}

TEST_CASE("envelope check detects an oversized perturbation", "[perturbation]") {
    const auto g = growth_rate_by_id("exp");
    auto pert = saturation_perturbation(g, 1.0, 16, params(), planar_spec());
    auto base_g = pert.g;
    pert.g = [base_g](double t, const Segment& phi) { return Vector(10.0 * base_g(t, phi)); };
    const auto times = uniform_grid(-4.0, 4.0, 9);
    const auto rep = check_envelopes(pert, g, 1.0, 2, 16, times, 40, 2);
    CHECK_FALSE(rep.mu_norm.pass);
    CHECK_FALSE(rep.pass());
}

TEST_CASE("saturation spec validation", "[perturbation]") {
    const auto g = growth_rate_by_id("exp");
    CHECK_THROWS_AS(saturation_perturbation(g, 1.0, 8, params(), {Vector{{2.0}}, {}}), InvalidArgument);
    CHECK_THROWS_AS(saturation_perturbation(g, 1.0, 8, params(), {Vector{{1.0}}, {{0, 0.0, 0.7}, {0, 0.5, 0.7}}}),
                    InvalidArgument);
    CHECK_THROWS_AS(saturation_perturbation(g, 1.0, 8, params(), {Vector{{1.0}}, {{1, 0.0, 0.5}}}), InvalidArgument);
    CHECK_THROWS_AS(saturation_perturbation(g, 1.0, 8, params(), {Vector{{1.0}}, {{0, 1.5, 0.5}}}), InvalidArgument);
    CHECK_THROWS_AS(saturation_perturbation(g, 1.0, 8, params(), {Vector(0), {}}), InvalidArgument);
}
