#include "mulab/dde.hpp"
#include "mulab/errors.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace mulab;
using Catch::Approx;

namespace {

DelayTerm constant_term(double lag, double a) {
    return {lag, [a](double) { return Matrix::Constant(1, 1, a); }};
}

LinearDelaySystem decay_ode() { return LinearDelaySystem(1.0, 1, {constant_term(0.0, -1.0)}); }

Segment ones(int m) { return Segment::constant(1.0, m, Vector::Ones(1)); }

// x'(t) = -0.5 x(t) - 0.3 x(t - 1) + 0.4 cos(t) x(t - 0.5), a mixed-lag system.
LinearDelaySystem mixed_lag() {
    return LinearDelaySystem(
        1.0, 1,
        {constant_term(0.0, -0.5), constant_term(1.0, -0.3),
         {0.5, [](double t) { return Matrix::Constant(1, 1, 0.4 * std::cos(t)); }}});
}

Perturbation bounded_nonlinearity() {
    Perturbation p;
    p.g = [](double t, const Segment& phi) {
        const double x = interpolate(phi, -0.5)(0);
        return Vector{{0.2 * std::cos(t) * std::sin(x) * x}};
    };
    p.d2g = [](double, const Segment& phi) { return Matrix::Zero(1, static_cast<Eigen::Index>(phi.flat_size())); };
    p.label = "test";
    return p;
}

} // namespace

TEST_CASE("exponential decay without lag", "[dde]") {
    const auto traj = solve_linear(decay_ode(), 0.0, ones(64), 1.0, 1.0 / 64);
    CHECK(traj(1.0)(0) == Approx(std::exp(-1.0)).margin(1e-6));
    const Segment seg = solution_op_T(decay_ode(), 2.0, 0.0, ones(64), 1.0 / 64);
    for (int j = 0; j <= 64; ++j)
        CHECK(seg.sample(j)(0) == Approx(std::exp(-(2.0 + seg.omega(j)))).margin(1e-6));
}

TEST_CASE("zero data gives the zero solution", "[dde]") {
    const auto sys = mixed_lag();
    const Segment zero(1.0, 1, 32);
    CHECK(sup_norm(solution_op_T(sys, 3.3, 0.1, zero, 1.0 / 32)) == 0.0);
    CHECK(sup_norm(solve_perturbed_R(sys, bounded_nonlinearity(), 3.3, 0.1, zero, 1.0 / 32)) == 0.0);
    CHECK(sup_norm(fundamental_jump(sys, 2.0, 0.0, Vector::Zero(1), 32, 1.0 / 32)) == 0.0);
}

TEST_CASE("pure delay by the method of steps", "[dde]") {
    // x'(t) = -x(t - 1), x = 1 on [-1, 0]: x = 1 - t on [0, 1] and
    // x = -2 (t - 1) + (t^2 - 1)/2 on [1, 2], both integrated by hand.
    const LinearDelaySystem sys(1.0, 1, {constant_term(1.0, -1.0)});
    const auto traj = solve_linear(sys, 0.0, ones(32), 2.0, 1.0 / 32);
    for (double t = 0.0; t <= 1.0; t += 0.05) CHECK(traj(t)(0) == Approx(1.0 - t).margin(1e-12));
    for (double t = 1.0; t <= 2.0; t += 0.05)
        CHECK(traj(t)(0) == Approx(-2.0 * (t - 1.0) + (t * t - 1.0) / 2.0).margin(1e-10));
}

TEST_CASE("solution operator identities", "[dde]") {
    const auto sys = mixed_lag();
    const auto phi = Segment::from_function(1.0, 1, 64, [](double w) { return Vector{{std::cos(2.0 * w)}}; });
    const Segment same = solution_op_T(sys, 0.7, 0.7, phi, 1.0 / 64);
    CHECK((same.values() - phi.values()).norm() == 0.0);
    CHECK_THROWS_AS(solution_op_T(sys, 0.0, 1.0, phi, 1.0 / 64), TimeOrder);
    CHECK_THROWS_AS(fundamental_jump(sys, 0.0, 1.0, Vector::Ones(1), 64, 1.0 / 64), TimeOrder);
    CHECK_THROWS_AS(solve_perturbed_R(sys, bounded_nonlinearity(), 0.0, 1.0, phi, 1.0 / 64), TimeOrder);
}

TEST_CASE("step alignment and overflow", "[dde]") {
    CHECK_THROWS_AS(solve_linear(decay_ode(), 0.0, ones(8), 1.0, 0.3), StepMisaligned);
    CHECK_NOTHROW(solve_linear(decay_ode(), 0.0, ones(8), 1.0, 0.25));
    CHECK_NOTHROW(require_aligned_step(1.0, 1.0 / 3.0));
    CHECK(aligned_step(1.0, 0.3) == Approx(0.25));
    const LinearDelaySystem blowup(1.0, 1, {constant_term(0.0, 50.0)});
    CHECK_THROWS_AS(solve_linear(blowup, 0.0, ones(8), 40.0, 0.25), NonFiniteState);
}

TEST_CASE("fundamental jump", "[dde]") {
    const auto sys = decay_ode();
    const C0Segment at_s = fundamental_jump(sys, 1.5, 1.5, Vector{{2.0}}, 16, 1.0 / 16);
    CHECK(sup_norm(at_s.body) == 0.0);
    CHECK(at_s.jump(0) == 2.0);
    const C0Segment later = fundamental_jump(sys, 3.5, 1.5, Vector{{1.0}}, 64, 1.0 / 64);
    for (int j = 0; j <= 64; ++j)
        CHECK(later.body.sample(j)(0) == Approx(std::exp(-(2.0 + later.body.omega(j)))).margin(1e-6));

    // Before one delay has elapsed the jump is still visible inside the segment.
    const LinearDelaySystem lagged(1.0, 1, {constant_term(1.0, -1.0)});
    const C0Segment young = fundamental_jump(lagged, 0.5, 0.0, Vector{{1.0}}, 8, 1.0 / 8);
    for (int j = 0; j <= 8; ++j) {
        const double u = 0.5 + young.body.omega(j);
        CHECK(young.body.sample(j)(0) == (u < 0.0 ? 0.0 : 1.0));
    }
    // and the lag term sees the jump only after one delay: x = 1 - (t - 1) on [1, 2].
    const auto traj = solve_linear(lagged, 0.0, C0Segment(JumpSegment(1.0, 8, Vector{{1.0}})), 2.0, 1.0 / 8);
    CHECK(traj(0.5)(0) == Approx(1.0));
    CHECK(traj(1.75)(0) == Approx(0.25).margin(1e-12));
}

TEST_CASE("unperturbed reduction", "[dde]") {
    const auto sys = mixed_lag();
    const auto phi = Segment::from_function(1.0, 1, 64, [](double w) { return Vector{{1.0 + w * w}}; });
    const Segment T = solution_op_T(sys, 4.2, 0.3, phi, 1.0 / 64);
    const Segment R = solve_perturbed_R(sys, zero_perturbation(1), 4.2, 0.3, phi, 1.0 / 64);
    CHECK(sup_norm(T - R) <= 1e-8);
}

TEST_CASE("variation of constants", "[dde]") {
    // Oracle: Simpson quadrature over tau of T0(t, tau) X0 g(tau, x_tau), with
    // the integrand cut at t + omega_j per sample (the jump location).
    const auto sys = mixed_lag();
    const auto pert = bounded_nonlinearity();
    const int m = 16;
    const double h = 1.0 / 64;
    const double s = 0.0, t = 2.5;
    const auto phi = Segment::from_function(1.0, 1, m, [](double w) { return Vector{{1.0 + 0.5 * w}}; });
    const auto traj = solve_perturbed(sys, pert, s, phi, t, h);
    const Segment R = traj.segment_at(t);
    const Segment T = solution_op_T(sys, t, s, phi, h);

    Vector integral = Vector::Zero(m + 1);
    for (int j = 0; j <= m; ++j) {
        const double upper = t + R.omega(j);
        const int panels = 128;
        const double dt = (upper - s) / panels;
        double acc = 0.0;
        for (int i = 0; i <= panels; ++i) {
            const double tau = s + i * dt;
            const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            const double gval = pert.g(tau, traj.segment_at(tau))(0);
            const C0Segment k = fundamental_jump(sys, t, tau, Vector::Ones(1), m, h);
            const double kj = (tau == t && j == m) ? k.value_at_zero()(0) : k.body.sample(j)(0);
            acc += w * kj * gval;
        }
        integral(j) = acc * dt / 3.0;
    }
    const Vector predicted = T.values().row(0).transpose() + integral;
    const Vector actual = R.values().row(0).transpose();
    CHECK((predicted - actual).cwiseAbs().maxCoeff() <= 1e-4 * actual.cwiseAbs().maxCoeff());
}

TEST_CASE("cocycle and linearity", "[dde][property]") {
    const auto sys = mixed_lag();
    const auto pert = bounded_nonlinearity();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int m = 64;
    const double h = 1.0 / 64;
    for (int trial = 0; trial < 8; ++trial) {
        const double s = -2.0 + 2.0 * u(rng);
        const double tau = s + 2.0 * u(rng);
        const double t = tau + 2.0 * u(rng);
        const double a = 2.0 * u(rng) - 1.0, b = 2.0 * u(rng) - 1.0;
        const double k1 = 1.0 + 3.0 * u(rng), k2 = 3.0 * u(rng);
        const auto phi = Segment::from_function(1.0, 1, m, [&](double w) { return Vector{{std::sin(k1 * w)}}; });
        const auto psi = Segment::from_function(1.0, 1, m, [&](double w) { return Vector{{std::cos(k2 * w) + w}}; });

        const Segment direct = solution_op_T(sys, t, s, phi, h);
        const Segment composed = solution_op_T(sys, t, tau, solution_op_T(sys, tau, s, phi, h), h);
        CHECK(sup_norm(direct - composed) <= 1e-4);

        const Segment rd = solve_perturbed_R(sys, pert, t, s, phi, h);
        const Segment rc = solve_perturbed_R(sys, pert, t, tau, solve_perturbed_R(sys, pert, tau, s, phi, h), h);
        CHECK(sup_norm(rd - rc) <= 1e-4);

        const Segment lin = solution_op_T(sys, t, s, a * phi + b * psi, h);
        const Segment sum = a * solution_op_T(sys, t, s, phi, h) + b * solution_op_T(sys, t, s, psi, h);
        CHECK(sup_norm(lin - sum) <= 1e-12);
    }
}

TEST_CASE("classical fourth order on a nonautonomous ODE", "[dde]") {
    // x' = cos(t) x has x(t) = exp(sin t - sin s) x(s).
    const LinearDelaySystem sys(1.0, 1, {{0.0, [](double t) { return Matrix::Constant(1, 1, std::cos(t)); }}});
    const double s = 0.0, t = 4.0;
    const double exact = std::exp(std::sin(t) - std::sin(s));
    auto error = [&](double h) { return std::abs(solve_linear(sys, s, ones(8), t, h)(t)(0) - exact); };
    const double ratio = error(1.0 / 10) / error(1.0 / 20);
    CHECK(ratio >= 15.0);
    CHECK(ratio <= 17.0);
}
