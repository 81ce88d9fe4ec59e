#include "mulab/conjugacy.hpp"
#include "mulab/errors.hpp"
#include "mulab/models.hpp"
#include "mulab/perturbation.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

using namespace mulab;

namespace {

// Scalar unstable flow x' = 0.6 (mu'/mu) x, declared with theta = 0.1 so the
// core inequalities hold, and a saturation perturbation at half its ceilings.
ConjugacyProblem scalar_problem(const std::string& rate = "exp", int z_points = 61) {
    const auto g = growth_rate_by_id(rate);
    auto m = scalar_unstable_model(g, 0.6, 0.8, 1.0, 32);
    m.constants.theta = 0.1;
    ParamSet p;
    p.alpha = 0.8;
    p.beta = 0.6;
    p.theta = 0.1;
    p.nu = 0.0;
    p.eps = 0.1;
    p.a = m.constants.a;
    p.gamma = 0.5;
    p.q = 1.0;
    p.K = m.constants.K;
    p.k_growth = 1.0;
    p.N = model_ratio_bound(m);
    p.D = derived_constant_D(m.constants, p.N);
    const auto [lo, hi] = xi_window(p);
    p.xi = 0.5 * (lo + hi);
    p.delta = 0.5 * delta_ceiling(p);
    p.lambda = 0.5 * lambda_ceiling(p);
    auto pert = saturation_perturbation(g, 1.0, 32, {p.delta, p.gamma, p.lambda, p.xi, p.eps},
                                        {Vector{{1.0}}, {{0, 0.0, 0.7}, {0, 0.5, 0.3}}});
    ConjugacyProblem prob{m, pert, p, {}, {}};
    prob.grid = {.t_min = -2.0, .t_max = 2.0, .t_step = 0.25, .z_min = -3.0, .z_max = 3.0,
                 .z_points = z_points};
    return prob;
}

ConjugacyProblem unperturbed(ConjugacyProblem p) {
    p.pert = zero_perturbation(1);
    p.params.delta = 0.0;
    p.params.lambda = 0.0;
    return p;
}

const ConjugacyResult& solved_scalar() {
    static const auto res = picard_solve(scalar_problem());
    return res;
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace

TEST_CASE("without perturbation F vanishes and eta is zero", "[conjugacy]") {
    const auto p = unperturbed(scalar_problem());
    const auto eta = zero_field(p);
    for (double t : {-1.0, 0.3, 2.0}) {
        CHECK(sup_norm(F_apply(p, eta, t, Vector{{1.5}})) == 0.0);
        CHECK(max_abs(dF_db_apply(p, eta, t, Vector{{-0.7}})) == 0.0);
    }
    const auto res = picard_solve(p);
    CHECK(res.converged);
    CHECK(res.sweeps.size() == 1);
    CHECK(res.eta.norms.one_mu == 0.0);
    CHECK(invertibility_check(p, res.eta).margin == 1.0);
    CHECK(conjugacy_residual(p, res.eta, 1.5, -0.5, Vector{{2.0}}).raw <= 1e-6);
}

TEST_CASE("the zero orbit is fixed", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto eta = zero_field(p);
    for (double t : {-2.0, 0.0, 1.3}) CHECK(sup_norm(F_apply(p, eta, t, Vector{{0.0}})) == 0.0);
    const auto& res = solved_scalar();
    CHECK(conjugacy_residual(p, res.eta, 1.0, -1.0, Vector{{0.0}}).raw <= 1e-10);
}

TEST_CASE("F at eta = 0 matches an adaptive quadrature of the closed-form kernels",
          "[conjugacy][oracle]") {
    // x' = beta (mu'/mu) x has U(s) spanned by u_s(w) = (mu(s+w)/mu(s))^beta
    // and Q0(tau) p = p u_tau. So P0(tau) p starts at 0 with history -p u_tau,
    // and T0(t,tau) P0(tau) vanishes once t >= tau + r.
    const auto p = scalar_problem();
    const auto& g = p.model.growth;
    const double beta = 0.6, r = 1.0;
    const int m = p.model.resolution;
    const auto eta = zero_field(p);
    auto G = [&](double tau, double t, double b) {
        const Segment arg = Segment::from_function(r, 1, m, [&](double w) {
            return Vector::Constant(1, b * std::pow(g(tau + w) / g(t), beta));
        });
        return p.pert.g(tau, arg)(0);
    };
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    auto integrate = [](auto f, double a, double b) { return GK::integrate(f, a, b, 12, 1e-11); };
    for (double t : {-1.5, 0.0, 1.25}) {
        for (double b : {-2.5, 3.0}) {
            const double unstable = integrate(
                [&](double tau) { return std::pow(g(t) / g(tau), beta) * G(tau, t, b); }, t, t + 40.0);
            Matrix v(1, m + 1);
            for (int j = 0; j <= m; ++j) {
                const double u = t - r + j * r / m;
                const double stable =
                    u < t ? integrate([&](double tau) { return -std::pow(g(u) / g(tau), beta) * G(tau, t, b); },
                                      u, t)
                          : 0.0;
                v(0, j) = stable - unstable * std::pow(g(u) / g(t), beta);
            }
            const Segment oracle(r, v);
            const Segment got = F_apply(p, eta, t, Vector{{b}});
            INFO("t=" << t << " b=" << b);
            // The solver reads the history -p u_tau piecewise linearly between samples.
            CHECK(sup_norm(got - oracle) <= 1e-4 * sup_norm(oracle));
        }
    }
}

TEST_CASE("F at eta = 0 respects its sup-norm bound", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto eta = zero_field(p);
    const double bound = F_norm_bound(p.params) + p.trunc.tail_tol;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pick_t(-2.0, 2.0), pick_z(-3.0, 3.0);
    for (int k = 0; k < 12; ++k) {
        const double t = pick_t(rng);
        const Vector b = transport(p.model, t) * Vector{{pick_z(rng)}};
        CHECK(sup_norm(F_apply(p, eta, t, b)) <= bound);
    }
}

TEST_CASE("dF/db agrees with central differences of F", "[conjugacy][oracle]") {
    const auto p = scalar_problem();
    const auto& solved = solved_scalar().eta;
    const auto zero = zero_field(p);
    for (const EtaField* eta : {&zero, &solved}) {
        for (const auto& [t, z] : {std::pair{-1.0, 0.9}, std::pair{0.5, -1.7}, std::pair{1.75, 2.2}}) {
            const Vector b = transport(p.model, t) * Vector{{z}};
            const double h = 1e-4 * std::max(1.0, std::abs(b(0)));
            const Vector fd = (F_apply(p, *eta, t, b + Vector{{h}}).flat() -
                               F_apply(p, *eta, t, b - Vector{{h}}).flat()) /
                              (2.0 * h);
            const Matrix exact = dF_db_apply(p, *eta, t, b);
            INFO("t=" << t << " z=" << z);
            CHECK(max_abs(fd - exact.col(0)) <= 1e-3 * max_abs(exact));
        }
    }
}

TEST_CASE("the grid sweep and the pointwise operator agree at grid nodes", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto& eta = solved_scalar().eta;
    const SweepOperator op(p);
    const auto next = op.apply(eta);
    for (std::size_t i : {std::size_t{0}, std::size_t{7}, std::size_t{16}}) {
        const double t = eta.t_grid[i];
        for (Eigen::Index j : {Eigen::Index{3}, Eigen::Index{40}}) {
            const Vector b = transport(p.model, t) * eta.z_point(j);
            const Vector point = F_apply(p, eta, t, b).flat();
            CHECK(max_abs(point - next.values[i].col(j)) <= 1e-12 * max_abs(next.values[i]));
        }
    }
}

TEST_CASE("derivative of F obeys its weighted bound", "[conjugacy]") {
    const auto p = scalar_problem();
    const SweepOperator op(p);
    const auto first = op.apply(zero_field(p));
    CHECK(first.norms.derivative_mu <= dF_norm_bound(p.params));
    CHECK(first.norms.sup <= F_norm_bound(p.params) + p.trunc.tail_tol);
}

TEST_CASE("Picard iteration converges inside the ball", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto& res = solved_scalar();
    REQUIRE(res.converged);
    CHECK(res.sweeps.size() <= 25);
    CHECK(res.contraction_rate_theoretical == 0.5);
    CHECK(res.contraction_rate_measured <= res.contraction_rate_theoretical + 0.05);
    CHECK(res.eta.norms.one_mu <= p.params.q);
    CHECK(res.eta.norms.one_mu ==
          Catch::Approx(res.eta.norms.sup_mu + res.eta.norms.derivative_mu).epsilon(1e-15));
    CHECK(res.eta.norms.sup <= res.norm_bound);
    CHECK(res.eta.norms.sup > 0.0);
    CHECK(res.derivative_margin > 0.0);
    CHECK(res.derivative_margin <= 1.0);

    const SweepOperator op(p);
    CHECK(distance_one_mu(p, op.apply(res.eta), res.eta) <= 2.0 * SolverOptions{}.tol);
}

TEST_CASE("stored derivative matches differences of stored eta", "[conjugacy]") {
    const auto fine = picard_solve(scalar_problem("exp", 241));
    CHECK(derivative_fd_error(fine.eta) <= 1e-3);
    // Central differences are second order, so a coarser z axis is worse by about 4x per halving.
    const auto coarse = picard_solve(scalar_problem("exp", 121));
    const double ratio = derivative_fd_error(coarse.eta) / derivative_fd_error(fine.eta);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
}

TEST_CASE("conjugacy residual is driven down by eta", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto& res = solved_scalar();
    const auto zero = zero_field(p);
    const auto& tg = res.eta.t_grid;

    // On grid points eta is used without interpolation.
    for (const auto& [is, it, j] : {std::tuple{0, 8, 55}, std::tuple{4, 16, 5}, std::tuple{9, 13, 50}}) {
        const double s = tg[static_cast<std::size_t>(is)], t = tg[static_cast<std::size_t>(it)];
        const Vector b = transport(p.model, s) * res.eta.z_point(j);
        const auto with = conjugacy_residual(p, res.eta, t, s, b);
        const auto without = conjugacy_residual(p, zero, t, s, b);
        INFO("t=" << t << " s=" << s << " b=" << b(0));
        CHECK(with.raw <= 1e-2 * without.raw);
    }

    // Off grid, linear interpolation of eta in t and z sets the floor.
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> pick_s(-2.0, -1.0), gap(1.0, 3.0), pick_z(1.5, 3.0);
    double worst_with = 0.0, worst_without = 0.0;
    for (int k = 0; k < 8; ++k) {
        const double s = pick_s(rng);
        const double t = s + gap(rng);
        const Vector b = transport(p.model, s) * Vector{{pick_z(rng)}};
        const auto with = conjugacy_residual(p, res.eta, t, s, b);
        CHECK(with.weighted <= 5e-3);
        worst_with = std::max(worst_with, with.raw);
        worst_without = std::max(worst_without, conjugacy_residual(p, zero, t, s, b).raw);
    }
    CHECK(worst_with <= 0.1 * worst_without);
    CHECK_THROWS_AS(conjugacy_residual(p, res.eta, -1.0, 0.0, Vector{{1.0}}), TimeOrder);
}

TEST_CASE("residuals compose along an intermediate time", "[conjugacy][property]") {
    // e(t,s) <= e(t,tau) + L e(tau,s) with L the measured growth of T(t,tau)
    // on U, which bounds R(t,tau) up to the tiny Lipschitz constant of g.
    const auto p = scalar_problem();
    const auto& res = solved_scalar();
    const auto& m = p.model;
    for (const auto& [s, tau, t] : {std::tuple{-1.5, -0.8, 0.4}, std::tuple{0.0, 0.6, 1.8}}) {
        const Vector b{{1.3}};
        const Vector b_tau = m.unstable_backward(tau, s) * b;
        const double L =
            2.0 * sup_norm(solution_op_T(m.sys, t, tau, m.realize(tau, Vector{{1.0}}), m.step));
        const double whole = conjugacy_residual(p, res.eta, t, s, b).raw;
        const double split = conjugacy_residual(p, res.eta, t, tau, b_tau).raw +
                             L * conjugacy_residual(p, res.eta, tau, s, b).raw;
        CHECK(whole <= split + 1e-12);
    }
}

TEST_CASE("h^t is injective on the sampled grid", "[conjugacy]") {
    const auto p = scalar_problem();
    const auto rep = invertibility_check(p, solved_scalar().eta);
    CHECK(rep.monotone_checked);
    CHECK(rep.monotone);
    CHECK(rep.min_increment > 0.9);
    CHECK(rep.margin >= 1.0 / (1.0 + p.params.q) - 0.05);
    CHECK(rep.pass());
}

TEST_CASE("halving t step and tail tolerance leaves eta unchanged", "[conjugacy][refinement]") {
    auto base = scalar_problem();
    auto fine = base;
    fine.grid.t_step *= 0.5;
    fine.trunc.tail_tol *= 0.5;
    const SolverOptions opts;
    const double a = picard_solve(base, opts).eta.norms.sup_mu;
    const double b = picard_solve(fine, opts).eta.norms.sup_mu;
    CHECK(std::abs(a - b) <= 2.0 * opts.tol);
}

TEST_CASE("tails of slow rates cannot be truncated", "[conjugacy]") {
    // Power-law and logarithmic envelopes decay far too slowly in tau for
    // tail_tol = 1e-6 within a span of 200.
    for (const char* rate : {"log", "poly"}) {
        const auto p = scalar_problem(rate);
        CHECK_THROWS_AS(truncation_window(p, 0.0), TruncationUnreachable);
        CHECK_THROWS_AS(picard_solve(p), TruncationUnreachable);
    }
    auto loose = scalar_problem("poly");
    loose.trunc.tail_tol = 1e-2;
    loose.trunc.max_span = 1e4;
    const auto [lo, hi] = truncation_window(loose, 0.0);
    CHECK(lo <= -1.0);
    CHECK(hi > 0.0);
}

TEST_CASE("truncation windows certify the tail envelopes", "[conjugacy][property]") {
    const auto p = scalar_problem();
    const auto& g = p.model.growth;
    const auto& P = p.params;
    for (double t : {-2.0, 0.0, 1.5}) {
        const auto [lo, hi] = truncation_window(p, t);
        const double stable_tail = P.D * P.delta / P.alpha * std::pow(g(lo) / g(t), P.alpha);
        const double unstable_tail = P.D * P.delta / P.beta * std::pow(g(t) / g(hi), P.beta);
        CHECK(stable_tail <= p.trunc.tail_tol * (1.0 + 1e-9));
        CHECK(unstable_tail <= p.trunc.tail_tol * (1.0 + 1e-9));
    }
}

TEST_CASE("grid validation", "[conjugacy]") {
    auto p = scalar_problem();
    p.grid.t_min = -3.0;
    p.grid.t_max = 3.0;
    p.grid.t_step = 0.3;
    CHECK_THROWS_AS(zero_field(p), StepMisaligned);
    p = scalar_problem();
    p.grid.t_max = p.grid.t_min;
    CHECK_THROWS_AS(zero_field(p), DegenerateGrid);
    p = scalar_problem();
    p.grid.z_points = 2;
    CHECK_THROWS_AS(zero_field(p), DegenerateGrid);
}

TEST_CASE("eta fields round-trip through a file", "[conjugacy]") {
    const auto& eta = solved_scalar().eta;
    const auto path = std::filesystem::temp_directory_path() / "mulab_eta_roundtrip.bin";
    eta.save(path);
    const auto back = EtaField::load(path);
    std::filesystem::remove(path);
    REQUIRE(back.t_grid == eta.t_grid);
    REQUIRE(back.z_axis == eta.z_axis);
    CHECK(back.unstable_dim == eta.unstable_dim);
    for (std::size_t i = 0; i < eta.t_grid.size(); ++i) {
        CHECK(back.values[i] == eta.values[i]);
        CHECK(back.derivative[i] == eta.derivative[i]);
    }
    CHECK(back.norms.one_mu == eta.norms.one_mu);
}
