#include "mulab/perturbation.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mulab {

double envelope_E(const GrowthRate& g, double gamma, double eps, double t) {
    return g.log_deriv(t) * g.signed_power(t, -(gamma + eps));
}

namespace {

// Row vector L with l(phi) = L phi.flat().
Eigen::RowVectorXd tap_functional(double delay, int dim, int resolution,
                                  const std::vector<PointTap>& taps) {
    Eigen::RowVectorXd L =
        Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim) * (resolution + 1));
    for (const auto& tap : taps) {
        const auto [j, w] = interpolation_cell(delay, resolution, -tap.lag);
        L(j * dim + tap.component) += tap.weight * (1.0 - w);
        if (w > 0.0) L((j + 1) * dim + tap.component) += tap.weight * w;
    }
    return L;
}

double saturation(double x) { return x * x / (1.0 + x * x); }
double saturation_slope(double x) { return 2.0 * x / ((1.0 + x * x) * (1.0 + x * x)); }

} // namespace

Perturbation saturation_perturbation(const GrowthRate& g, double delay, int resolution,
                                     const EnvelopeParams& params, const SaturationSpec& spec) {
    const int dim = static_cast<int>(spec.direction.size());
    if (dim == 0) throw InvalidArgument("perturbation direction is empty");
    if (spec.direction.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
        throw InvalidArgument("perturbation direction must have max-norm <= 1");
    double total = 0.0;
    for (const auto& tap : spec.taps) {
        if (tap.component < 0 || tap.component >= dim)
            throw InvalidArgument("tap component out of range");
        if (tap.lag < 0.0 || tap.lag > delay) throw InvalidArgument("tap lag outside [0, r]");
        total += std::abs(tap.weight);
    }
    if (total > 1.0 + 1e-12)
        throw InvalidArgument("tap weights must sum to at most 1 in absolute value");

    const Eigen::RowVectorXd L = tap_functional(delay, dim, resolution, spec.taps);
    const Vector v = spec.direction;
    auto scale = [g, params](double t) {
        const double cap = 0.5 * params.lambda * g.signed_power(t, -(params.xi - params.eps));
        return envelope_E(g, params.gamma, params.eps, t) * std::min(params.delta, cap);
    };
    auto rho = [g, params](double t) { return g.signed_power(t, -(params.xi + params.eps)); };

    Perturbation p;
    p.params = params;
    p.label = "quadratic_saturation";
    p.g = [=](double t, const Segment& phi) -> Vector {
        const double x = rho(t) * L.dot(phi.flat());
        return scale(t) * saturation(x) * v;
    };
    p.d2g = [=](double t, const Segment& phi) -> Matrix {
        const double r = rho(t);
        const double x = r * L.dot(phi.flat());
        return (scale(t) * saturation_slope(x) * r) * (v * L);
    };
    return p;
}

EnvelopeReport check_envelopes(const Perturbation& pert, const GrowthRate& g, double delay,
                               int dim, int resolution, std::span<const double> times,
                               int pairs_per_time, std::uint64_t seed) {
    EnvelopeReport rep;
    rep.sup_norm.name = "lipschitz_sup_norm";
    rep.mu_norm.name = "lipschitz_mu_norm";
    rep.derivative.name = "derivative_mu_norm";
    const auto& P = pert.params;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), decade(-2.0, 2.0);

    const Segment zero(delay, dim, resolution);
    for (double t : times) {
        if (pert.g(t, zero).cwiseAbs().maxCoeff() != 0.0) rep.zero_at_origin = false;
        if (pert.d2g(t, zero).cwiseAbs().maxCoeff() != 0.0) rep.zero_at_origin = false;
        const double E = envelope_E(g, P.gamma, P.eps, t);
        const double rho = mu_weight(t, g, P.xi, P.eps);
        const double dE = E * g.signed_power(t, -2.0 * P.xi);
        for (int k = 0; k < pairs_per_time; ++k) {
            // Amplitudes spread over four decades around the saturation scale 1/rho.
            auto noise = [&](double amp) {
                return Segment(delay, amp * Matrix::NullaryExpr(dim, resolution + 1,
                                                                [&] { return u(rng); }));
            };
            // Even k: a nearby pair, exercising the Lipschitz branch of the min.
            const Segment phi = noise(std::pow(10.0, decade(rng)) / rho);
            const Segment psi = k % 2 ? noise(std::pow(10.0, decade(rng)) / rho)
                                      : phi + noise(std::pow(10.0, decade(rng) - 2.0) / rho);
            const double diff = (pert.g(t, phi) - pert.g(t, psi)).cwiseAbs().maxCoeff();
            const double dist = sup_norm(phi - psi);
            if (dist == 0.0) continue;
            const double env_sup = P.delta * std::min(1.0, dist) * E;
            const double env_mu = P.delta * std::min(1.0, dist * rho) * E;
            if (env_sup > 0.0)
                rep.sup_norm.worst_ratio = std::max(rep.sup_norm.worst_ratio, diff / env_sup);
            if (env_mu > 0.0)
                rep.mu_norm.worst_ratio = std::max(rep.mu_norm.worst_ratio, diff / env_mu);
            // Operator norm (sup in, max out) of a matrix on flat samples is its max row sum.
            const double ddiff =
                (pert.d2g(t, phi) - pert.d2g(t, psi)).cwiseAbs().rowwise().sum().maxCoeff();
            const double env_d = P.lambda * std::min(1.0, dist * rho) * dE;
            if (env_d > 0.0)
                rep.derivative.worst_ratio = std::max(rep.derivative.worst_ratio, ddiff / env_d);
        }
    }
    for (auto* c : {&rep.sup_norm, &rep.mu_norm, &rep.derivative}) c->pass = c->worst_ratio <= 1.0;
    rep.binding = rep.mu_norm.worst_ratio >= rep.sup_norm.worst_ratio ? rep.mu_norm.name
                                                                      : rep.sup_norm.name;
    return rep;
}

} // namespace mulab
