#include "mulab/models.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mulab {

DichotomyModel diagonal_model(const GrowthRate& g, double delay,
                              const std::vector<double>& stable_rates,
                              const std::vector<double>& unstable_rates,
                              const DichotomyConstants& constants, int resolution) {
    const int ns = static_cast<int>(stable_rates.size());
    const int nu = static_cast<int>(unstable_rates.size());
    const int n = ns + nu;
    if (n == 0) throw InvalidArgument("diagonal model needs at least one coordinate");
    Vector rates(n);
    for (int i = 0; i < ns; ++i) rates(i) = -stable_rates[static_cast<std::size_t>(i)];
    for (int j = 0; j < nu; ++j) rates(ns + j) = unstable_rates[static_cast<std::size_t>(j)];
    const Vector betas = rates.tail(nu);

    LinearDelaySystem sys(delay, n,
                          {{0.0, [g, rates](double t) -> Matrix {
                                return Matrix((g.log_deriv(t) * rates).asDiagonal());
                            }}},
                          "diagonal");

    DichotomyModel m{.sys = sys,
                     .growth = g,
                     .stable_projection = {},
                     .unstable_dim = nu,
                     .unstable_basis = {},
                     .unstable_backward = {},
                     .constants = constants,
                     .resolution = resolution,
                     .step = aligned_step(delay, delay / resolution),
                     .label = "diagonal"};

    // u_{s,j}(omega) = (mu(s + omega)/mu(s))^{beta_j} on unstable coordinate j.
    auto basis = [g, delay, resolution, ns, n, betas](double s) {
        std::vector<Segment> out;
        for (Eigen::Index j = 0; j < betas.size(); ++j) {
            Segment seg(delay, n, resolution);
            Matrix v = seg.values();
            for (int k = 0; k <= resolution; ++k)
                v(ns + j, k) = std::pow(g(s + seg.omega(k)) / g(s), betas(j));
            out.emplace_back(delay, std::move(v));
        }
        return out;
    };
    m.unstable_basis = basis;
    m.stable_projection = [basis, ns](double s, const Segment& phi) {
        const auto us = basis(s);
        if (us.empty()) return phi;
        Matrix v = phi.values();
        for (std::size_t j = 0; j < us.size(); ++j) {
            const auto row = ns + static_cast<Eigen::Index>(j);
            v.row(row) -= phi.values()(row, phi.resolution()) * us[j].values().row(row);
        }
        return Segment(phi.delay(), std::move(v));
    };
    m.unstable_backward = [g, betas](double t, double s) -> Matrix {
        const double ratio = g(t) / g(s);
        return Matrix(
            betas.unaryExpr([ratio](double b) { return std::pow(ratio, b); }).asDiagonal());
    };
    return m;
}

DichotomyModel scalar_stable_model(const GrowthRate& g, double alpha, double delay,
                                   int resolution) {
    const double N = ratio_bound_N(g, delay, uniform_grid(-50.0, 50.0, 10001));
    DichotomyConstants c{.K = std::pow(N, alpha), .alpha = alpha, .beta = 0.6, .theta = 0.0,
                         .nu = 0.0, .k_growth = 1.0, .a = 0.0, .eps = 0.1};
    auto m = diagonal_model(g, delay, {alpha}, {}, c, resolution);
    m.label = "scalar_stable";
    return m;
}

DichotomyModel scalar_unstable_model(const GrowthRate& g, double beta, double alpha,
                                     double delay, int resolution) {
    const double N = ratio_bound_N(g, delay, uniform_grid(-50.0, 50.0, 10001));
    DichotomyConstants c{.K = 2.0 * std::pow(N, alpha), .alpha = alpha, .beta = beta,
                         .theta = 0.0, .nu = 0.0, .k_growth = 1.0, .a = beta, .eps = 0.1};
    auto m = diagonal_model(g, delay, {}, {beta}, c, resolution);
    m.label = "scalar_unstable";
    return m;
}

DichotomyModel planar_saddle_model(const GrowthRate& g, const DichotomyConstants& declared,
                                   double delay, int resolution) {
    const double N = ratio_bound_N(g, delay, uniform_grid(-50.0, 50.0, 10001));
    DichotomyConstants c = declared;
    c.K = std::max(declared.K, 2.0 * std::pow(N, declared.alpha));
    c.a = std::max(declared.a, declared.beta);
    auto m = diagonal_model(g, delay, {declared.alpha}, {declared.beta}, c, resolution);
    m.label = "planar_saddle";
    return m;
}

DichotomyModel nonuniform_exp_model(double alpha, double theta, double theta_declared,
                                    double delay, int resolution) {
    const auto g = growth_rate_by_id("exp");
    const double N = std::exp(delay);
    LinearDelaySystem sys(delay, 1,
                          {{0.0, [alpha, theta](double t) {
                                return Matrix::Constant(
                                    1, 1, -alpha - theta * (std::sin(t) + t * std::cos(t)));
                            }}},
                          "nonuniform_exp");
    const double rate = alpha - theta_declared;
    DichotomyConstants c{.K = std::pow(N, rate), .alpha = rate, .beta = 0.6,
                         .theta = 2.0 * theta_declared, .nu = 0.0, .k_growth = 1.0, .a = 0.0,
                         .eps = std::max(2.0 * theta_declared, 0.1)};
    return DichotomyModel{.sys = sys,
                          .growth = g,
                          .stable_projection = [](double, const Segment& phi) { return phi; },
                          .unstable_dim = 0,
                          .unstable_basis = [](double) { return std::vector<Segment>{}; },
                          .unstable_backward = [](double, double) { return Matrix(0, 0); },
                          .constants = c,
                          .resolution = resolution,
                          .step = aligned_step(delay, delay / resolution),
                          .label = "nonuniform_exp"};
}

} // namespace mulab
