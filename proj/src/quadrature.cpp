#include "mulab/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

namespace mulab {

const std::vector<std::pair<double, double>>& gauss_legendre_16() {
    static const auto table = [] {
        using rule = boost::math::quadrature::gauss<double, 16>;
        const auto& x = rule::abscissa();
        const auto& w = rule::weights();
        std::vector<std::pair<double, double>> out;
        // Boost stores the nonnegative half; 16 is even so there is no zero node.
        for (std::size_t i = x.size(); i-- > 0;) out.emplace_back(-x[i], w[i]);
        for (std::size_t i = 0; i < x.size(); ++i) out.emplace_back(x[i], w[i]);
        return out;
    }();
    return table;
}

std::vector<QuadratureNode> mu_panel(const GrowthRate& g, double a, double b) {
    const double ua = g(a), ub = g(b);
    const double mid = 0.5 * (ua + ub), half = 0.5 * (ub - ua);
    std::vector<QuadratureNode> out;
    out.reserve(16);
    for (const auto& [x, w] : gauss_legendre_16()) {
        const double tau = g.inverse(mid + half * x);
        out.push_back({tau, half * w / g.deriv(tau)});
    }
    return out;
}

} // namespace mulab
