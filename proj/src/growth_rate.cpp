#include "mulab/growth_rate.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mulab {

namespace {

constexpr double kE = std::numbers::e;

GrowthRate make_exp() {
    return GrowthRate(
        "exp", [](double t) { return std::exp(t); }, [](double t) { return std::exp(t); },
        [](double u) { return std::log(u); }, [](double r) { return std::exp(r); });
}

GrowthRate make_poly() {
    return GrowthRate(
        "poly", [](double t) { return t >= 0.0 ? t + 1.0 : 1.0 / (1.0 - t); },
        [](double t) { return t >= 0.0 ? 1.0 : 1.0 / ((1.0 - t) * (1.0 - t)); },
        [](double u) { return u >= 1.0 ? u - 1.0 : 1.0 - 1.0 / u; },
        [](double r) { return r * r / 4.0 + r + 1.0; });
}

GrowthRate make_log() {
    return GrowthRate(
        "log", [](double t) { return t >= 0.0 ? std::log(t + kE) : 1.0 / std::log(kE - t); },
        [](double t) {
            if (t >= 0.0) return 1.0 / (t + kE);
            const double l = std::log(kE - t);
            return 1.0 / ((kE - t) * l * l);
        },
        [](double u) { return u >= 1.0 ? std::exp(u) - kE : kE - std::exp(1.0 / u); },
        [](double r) {
            const double l = std::log(kE + r / 2.0);
            return l * l;
        });
}

void require_args(double delay, std::span<const double> grid) {
    if (!(delay > 0.0)) throw NonPositiveDelay("delay must be positive, got " + std::to_string(delay));
    if (grid.empty()) throw DegenerateGrid("sample grid is empty");
}

} // namespace

GrowthRate::GrowthRate(std::string label, Fn eval, Fn deriv, Fn inverse, Fn closed_form_N)
    : label_(std::move(label)), eval_(std::move(eval)), deriv_(std::move(deriv)),
      inverse_(std::move(inverse)), closed_N_(std::move(closed_form_N)) {
    if (!eval_ || !deriv_) throw InvalidArgument("growth rate needs value and derivative");
}

double GrowthRate::inverse(double u) const {
    if (!(u > 0.0)) throw OutOfDomain("growth rate inverse needs a positive argument");
    if (inverse_) return inverse_(u);
    double lo = -1.0, hi = 1.0;
    while (eval_(lo) > u) lo *= 2.0;
    while (eval_(hi) < u) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (eval_(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::optional<double> GrowthRate::closed_form_N(double delay) const {
    if (!closed_N_) return std::nullopt;
    return closed_N_(delay);
}

double GrowthRate::signed_power(double t, double exponent) const {
    const double s = sgn(t);
    if (s == 0.0) return 1.0;
    return std::pow(eval_(t), s * exponent);
}

std::vector<GrowthRate> builtin_catalogue() { return {make_exp(), make_poly(), make_log()}; }

GrowthRate growth_rate_by_id(const std::string& id) {
    for (auto& g : builtin_catalogue())
        if (g.label() == id) return g;
    throw InvalidArgument("unknown growth rate id '" + id + "'");
}

double sup_ratio(const GrowthRate& g, double delay, std::span<const double> grid,
                 bool with_candidates) {
    require_args(delay, grid);
    double best = 0.0;
    auto scan = [&](double s) { best = std::max(best, g(s + delay) / g(s)); };
    for (double s : grid) scan(s);
    if (with_candidates) {
        scan(-delay / 2.0);
        scan(-delay);
        scan(0.0);
    }
    return best;
}

double ratio_bound_N(const GrowthRate& g, double delay, std::span<const double> grid) {
    double n = sup_ratio(g, delay, grid, true);
    if (auto c = g.closed_form_N(delay)) n = std::max(n, *c);
    return n;
}

bool verify_property_H(const GrowthRate& g, double delay, std::span<const double> grid,
                       double N) {
    require_args(delay, grid);
    if (!(N > 1.0)) throw InvalidArgument("property (H) constant must exceed 1");
    const double cap = N * (1.0 + 1e-12);
    return std::all_of(grid.begin(), grid.end(),
                       [&](double s) { return g(s + delay) / g(s) <= cap; });
}

GrowthRateCheck check_growth_rate(const GrowthRate& g, std::span<const double> grid) {
    GrowthRateCheck out;
    out.unit_at_zero = std::abs(g(0.0) - 1.0) <= 1e-12;
    out.positive = std::all_of(grid.begin(), grid.end(), [&](double t) { return g(t) > 0.0; });
    out.increasing = true;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(g(grid[i - 1]) < g(grid[i]))) out.increasing = false;

    double worst = 0.0;
    for (double t : grid) {
        const double h = 1e-6 * std::max(1.0, std::abs(t));
        const double fd = (g(t + h) - g(t - h)) / (2.0 * h);
        const double d = g.deriv(t);
        worst = std::max(worst, std::abs(fd - d) / std::abs(d));
    }
    out.max_derivative_rel_error = worst;
    out.derivative_consistent = worst <= 1e-6;

    const double h = 1e-7;
    const double left = (g(0.0) - g(-h)) / h;
    const double right = (g(h) - g(0.0)) / h;
    out.seam_gap = std::abs(left - right);
    out.seam_smooth = out.seam_gap <= 1e-6;
    return out;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t count) {
    if (count == 0) return {};
    if (count == 1) return {lo};
    std::vector<double> out(count);
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
    out.back() = hi;
    return out;
}

} // namespace mulab
