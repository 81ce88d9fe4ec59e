#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mulab {

/// A differentiable, strictly increasing rate with value 1 at t = 0.
///
/// Instances are immutable once built; all members are pure functions and may
/// be evaluated concurrently.
class GrowthRate {
public:
    using Fn = std::function<double(double)>;

    GrowthRate(std::string label, Fn eval, Fn deriv, Fn inverse = {},
               Fn closed_form_N = {});

    const std::string& label() const noexcept { return label_; }

    double operator()(double t) const { return eval_(t); }
    double eval(double t) const { return eval_(t); }
    double deriv(double t) const { return deriv_(t); }

    /// Logarithmic derivative mu'(t)/mu(t).
    double log_deriv(double t) const { return deriv_(t) / eval_(t); }

    /// mu^{-1}(u) for u > 0. Falls back to bisection when no closed form
    /// was supplied.
    double inverse(double u) const;

    bool has_closed_form_N() const noexcept { return static_cast<bool>(closed_N_); }
    std::optional<double> closed_form_N(double delay) const;

    /// mu(t)^{sgn(t) * exponent}, with sgn(0) = 0.
    double signed_power(double t, double exponent) const;

private:
    std::string label_;
    Fn eval_;
    Fn deriv_;
    Fn inverse_;
    Fn closed_N_;
};

/// sgn with sgn(0) = 0.
inline double sgn(double x) noexcept { return (x > 0.0) - (x < 0.0); }

/// The three catalogued rates, in the order exp, poly, log.
std::vector<GrowthRate> builtin_catalogue();

/// Look up a catalogued rate by id ("exp", "poly", "log").
GrowthRate growth_rate_by_id(const std::string& id);

/// sup of mu(s + r)/mu(s) over the grid. With `with_candidates` the points
/// -r/2, -r and 0 are scanned as well.
double sup_ratio(const GrowthRate& g, double delay, std::span<const double> grid,
                 bool with_candidates = true);

/// max(closed-form N(r) when available, sup of mu(s + r)/mu(s) on grid and
/// candidate points). Throws NonPositiveDelay or DegenerateGrid.
double ratio_bound_N(const GrowthRate& g, double delay, std::span<const double> grid);

/// True iff mu(s + r)/mu(s) <= N (1 + 1e-12) for every s in grid.
bool verify_property_H(const GrowthRate& g, double delay, std::span<const double> grid,
                       double N);

struct GrowthRateCheck {
    bool unit_at_zero = false;
    bool positive = false;
    bool increasing = false;
    bool derivative_consistent = false;
    bool seam_smooth = false;
    double max_derivative_rel_error = 0.0;
    double seam_gap = 0.0;

    bool ok() const noexcept {
        return unit_at_zero && positive && increasing && derivative_consistent && seam_smooth;
    }
};

/// Evaluate the growth-rate invariants on a sorted sample grid.
GrowthRateCheck check_growth_rate(const GrowthRate& g, std::span<const double> grid);

/// Uniform grid with `count` points on [lo, hi].
std::vector<double> uniform_grid(double lo, double hi, std::size_t count);

} // namespace mulab
