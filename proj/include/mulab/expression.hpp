#pragma once

#include "mulab/growth_rate.hpp"

#include <functional>
#include <string>

namespace mulab {

/// Arithmetic over t: numbers, t, dlogmu (mu'(t)/mu(t) of the scenario's
/// rate), + - * / ^, unary minus, parentheses and sin, cos, exp.
class Expression {
public:
    /// Throws ConfigError naming `field` and the column of the problem.
    static Expression parse(const std::string& text, const std::string& field);
    static Expression constant(double v);

    double operator()(double t, const GrowthRate& g) const;
    const std::string& text() const noexcept { return text_; }
    bool uses_dlogmu() const noexcept { return uses_dlogmu_; }

    struct Env {
        double t;
        const GrowthRate* g;
    };
    using Fn = std::function<double(const Env&)>;

private:
    Expression(std::string text, Fn fn, bool dl)
        : text_(std::move(text)), fn_(std::move(fn)), uses_dlogmu_(dl) {}

    std::string text_;
    Fn fn_;
    bool uses_dlogmu_ = false;
};

} // namespace mulab
