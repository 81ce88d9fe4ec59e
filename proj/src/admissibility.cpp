#include "mulab/admissibility.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mulab {

void ParamSet::validate() const {
    const std::pair<const char*, double> positive[] = {
        {"alpha", alpha}, {"beta", beta}, {"q", q},   {"delta", delta}, {"lambda", lambda},
        {"K", K},         {"K~", k_growth}, {"N", N}, {"D", D}};
    for (const auto& [name, v] : positive)
        if (!(v > 0.0)) throw InvalidArgument(std::string(name) + " must be positive");
    const std::pair<const char*, double> nonnegative[] = {
        {"theta", theta}, {"nu", nu}, {"eps", eps}, {"a", a}};
    for (const auto& [name, v] : nonnegative)
        if (!(v >= 0.0)) throw InvalidArgument(std::string(name) + " must be nonnegative");
}

bool AdmissibilityReport::pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

const InequalityEntry& AdmissibilityReport::entry(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw MissingSeries("no inequality named " + name);
}

namespace {

InequalityEntry check(std::string name, double lhs, std::string relation, double rhs) {
    bool ok = false;
    if (relation == ">") ok = lhs > rhs;
    else if (relation == ">=") ok = lhs >= rhs;
    else if (relation == "<") ok = lhs < rhs;
    else if (relation == "<=") ok = lhs <= rhs;
    return {std::move(name), lhs, std::move(relation), rhs, ok};
}

std::pair<double, double> window_bounds(const ParamSet& p) {
    return {std::max(p.nu + p.eps, std::abs(p.a - p.beta) + p.eps), 0.5 * (p.alpha + p.beta)};
}

double lambda_formula(const ParamSet& p) {
    const auto parts = lambda_ceiling_parts(p);
    return p.q * p.q * parts.numerator /
           (p.D * (parts.bracket_D * p.D + parts.bracket_K * p.k_growth) * std::pow(1.0 + p.q, 3));
}

} // namespace

AdmissibilityReport check_core(const ParamSet& p) {
    AdmissibilityReport r;
    r.entries.push_back(check("theta >= eps + nu", p.theta, ">=", p.eps + p.nu));
    r.entries.push_back(check("alpha > theta + eps", p.alpha, ">", p.theta + p.eps));
    r.entries.push_back(check("beta > nu + eps", p.beta, ">", p.nu + p.eps));
    return r;
}

std::pair<double, double> xi_window(const ParamSet& p) {
    const auto w = window_bounds(p);
    if (w.first >= w.second)
        throw EmptyWindow("xi window (" + std::to_string(w.first) + ", " +
                          std::to_string(w.second) + ") is empty");
    return w;
}

double delta_ceiling_coefficient(const ParamSet& p) { return p.alpha * p.beta / (p.alpha + p.beta); }

double delta_ceiling(const ParamSet& p) {
    return p.q * delta_ceiling_coefficient(p) / (p.D * (1.0 + p.q) * (1.0 + p.q));
}

LambdaCeilingParts lambda_ceiling_parts(const ParamSet& p) {
    const double gap = p.alpha + p.beta - 2.0 * p.xi;
    const double squares = (p.xi - p.eps) * (p.xi - p.eps) - (p.a - p.beta) * (p.a - p.beta);
    return {gap * squares, squares, 4.0 * p.xi * gap};
}

double lambda_ceiling(const ParamSet& p) {
    const auto [lo, hi] = window_bounds(p);
    if (!(p.xi > lo && p.xi < hi))
        throw XiOutOfWindow("xi = " + std::to_string(p.xi) + " outside (" + std::to_string(lo) +
                            ", " + std::to_string(hi) + ")");
    return lambda_formula(p);
}

AdmissibilityReport full_report(const ParamSet& p) {
    AdmissibilityReport r = check_core(p);
    r.entries.push_back(check("gamma > max(theta, nu)", p.gamma, ">", std::max(p.theta, p.nu)));
    const auto [lo, hi] = window_bounds(p);
    r.entries.push_back(check("xi > xi_lo", p.xi, ">", lo));
    r.entries.push_back(check("xi < xi_hi", p.xi, "<", hi));
    r.entries.push_back(check("delta <= delta_ceiling", p.delta, "<=", delta_ceiling(p)));
    // Outside the window the formula is meaningless; report it but fail.
    auto lambda = check("lambda <= lambda_ceiling", p.lambda, "<=", lambda_formula(p));
    if (!(p.xi > lo && p.xi < hi)) lambda.pass = false;
    r.entries.push_back(lambda);
    return r;
}

} // namespace mulab
