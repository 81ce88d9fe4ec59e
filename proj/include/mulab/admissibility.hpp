#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mulab {

/// Every scalar constant entering the hypotheses. `k_growth` is K~.
struct ParamSet {
    double alpha = 0.0;
    double beta = 0.0;
    double theta = 0.0;
    double nu = 0.0;
    double eps = 0.0;
    double a = 0.0;
    double gamma = 0.0;
    double xi = 0.0;
    double delta = 0.0;
    double lambda = 0.0;
    double q = 1.0;
    double K = 1.0;
    double k_growth = 1.0;
    double N = 1.0;
    double D = 1.0;

    /// Throws InvalidArgument naming the first violated sign constraint.
    void validate() const;
};

/// One checked inequality `lhs relation rhs`.
struct InequalityEntry {
    std::string name;
    double lhs = 0.0;
    std::string relation;
    double rhs = 0.0;
    bool pass = false;
};

struct AdmissibilityReport {
    std::vector<InequalityEntry> entries;

    bool pass() const;
    const InequalityEntry& entry(const std::string& name) const;
};

/// theta >= eps + nu, alpha > theta + eps, beta > nu + eps.
AdmissibilityReport check_core(const ParamSet& p);

/// (max{nu + eps, |a - beta| + eps}, (alpha + beta)/2). Throws EmptyWindow
/// when lo >= hi.
std::pair<double, double> xi_window(const ParamSet& p);

/// q alpha beta / (D (alpha + beta) (1 + q)^2).
double delta_ceiling(const ParamSet& p);

/// alpha beta / (alpha + beta): the delta ceiling without q and D.
double delta_ceiling_coefficient(const ParamSet& p);

/// The pieces of the lambda ceiling that do not involve q, D or K~:
/// ceiling = q^2 numerator / (D (bracket_D D + bracket_K K~) (1 + q)^3).
struct LambdaCeilingParts {
    double numerator = 0.0;  // (alpha + beta - 2 xi) [(xi - eps)^2 - (a - beta)^2]
    double bracket_D = 0.0;  // (xi - eps)^2 - (a - beta)^2
    double bracket_K = 0.0;  // 4 xi (alpha + beta - 2 xi)
};
LambdaCeilingParts lambda_ceiling_parts(const ParamSet& p);

/// The lambda ceiling. Throws XiOutOfWindow unless xi lies in the open window.
double lambda_ceiling(const ParamSet& p);

/// Core inequalities, the gamma condition, xi window membership and both
/// ceilings. Never throws for a valid ParamSet; failures become entries.
AdmissibilityReport full_report(const ParamSet& p);

} // namespace mulab
