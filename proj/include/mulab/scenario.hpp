#pragma once

#include "mulab/conjugacy.hpp"
#include "mulab/expression.hpp"
#include "mulab/perturbation.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mulab {

struct TermSpec {
    double lag = 0.0;
    std::vector<std::vector<Expression>> matrix;
};

/// Analytically known splitting. "diagonal": x_i' = -a_i (mu'/mu) x_i on the
/// stable block and b_j (mu'/mu) x_j on the unstable block. "nonuniform_exp":
/// the scalar nonuniform model with mu = e^t.
struct ProjectionSpec {
    std::string kind;
    std::vector<double> stable_rates;
    std::vector<double> unstable_rates;
    double alpha = 0.0;
    double theta = 0.0;
    double theta_declared = 0.0;
};

/// Either an absolute value or a fraction of the admissible ceiling.
struct CeilingValue {
    bool fraction = false;
    double value = 0.0;
};

struct PerturbationSpec {
    std::string shape;  // "quadratic_saturation" or "zero"
    double gamma = 0.0;
    CeilingValue delta;
    CeilingValue lambda;
    std::optional<double> xi;  // default: midpoint of the xi window
    SaturationSpec saturation;
};

struct DichotomyCheckSpec {
    double t_min = -10.0;
    double t_max = 10.0;
    int samples = 200;
    double tolerance = 5e-2;
};

struct VerificationSpec {
    int residual_samples = 200;
    double max_gap_delays = 3.0;
    double residual_tol = 5e-3;
    double zero_residual_tol = 1e-6;
    double fd_tol = 1e-3;
    double slack = 5e-2;
};

/// A parsed scenario file. `source` keeps the document for embedding in
/// reports.
struct Scenario {
    std::string name;
    std::string growth_rate;
    double delay = 1.0;
    int resolution = 32;
    std::vector<TermSpec> terms;
    ProjectionSpec projection;
    DichotomyConstants declared;
    double q = 1.0;
    PerturbationSpec perturbation;
    DichotomyCheckSpec dichotomy_check;
    ConjugacyGrid grid;
    TruncationPolicy trunc;
    SolverOptions solver;
    VerificationSpec verification;
    std::uint64_t seed = 42;
    nlohmann::ordered_json source;
};

/// Throws ConfigError with the JSON path of the offending field; unknown keys
/// are rejected.
Scenario parse_scenario(const nlohmann::ordered_json& doc);
/// Parse errors report the line.
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario(const std::filesystem::path& file);

/// Everything the pipeline needs, built from a scenario.
struct ResolvedScenario {
    DichotomyModel model;
    Perturbation pert;
    ParamSet params;
    TruncationPolicy trunc;
    ConjugacyGrid grid;

    ConjugacyProblem problem() const { return {model, pert, params, trunc, grid}; }
};

/// Builds the model (with the scenario's own expressions as the system, after
/// checking them against the projection's reference flow), raises K and a to
/// values the model provably meets, computes N and D, fills xi and resolves
/// ceiling fractions.
ResolvedScenario resolve(const Scenario& sc);

} // namespace mulab
