#pragma once

#include "mulab/scenario.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace mulab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kRunReportSchema = "mulab.run_report/1";
inline constexpr const char* kConjugacyResultSchema = "mulab.conjugacy_result/1";

enum ExitCode : int {
    kExitPass = 0,
    kExitConfig = 1,
    kExitAdmissibility = 2,
    kExitCertificate = 3,
    kExitSolver = 4,
};

/// One pipeline stage. Series rows are appended to the caller's `series`
/// object as {"columns": [...], "rows": [[...], ...]}.
struct Stage {
    std::string name;
    bool pass = false;
    Json data;
};

/// Parameter inequalities, ceilings and the measured perturbation envelopes.
Stage admissibility_stage(const Scenario& sc, const ResolvedScenario& rs);

/// verify_bounds over the scenario's window; the stable family becomes the
/// "envelope" series.
Stage certificate_stage(const Scenario& sc, const ResolvedScenario& rs, Json& series);

/// Picard solve. NotContracting and TruncationUnreachable become a failing
/// stage; `result` is filled only when the solver returned. Adds the
/// "contraction" series.
Stage conjugacy_stage(const Scenario& sc, const ResolvedScenario& rs,
                      std::optional<ConjugacyResult>& result, Json& series);

/// Residuals, derivative bound, finite-difference agreement and
/// injectivity. Adds the "residual" series.
Stage verification_stage(const Scenario& sc, const ResolvedScenario& rs, ConjugacyResult& result,
                         Json& series);

struct RunReport {
    Json doc;
    int exit_code = kExitPass;
    std::optional<ConjugacyResult> conjugacy;
};

/// check-params, verify-dichotomy, build-conjugacy, verify-conjugacy in
/// order, stopping at the first failing stage. Wall-clock times live under
/// "timings" only, so the rest of the document depends on the scenario and
/// seed alone.
RunReport run_pipeline(const Scenario& sc);

/// Skeleton shared by every emitted document.
Json report_header(const Scenario& sc);

/// Writes the result document and the eta sidecar next to it
/// (<stem>.eta.bin).
void save_conjugacy_result(const std::filesystem::path& file, const Scenario& sc,
                           const Stage& stage, const ConjugacyResult& result);

struct LoadedConjugacy {
    Scenario scenario;
    ConjugacyResult result;
};
LoadedConjugacy load_conjugacy_result(const std::filesystem::path& file);

enum class PlotKind { envelope, residual, contraction };
/// Throws ConfigError for unknown names.
PlotKind plot_kind(const std::string& name);
const char* plot_kind_name(PlotKind kind);

/// CSV with a header row. Throws MissingSeries when the report lacks the
/// series.
std::string emit_plot_data(const Json& report, PlotKind kind);

} // namespace mulab
