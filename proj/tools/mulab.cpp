#include "mulab/errors.hpp"
#include "mulab/report.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace mulab;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
    std::optional<double> tol;
};

void write_text(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out);
    if (!f) throw ConfigError("--out", "cannot write " + out);
    f << text;
}

void write_json(const std::string& out, const Json& doc) { write_text(out, doc.dump(2) + "\n"); }

Json stage_document(const Scenario& sc, const Stage& st, int fail_code) {
    Json doc = report_header(sc);
    doc["status"] = st.pass ? "pass" : "fail";
    doc["exit_code"] = st.pass ? kExitPass : fail_code;
    doc["stages"] = Json{{st.name, st.data}};
    doc["stages"][st.name]["pass"] = st.pass;
    return doc;
}

Scenario load_with(const std::string& config, const Overrides& o) {
    Scenario sc = load_scenario(config);
    if (o.seed) sc.seed = *o.seed;
    if (o.samples) {
        if (*o.samples < 1) throw ConfigError("--samples", "must be positive");
        sc.dichotomy_check.samples = *o.samples;
        sc.verification.residual_samples = *o.samples;
    }
    return sc;
}

void solver_tol(const Overrides& o, Scenario& sc) {
    if (!o.tol) return;
    if (!(*o.tol > 0.0)) throw ConfigError("--tol", "must be positive");
    sc.solver.tol = *o.tol;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonuniform mu-dichotomy and conjugacy laboratory for delay equations"};
    app.require_subcommand(1);

    std::string config, out, result_file, report_file, kind;
    Overrides o;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) sub->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output file (default: stdout)");
        sub->add_option("--seed", o.seed, "Random seed override");
        sub->add_option("--samples", o.samples, "Sample count override");
    };

    auto* check = app.add_subcommand("check-params", "Parameter inequalities and perturbation envelopes");
    add_common(check, true);
    auto* dich = app.add_subcommand("verify-dichotomy", "Measure the dichotomy bound families");
    add_common(dich, true);
    dich->add_option("--tol", o.tol, "Certificate tolerance (ratio limit 1 + tol)");
    auto* build = app.add_subcommand("build-conjugacy", "Picard solve for eta; writes a result file");
    build->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    build->add_option("--out", out, "Result JSON; eta goes to <stem>.eta.bin")->required();
    build->add_option("--seed", o.seed, "Random seed override");
    build->add_option("--tol", o.tol, "Solver tolerance on ||eta_k - eta_{k-1}||_{1,mu}");
    auto* verify = app.add_subcommand("verify-conjugacy", "Residuals and injectivity of a built eta");
    verify->add_option("--result", result_file, "Result JSON from build-conjugacy")->required()->check(CLI::ExistingFile);
    verify->add_option("--out", out, "Output file (default: stdout)");
    verify->add_option("--seed", o.seed, "Random seed override");
    verify->add_option("--samples", o.samples, "Residual sample count");
    auto* run = app.add_subcommand("run", "Full pipeline");
    add_common(run, true);
    run->add_option("--tol", o.tol, "Solver tolerance");
    auto* plot = app.add_subcommand("emit-plot", "CSV series from a run report");
    plot->add_option("--report", report_file, "Run report JSON")->required()->check(CLI::ExistingFile);
    plot->add_option("--kind", kind, "envelope, residual or contraction")->required();
    plot->add_option("--out", out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitConfig;
    }

    try {
        if (*check) {
            const Scenario sc = load_with(config, o);
            const auto st = admissibility_stage(sc, resolve(sc));
            write_json(out, stage_document(sc, st, kExitAdmissibility));
            return st.pass ? kExitPass : kExitAdmissibility;
        }
        if (*dich) {
            Scenario sc = load_with(config, o);
            if (o.tol) {
                // Bounds are scored against (1 + tol) times the claimed constants.
                if (!(*o.tol > -1.0)) throw ConfigError("--tol", "must exceed -1");
                sc.dichotomy_check.tolerance = *o.tol;
            }
            Json series = Json::object();
            const auto st = certificate_stage(sc, resolve(sc), series);
            Json doc = stage_document(sc, st, kExitCertificate);
            doc["series"] = std::move(series);
            write_json(out, doc);
            return st.pass ? kExitPass : kExitCertificate;
        }
        if (*build) {
            Scenario sc = load_with(config, o);
            solver_tol(o, sc);
            Json series = Json::object();
            std::optional<ConjugacyResult> res;
            const auto st = conjugacy_stage(sc, resolve(sc), res, series);
            if (res) save_conjugacy_result(out, sc, st, *res);
            else write_json(out, stage_document(sc, st, kExitSolver));
            return st.pass ? kExitPass : kExitSolver;
        }
        if (*verify) {
            auto loaded = load_conjugacy_result(result_file);
            Scenario& sc = loaded.scenario;
            if (o.seed) sc.seed = *o.seed;
            if (o.samples) sc.verification.residual_samples = *o.samples;
            Json series = Json::object();
            const auto st = verification_stage(sc, resolve(sc), loaded.result, series);
            Json doc = stage_document(sc, st, kExitSolver);
            doc["series"] = std::move(series);
            write_json(out, doc);
            return st.pass ? kExitPass : kExitSolver;
        }
        if (*run) {
            Scenario sc = load_with(config, o);
            solver_tol(o, sc);
            const auto rep = run_pipeline(sc);
            write_json(out, rep.doc);
            return rep.exit_code;
        }
        if (*plot) {
            std::ifstream in(report_file);
            Json doc;
            try {
                doc = Json::parse(in);
            } catch (const Json::parse_error&) {
                throw ConfigError(report_file, "malformed JSON");
            }
            write_text(out, emit_plot_data(doc, plot_kind(kind)));
            return kExitPass;
        }
    } catch (const Error& e) {
        std::cerr << "mulab: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "mulab: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
