#include "mulab/report.hpp"

#include "mulab/errors.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

namespace mulab {

namespace {

Json params_json(const ParamSet& p) {
    return Json{{"alpha", p.alpha}, {"beta", p.beta},   {"theta", p.theta},      {"nu", p.nu},
                {"eps", p.eps},     {"a", p.a},         {"gamma", p.gamma},      {"xi", p.xi},
                {"delta", p.delta}, {"lambda", p.lambda}, {"q", p.q},            {"K", p.K},
                {"k_growth", p.k_growth}, {"N", p.N},   {"D", p.D}};
}

Json check_json(const EnvelopeCheck& c) {
    return Json{{"name", c.name}, {"worst_ratio", c.worst_ratio}, {"pass", c.pass}};
}

Json error_json(const Error& e) { return Json{{"kind", e.kind()}, {"message", e.what()}}; }

Json series(std::initializer_list<const char*> columns) {
    Json s{{"columns", Json::array()}, {"rows", Json::array()}};
    for (const char* c : columns) s["columns"].push_back(c);
    return s;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

Json report_header(const Scenario& sc) {
    return Json{{"schema", kRunReportSchema},
                {"scenario", sc.name},
                {"growth_rate", sc.growth_rate},
                {"seed", sc.seed}};
}

Stage admissibility_stage(const Scenario& sc, const ResolvedScenario& rs) {
    Stage st{"admissibility", false, Json::object()};
    const ParamSet& p = rs.params;
    st.data["params"] = params_json(p);
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        st.data["error"] = error_json(e);
        return st;
    }
    const auto report = full_report(p);
    Json entries = Json::array();
    for (const auto& e : report.entries)
        entries.push_back(Json{{"name", e.name}, {"lhs", e.lhs}, {"relation", e.relation},
                               {"rhs", e.rhs}, {"pass", e.pass}});
    st.data["inequalities"] = std::move(entries);
    try {
        const auto [lo, hi] = xi_window(p);
        st.data["xi_window"] = Json::array({lo, hi});
    } catch (const EmptyWindow&) {
        st.data["xi_window"] = nullptr;
    }
    st.data["delta_ceiling"] = delta_ceiling(p);
    try {
        st.data["lambda_ceiling"] = lambda_ceiling(p);
    } catch (const XiOutOfWindow&) {
        st.data["lambda_ceiling"] = nullptr;
    }

    const auto& dc = sc.dichotomy_check;
    const auto times = uniform_grid(dc.t_min, dc.t_max, 41);
    const auto env = check_envelopes(rs.pert, rs.model.growth, rs.model.delay(), rs.model.dim(),
                                     rs.model.resolution, times, 20, sc.seed);
    st.data["envelopes"] = Json{{"sup_norm", check_json(env.sup_norm)},
                                {"mu_norm", check_json(env.mu_norm)},
                                {"derivative", check_json(env.derivative)},
                                {"binding", env.binding},
                                {"zero_at_origin", env.zero_at_origin},
                                {"pass", env.pass()}};
    st.pass = report.pass() && env.pass();
    return st;
}

Stage certificate_stage(const Scenario& sc, const ResolvedScenario& rs, Json& out) {
    Stage st{"certificate", false, Json::object()};
    const auto& dc = sc.dichotomy_check;
    const auto cert = verify_bounds(rs.model, dc.t_min, dc.t_max, dc.samples, sc.seed, dc.tolerance);
    Json bounds = Json::array();
    for (const auto& b : cert.bounds)
        bounds.push_back(Json{{"bound_name", b.bound_name},
                              {"worst_ratio", b.worst_ratio},
                              {"argmax_pair", Json::array({b.argmax_pair.first, b.argmax_pair.second})},
                              {"pass", b.pass}});
    st.data = Json{{"t_min", cert.t_min}, {"t_max", cert.t_max}, {"samples", dc.samples},
                   {"tolerance", cert.tolerance}, {"D", cert.D}, {"bounds", std::move(bounds)}};

    Json env = series({"t", "s", "measured", "bound", "ratio"});
    for (const auto& smp : cert.bound("stable").samples)
        env["rows"].push_back(Json::array({smp.t, smp.s, smp.measured, smp.bound,
                                           smp.bound > 0.0 ? smp.measured / smp.bound : 0.0}));
    out["envelope"] = std::move(env);
    st.pass = cert.pass();
    return st;
}

Stage conjugacy_stage(const Scenario& sc, const ResolvedScenario& rs,
                      std::optional<ConjugacyResult>& result, Json& out) {
    Stage st{"conjugacy", false, Json::object()};
    const auto problem = rs.problem();
    const auto& g = sc.grid;
    st.data["grid"] = Json{{"t_min", g.t_min}, {"t_max", g.t_max}, {"t_step", g.t_step},
                           {"z_min", g.z_min}, {"z_max", g.z_max}, {"z_points", g.z_points}};
    st.data["solver"] = Json{{"tol", sc.solver.tol}, {"max_sweeps", sc.solver.max_sweeps},
                             {"tail_tol", sc.trunc.tail_tol}, {"max_span", sc.trunc.max_span}};
    try {
        result = picard_solve(problem, sc.solver);
    } catch (const NotContracting& e) {
        st.data["error"] = error_json(e);
        return st;
    } catch (const TruncationUnreachable& e) {
        st.data["error"] = error_json(e);
        return st;
    }
    const auto& r = *result;
    Json contraction = series({"k", "delta", "ratio"});
    double worst_ratio = 0.0;
    for (const auto& s : r.sweeps) {
        contraction["rows"].push_back(Json::array({s.k, s.delta, s.ratio}));
        worst_ratio = std::max(worst_ratio, s.ratio);
    }
    out["contraction"] = std::move(contraction);

    const double ratio_limit = r.contraction_rate_theoretical + sc.verification.slack;
    const double sup_limit = F_norm_bound(rs.params) + 1e-3;
    const auto& n = r.eta.norms;
    st.data["converged"] = r.converged;
    st.data["sweeps"] = r.sweeps.size();
    st.data["contraction_rate_measured"] = r.contraction_rate_measured;
    st.data["contraction_rate_theoretical"] = r.contraction_rate_theoretical;
    st.data["worst_sweep_ratio"] = worst_ratio;
    st.data["ratio_limit"] = ratio_limit;
    st.data["norms"] = Json{{"sup", n.sup}, {"sup_mu", n.sup_mu},
                            {"derivative_mu", n.derivative_mu}, {"one_mu", n.one_mu}};
    st.data["sup_limit"] = sup_limit;
    st.data["t_clamp_rate"] = r.t_clamp_rate;
    st.pass = r.converged && worst_ratio <= ratio_limit && n.sup <= sup_limit && n.one_mu <= rs.params.q;
    return st;
}

Stage verification_stage(const Scenario& sc, const ResolvedScenario& rs, ConjugacyResult& result,
                         Json& out) {
    Stage st{"verification", false, Json::object()};
    const auto problem = rs.problem();
    const auto& v = sc.verification;
    const double max_gap = v.max_gap_delays * rs.model.delay();
    result.residual_grid.clear();
    sample_residuals(problem, result, v.residual_samples, max_gap, sc.seed);

    Json res = series({"t", "s", "b_norm", "raw", "weighted"});
    double max_raw = 0.0, max_weighted = 0.0;
    for (const auto& r : result.residual_grid) {
        res["rows"].push_back(Json::array({r.t, r.s, r.b.norm(), r.raw, r.weighted}));
        max_raw = std::max(max_raw, r.raw);
        max_weighted = std::max(max_weighted, r.weighted);
    }
    out["residual"] = std::move(res);
    const bool zero = rs.pert.identically_zero;
    const double res_tol = zero ? v.zero_residual_tol : v.residual_tol;
    const bool res_ok = (zero ? max_raw : max_weighted) <= res_tol;
    st.data["residual"] = Json{{"samples", result.residual_grid.size()},
                               {"max_gap", max_gap},
                               {"max_raw", max_raw},
                               {"max_weighted", max_weighted},
                               {"measure", zero ? "raw" : "weighted"},
                               {"tolerance", res_tol},
                               {"pass", res_ok}};

    const double q = rs.params.q;
    const double der_limit = std::min(q / (1.0 + q) + v.slack, 1.0);
    const double der = result.eta.norms.derivative_mu;
    const bool der_ok = der <= der_limit && der < 1.0;
    st.data["derivative"] = Json{{"derivative_mu", der}, {"limit", der_limit}, {"pass", der_ok}};

    const double fd = derivative_fd_error(result.eta);
    const bool fd_ok = fd <= v.fd_tol;
    st.data["finite_difference"] = Json{{"relative_error", fd}, {"tolerance", v.fd_tol}, {"pass", fd_ok}};

    const auto inv = invertibility_check(problem, result.eta);
    result.derivative_margin = inv.margin;
    st.data["injectivity"] = Json{{"derivative_norm", inv.derivative_norm},
                                  {"margin", inv.margin},
                                  {"margin_ok", inv.margin_ok},
                                  {"monotone_checked", inv.monotone_checked},
                                  {"monotone", inv.monotone},
                                  {"min_increment", inv.min_increment},
                                  {"pass", inv.pass()}};
    st.pass = res_ok && der_ok && fd_ok && inv.pass();
    return st;
}

RunReport run_pipeline(const Scenario& sc) {
    RunReport rep;
    Json doc = report_header(sc);
    Json stages = Json::object();
    Json series_out = Json::object();
    Json timings = Json::object();
    std::string failed;

    auto start = std::chrono::steady_clock::now();
    const ResolvedScenario rs = resolve(sc);
    timings["resolve"] = seconds_since(start);

    auto record = [&](Stage st, int code) {
        stages[st.name] = std::move(st.data);
        stages[st.name]["pass"] = st.pass;
        if (!st.pass && failed.empty()) {
            failed = st.name;
            rep.exit_code = code;
        }
        return st.pass;
    };
    auto timed = [&](const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto st = fn();
        timings[name] = seconds_since(t0);
        return st;
    };

    bool ok = record(timed("admissibility", [&] { return admissibility_stage(sc, rs); }),
                     kExitAdmissibility);
    if (ok)
        ok = record(timed("certificate", [&] { return certificate_stage(sc, rs, series_out); }),
                    kExitCertificate);
    if (ok)
        ok = record(timed("conjugacy",
                          [&] { return conjugacy_stage(sc, rs, rep.conjugacy, series_out); }),
                    kExitSolver);
    if (ok)
        ok = record(timed("verification",
                          [&] { return verification_stage(sc, rs, *rep.conjugacy, series_out); }),
                    kExitSolver);
    for (const char* name : {"admissibility", "certificate", "conjugacy", "verification"})
        if (!stages.contains(name)) stages[name] = Json{{"skipped", true}};

    doc["status"] = ok ? "pass" : "fail";
    doc["exit_code"] = rep.exit_code;
    doc["failed_stage"] = failed.empty() ? Json(nullptr) : Json(failed);
    doc["stages"] = std::move(stages);
    doc["series"] = std::move(series_out);
    timings["total"] = seconds_since(start);
    doc["timings"] = std::move(timings);
    rep.doc = std::move(doc);
    return rep;
}

void save_conjugacy_result(const std::filesystem::path& file, const Scenario& sc,
                           const Stage& stage, const ConjugacyResult& result) {
    auto sidecar = file;
    sidecar.replace_extension(".eta.bin");
    Json doc = report_header(sc);
    doc["schema"] = kConjugacyResultSchema;
    doc["scenario_source"] = sc.source;
    doc["solver"] = Json{{"tol", sc.solver.tol}, {"max_sweeps", sc.solver.max_sweeps}};
    doc["conjugacy"] = stage.data;
    doc["conjugacy"]["pass"] = stage.pass;
    Json sweeps = series({"k", "delta", "ratio"});
    for (const auto& s : result.sweeps) sweeps["rows"].push_back(Json::array({s.k, s.delta, s.ratio}));
    doc["series"] = Json{{"contraction", std::move(sweeps)}};
    doc["eta_file"] = sidecar.filename().string();
    result.eta.save(sidecar);
    std::ofstream out(file);
    if (!out) throw ConfigError(file.string(), "cannot write file");
    out << doc.dump(2) << '\n';
}

LoadedConjugacy load_conjugacy_result(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string(), "cannot read file");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error&) {
        throw ConfigError(file.string(), "malformed JSON");
    }
    if (doc.value("schema", std::string{}) != kConjugacyResultSchema)
        throw ConfigError(file.string(), std::string("expected schema ") + kConjugacyResultSchema);
    LoadedConjugacy out;
    out.scenario = parse_scenario(doc.at("scenario_source"));
    out.scenario.seed = doc.at("seed").get<std::uint64_t>();
    out.scenario.solver.tol = doc.at("solver").at("tol").get<double>();
    out.scenario.solver.max_sweeps = doc.at("solver").at("max_sweeps").get<int>();
    out.result.eta = EtaField::load(file.parent_path() / doc.at("eta_file").get<std::string>());
    const auto& c = doc.at("conjugacy");
    out.result.converged = c.value("converged", false);
    out.result.contraction_rate_measured = c.value("contraction_rate_measured", 0.0);
    out.result.contraction_rate_theoretical = c.value("contraction_rate_theoretical", 0.0);
    out.result.t_clamp_rate = c.value("t_clamp_rate", 0.0);
    for (const auto& row : doc.at("series").at("contraction").at("rows"))
        out.result.sweeps.push_back({row[0].get<int>(), row[1].get<double>(), row[2].get<double>()});
    return out;
}

PlotKind plot_kind(const std::string& name) {
    if (name == "envelope") return PlotKind::envelope;
    if (name == "residual") return PlotKind::residual;
    if (name == "contraction") return PlotKind::contraction;
    throw ConfigError("--kind", "expected envelope, residual or contraction");
}

const char* plot_kind_name(PlotKind kind) {
    switch (kind) {
    case PlotKind::envelope: return "envelope";
    case PlotKind::residual: return "residual";
    case PlotKind::contraction: return "contraction";
    }
    return "";
}

std::string emit_plot_data(const Json& report, PlotKind kind) {
    const char* name = plot_kind_name(kind);
    const auto s = report.find("series");
    if (s == report.end() || !s->contains(name))
        throw MissingSeries(std::string("report has no ") + name + " series");
    const Json& data = (*s)[name];
    std::ostringstream csv;
    const auto& cols = data.at("columns");
    for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i].get<std::string>();
    csv << '\n';
    for (const auto& row : data.at("rows")) {
        for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i].dump();
        csv << '\n';
    }
    return csv.str();
}

} // namespace mulab
