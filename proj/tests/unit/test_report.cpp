#include "mulab/errors.hpp"
#include "mulab/report.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mulab;

namespace {

Json shipped(const std::string& name) {
    std::ifstream in(std::string(MULAB_SCENARIO_DIR) + "/" + name + ".json");
    REQUIRE(in);
    return Json::parse(in);
}

/// Shrinks grids and sample counts so a full pipeline runs in seconds.
Json small(Json doc) {
    doc["dichotomy_check"]["samples"] = 30;
    doc["conjugacy"]["t_min"] = -2.0;
    doc["conjugacy"]["t_max"] = 2.0;
    doc["conjugacy"]["z_points"] = 61;
    doc["verification"]["residual_samples"] = 30;
    // Central differences on 61 points carry an O(dz^2) error near 1.5e-2.
    doc["verification"]["fd_tol"] = 3e-2;
    return doc;
}

Scenario scenario(const Json& doc) { return parse_scenario(doc); }

const RunReport& scalar_run() {
    static const RunReport rep = run_pipeline(scenario(small(shipped("scalar_unstable"))));
    return rep;
}

std::vector<std::vector<double>> csv_rows(const std::string& csv, std::string& header) {
    std::istringstream in(csv);
    std::getline(in, header);
    std::vector<std::vector<double>> rows;
    for (std::string line; std::getline(in, line);) {
        std::vector<double> row;
        std::istringstream cells(line);
        for (std::string cell; std::getline(cells, cell, ',');) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

} // namespace

TEST_CASE("a small scalar scenario passes every stage", "[report]") {
    const auto& rep = scalar_run();
    const auto& doc = rep.doc;
    INFO(doc.dump(2));
    CHECK(rep.exit_code == kExitPass);
    CHECK(doc["schema"] == kRunReportSchema);
    CHECK(doc["status"] == "pass");
    CHECK(doc["failed_stage"].is_null());
    std::vector<std::string> order;
    for (const auto& [name, _] : doc["stages"].items()) order.push_back(name);
    CHECK(order == std::vector<std::string>{"admissibility", "certificate", "conjugacy", "verification"});
    for (const auto& [name, stage] : doc["stages"].items()) CHECK(stage["pass"] == true);
    for (const char* s : {"envelope", "contraction", "residual"}) CHECK(doc["series"].contains(s));
    REQUIRE(rep.conjugacy.has_value());
    CHECK(rep.conjugacy->converged);
    CHECK(doc["timings"].contains("total"));
}

TEST_CASE("reports are identical for the same scenario and seed", "[report][property]") {
    auto strip = [](Json doc) {
        doc.erase("timings");
        return doc.dump();
    };
    const auto again = run_pipeline(scenario(small(shipped("scalar_unstable"))));
    CHECK(strip(again.doc) == strip(scalar_run().doc));

    auto other = small(shipped("scalar_unstable"));
    other["seed"] = 7;
    CHECK(strip(run_pipeline(scenario(other)).doc) != strip(scalar_run().doc));
}

TEST_CASE("contraction CSV has one row per sweep", "[report]") {
    const auto& rep = scalar_run();
    std::string header;
    const auto rows = csv_rows(emit_plot_data(rep.doc, PlotKind::contraction), header);
    CHECK(header == "k,delta,ratio");
    REQUIRE(rows.size() == rep.conjugacy->sweeps.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i][0] == rep.conjugacy->sweeps[i].k);
        CHECK(rows[i][1] == rep.conjugacy->sweeps[i].delta);
        CHECK(rows[i][2] == rep.conjugacy->sweeps[i].ratio);
    }

    const auto residual = csv_rows(emit_plot_data(rep.doc, PlotKind::residual), header);
    CHECK(header == "t,s,b_norm,raw,weighted");
    CHECK(residual.size() == 30);
    for (const auto& r : residual) CHECK(r[0] >= r[1]);
}

TEST_CASE("admissibility failure short-circuits the pipeline", "[report]") {
    const auto rep = run_pipeline(scenario(shipped("example5_theta025")));
    CHECK(rep.exit_code == kExitAdmissibility);
    CHECK(rep.doc["status"] == "fail");
    CHECK(rep.doc["failed_stage"] == "admissibility");
    CHECK(rep.doc["stages"]["admissibility"]["pass"] == false);
    for (const char* later : {"certificate", "conjugacy", "verification"})
        CHECK(rep.doc["stages"][later]["skipped"] == true);
    bool core_failed = false;
    for (const auto& e : rep.doc["stages"]["admissibility"]["inequalities"])
        if (e["name"] == "theta >= eps + nu") core_failed = e["pass"] == false;
    CHECK(core_failed);
    CHECK_FALSE(rep.conjugacy.has_value());
    CHECK_THROWS_AS(emit_plot_data(rep.doc, PlotKind::envelope), MissingSeries);
    CHECK_THROWS_AS(emit_plot_data(rep.doc, PlotKind::contraction), MissingSeries);
}

TEST_CASE("certificate failure stops before the solver", "[report]") {
    auto doc = small(shipped("scalar_unstable"));
    // A negative tolerance demands measured norms below 10% of the bounds.
    doc["dichotomy_check"]["tolerance"] = -0.9;
    const auto rep = run_pipeline(scenario(doc));
    CHECK(rep.exit_code == kExitCertificate);
    CHECK(rep.doc["failed_stage"] == "certificate");
    CHECK(rep.doc["stages"]["conjugacy"]["skipped"] == true);
    CHECK(rep.doc["series"].contains("envelope"));
}

TEST_CASE("an untruncatable tail is a solver failure", "[report]") {
    auto doc = small(shipped("scalar_unstable"));
    doc["growth_rate"] = "poly";
    const auto rep = run_pipeline(scenario(doc));
    CHECK(rep.exit_code == kExitSolver);
    CHECK(rep.doc["failed_stage"] == "conjugacy");
    CHECK(rep.doc["stages"]["conjugacy"]["error"]["kind"] == "TruncationUnreachable");
    CHECK(rep.doc["stages"]["verification"]["skipped"] == true);
}

TEST_CASE("zero perturbation gives vanishing residuals", "[report]") {
    auto doc = small(shipped("example5_zero_perturbation"));
    const auto rep = run_pipeline(scenario(doc));
    CHECK(rep.exit_code == kExitPass);
    std::string header;
    const auto rows = csv_rows(emit_plot_data(rep.doc, PlotKind::residual), header);
    REQUIRE_FALSE(rows.empty());
    for (const auto& r : rows) CHECK(r[3] <= 1e-6);
    CHECK(rep.doc["stages"]["conjugacy"]["sweeps"] == 1);
}

TEST_CASE("envelope series of the scalar stable model stays under its bound", "[report]") {
    Json doc{{"name", "scalar_stable"},
             {"growth_rate", "exp"},
             {"system", {{"terms", {{{"lag", 0.0}, {"matrix", {{"-0.8 * dlogmu"}}}}}}}},
             {"projection", {{"kind", "diagonal"}, {"stable_rates", {0.8}}}},
             {"constants", {{"alpha", 0.8}, {"beta", 0.6}, {"theta", 0.1}, {"eps", 0.1}}},
             {"perturbation", {{"shape", "zero"}}},
             {"dichotomy_check", {{"samples", 60}}}};
    for (const char* rate : {"exp", "poly", "log"}) {
        INFO(rate);
        doc["growth_rate"] = rate;
        const auto sc = scenario(doc);
        Json series = Json::object();
        const auto st = certificate_stage(sc, resolve(sc), series);
        CHECK(st.pass);
        Json rep{{"series", series}};
        std::string header;
        const auto rows = csv_rows(emit_plot_data(rep, PlotKind::envelope), header);
        CHECK(header == "t,s,measured,bound,ratio");
        CHECK(rows.size() == 60);
        for (const auto& r : rows) {
            CHECK(r[0] >= r[1]);
            CHECK(r[4] <= 1.0);
        }
    }
}

TEST_CASE("conjugacy results round-trip through files", "[report]") {
    const auto dir = std::filesystem::temp_directory_path() / "mulab_test_report";
    std::filesystem::create_directories(dir);
    const auto file = dir / "scalar.json";
    const auto sc = scenario(small(shipped("scalar_unstable")));
    const auto rs = resolve(sc);
    Json series = Json::object();
    std::optional<ConjugacyResult> res;
    const auto st = conjugacy_stage(sc, rs, res, series);
    REQUIRE(st.pass);
    save_conjugacy_result(file, sc, st, *res);
    CHECK(std::filesystem::exists(dir / "scalar.eta.bin"));

    auto loaded = load_conjugacy_result(file);
    CHECK(loaded.scenario.name == sc.name);
    CHECK(loaded.result.sweeps.size() == res->sweeps.size());
    CHECK(loaded.result.eta.norms.one_mu == res->eta.norms.one_mu);
    CHECK((loaded.result.eta.values.back() - res->eta.values.back()).cwiseAbs().maxCoeff() == 0.0);

    Json s1 = Json::object(), s2 = Json::object();
    const auto v1 = verification_stage(sc, rs, *res, s1);
    const auto v2 = verification_stage(loaded.scenario, resolve(loaded.scenario), loaded.result, s2);
    CHECK(v1.pass);
    CHECK(v1.data.dump() == v2.data.dump());

    std::ofstream(dir / "bad.json") << "{\"schema\": \"other\"}";
    CHECK_THROWS_AS(load_conjugacy_result(dir / "bad.json"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("plot kinds parse by name", "[report]") {
    CHECK(plot_kind("envelope") == PlotKind::envelope);
    CHECK(plot_kind("residual") == PlotKind::residual);
    CHECK(plot_kind("contraction") == PlotKind::contraction);
    CHECK_THROWS_AS(plot_kind("histogram"), ConfigError);
}
