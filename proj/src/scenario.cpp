#include "mulab/scenario.hpp"

#include "mulab/errors.hpp"
#include "mulab/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mulab {

namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

const json& as_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array");
    return v;
}

/// Field access on one JSON object; every key read is remembered so that
/// done() can reject the rest.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const std::string& path() const { return path_; }
    std::string at(const std::string& key) const { return join(path_, key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    const json& need(const std::string& key) {
        const json* v = find(key);
        if (!v) throw ConfigError(at(key), "missing");
        return *v;
    }

    double number(const std::string& key) { return as_number(need(key), at(key)); }
    double number_or(const std::string& key, double fallback) {
        const json* v = find(key);
        return v ? as_number(*v, at(key)) : fallback;
    }
    double positive(const std::string& key, double fallback) {
        const double x = number_or(key, fallback);
        if (x <= 0.0) throw ConfigError(at(key), "must be positive");
        return x;
    }
    int integer_or(const std::string& key, int fallback, int min) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
        const auto x = v->get<long long>();
        if (x < min || x > 1'000'000'000) throw ConfigError(at(key), "out of range");
        return static_cast<int>(x);
    }
    std::string string(const std::string& key) {
        const json& v = need(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }
    std::optional<Reader> object(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Reader(*v, at(key));
    }
    Reader required_object(const std::string& key) { return Reader(need(key), at(key)); }

    void done() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> number_list(const json& v, const std::string& path) {
    std::vector<double> out;
    for (std::size_t i = 0; i < as_array(v, path).size(); ++i)
        out.push_back(as_number(v[i], index(path, i)));
    return out;
}

Expression entry(const json& v, const std::string& path) {
    if (v.is_string()) return Expression::parse(v.get<std::string>(), path);
    return Expression::constant(as_number(v, path));
}

std::vector<TermSpec> parse_terms(Reader& system, double delay) {
    const std::string path = system.at("terms");
    const json& terms = as_array(system.need("terms"), path);
    if (terms.empty()) throw ConfigError(path, "needs at least one term");
    std::vector<TermSpec> out;
    std::size_t n = 0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        Reader term(terms[k], index(path, k));
        TermSpec spec;
        spec.lag = term.number("lag");
        if (spec.lag < 0.0 || spec.lag > delay) throw ConfigError(term.at("lag"), "must lie in [0, delay]");
        const std::string mpath = term.at("matrix");
        const json& rows = as_array(term.need("matrix"), mpath);
        if (k == 0) n = rows.size();
        if (n == 0 || rows.size() != n) throw ConfigError(mpath, "expected " + std::to_string(n) + " rows");
        for (std::size_t i = 0; i < n; ++i) {
            const std::string rpath = index(mpath, i);
            const json& row = as_array(rows[i], rpath);
            if (row.size() != n) throw ConfigError(rpath, "expected " + std::to_string(n) + " entries");
            std::vector<Expression> parsed;
            for (std::size_t j = 0; j < n; ++j) parsed.push_back(entry(row[j], index(rpath, j)));
            spec.matrix.push_back(std::move(parsed));
        }
        term.done();
        out.push_back(std::move(spec));
    }
    return out;
}

ProjectionSpec parse_projection(Reader r, std::size_t dim) {
    ProjectionSpec p;
    p.kind = r.string("kind");
    if (p.kind == "diagonal") {
        if (const json* v = r.find("stable_rates")) p.stable_rates = number_list(*v, r.at("stable_rates"));
        if (const json* v = r.find("unstable_rates")) p.unstable_rates = number_list(*v, r.at("unstable_rates"));
        if (p.stable_rates.size() + p.unstable_rates.size() != dim)
            throw ConfigError(r.path(), "rates must cover all " + std::to_string(dim) + " coordinates");
        for (double x : p.stable_rates)
            if (x <= 0.0) throw ConfigError(r.at("stable_rates"), "rates must be positive");
        for (double x : p.unstable_rates)
            if (x <= 0.0) throw ConfigError(r.at("unstable_rates"), "rates must be positive");
    } else if (p.kind == "nonuniform_exp") {
        p.alpha = r.number("alpha");
        p.theta = r.number("theta");
        p.theta_declared = r.number("theta_declared");
        if (dim != 1) throw ConfigError(r.path(), "nonuniform_exp is scalar");
    } else {
        throw ConfigError(r.at("kind"), "unknown projection '" + p.kind + "'");
    }
    r.done();
    return p;
}

CeilingValue ceiling_value(Reader& r, const std::string& key) {
    const json& v = r.need(key);
    if (v.is_object()) {
        Reader f(v, r.at(key));
        CeilingValue out{true, f.number("fraction_of_ceiling")};
        if (out.value < 0.0) throw ConfigError(f.at("fraction_of_ceiling"), "must be non-negative");
        f.done();
        return out;
    }
    CeilingValue out{false, as_number(v, r.at(key))};
    if (out.value < 0.0) throw ConfigError(r.at(key), "must be non-negative");
    return out;
}

PerturbationSpec parse_perturbation(Reader r, std::size_t dim, double delay) {
    PerturbationSpec p;
    p.shape = r.string("shape");
    if (p.shape != "quadratic_saturation" && p.shape != "zero")
        throw ConfigError(r.at("shape"), "unknown shape '" + p.shape + "'");
    p.gamma = r.number_or("gamma", 0.0);
    p.delta = r.find("delta") ? ceiling_value(r, "delta") : CeilingValue{};
    p.lambda = r.find("lambda") ? ceiling_value(r, "lambda") : CeilingValue{};
    if (const json* v = r.find("xi")) p.xi = as_number(*v, r.at("xi"));
    if (p.shape == "quadratic_saturation") {
        const auto dir = number_list(r.need("direction"), r.at("direction"));
        if (dir.size() != dim) throw ConfigError(r.at("direction"), "expected " + std::to_string(dim) + " entries");
        p.saturation.direction = Eigen::Map<const Vector>(dir.data(), static_cast<Eigen::Index>(dim));
        const std::string tpath = r.at("taps");
        const json& taps = as_array(r.need("taps"), tpath);
        for (std::size_t i = 0; i < taps.size(); ++i) {
            Reader t(taps[i], index(tpath, i));
            PointTap tap;
            tap.component = t.integer_or("component", -1, 0);
            if (tap.component < 0 || static_cast<std::size_t>(tap.component) >= dim)
                throw ConfigError(t.at("component"), "missing or out of range");
            tap.lag = t.number("lag");
            if (tap.lag < 0.0 || tap.lag > delay) throw ConfigError(t.at("lag"), "must lie in [0, delay]");
            tap.weight = t.number("weight");
            t.done();
            p.saturation.taps.push_back(tap);
        }
    }
    r.done();
    return p;
}

/// Sum of the coefficient matrices per lag at time t.
std::map<double, Matrix> lag_sums(const LinearDelaySystem& sys, double t) {
    std::map<double, Matrix> out;
    for (const auto& term : sys.terms()) {
        auto [it, fresh] = out.try_emplace(term.lag, Matrix::Zero(sys.dim(), sys.dim()));
        it->second += term.coeff(t);
    }
    return out;
}

/// The scenario's system must be the flow whose splitting the projection
/// describes; otherwise every certificate downstream would be about a
/// different equation.
void check_against_reference(const LinearDelaySystem& got, const LinearDelaySystem& ref,
                             double t_lo, double t_hi) {
    for (double t : uniform_grid(t_lo, t_hi, 81)) {
        auto a = lag_sums(got, t);
        auto b = lag_sums(ref, t);
        for (const auto& [lag, _] : b) a.try_emplace(lag, Matrix::Zero(got.dim(), got.dim()));
        for (const auto& [lag, A] : a) {
            const auto it = b.find(lag);
            const Matrix B = it == b.end() ? Matrix::Zero(got.dim(), got.dim()) : it->second;
            const double err = (A - B).cwiseAbs().maxCoeff();
            if (!(err <= 1e-9 * (1.0 + B.cwiseAbs().maxCoeff()))) {
                std::ostringstream msg;
                msg << "does not match the projection's reference flow at t = " << t << ", lag = " << lag;
                throw ConfigError("system", msg.str());
            }
        }
    }
}

LinearDelaySystem build_system(const Scenario& sc, const GrowthRate& g) {
    const int n = static_cast<int>(sc.terms.front().matrix.size());
    std::vector<DelayTerm> terms;
    for (const auto& spec : sc.terms) {
        terms.push_back({spec.lag, [m = spec.matrix, g, n](double t) {
                             Matrix A(n, n);
                             for (int i = 0; i < n; ++i)
                                 for (int j = 0; j < n; ++j)
                                     A(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](t, g);
                             return A;
                         }});
    }
    return LinearDelaySystem(sc.delay, n, std::move(terms), sc.name);
}

DichotomyModel reference_model(const Scenario& sc, const GrowthRate& g) {
    const auto& pr = sc.projection;
    if (pr.kind == "nonuniform_exp") {
        if (sc.growth_rate != "exp") throw ConfigError("growth_rate", "nonuniform_exp requires \"exp\"");
        return nonuniform_exp_model(pr.alpha, pr.theta, pr.theta_declared, sc.delay, sc.resolution);
    }
    DichotomyConstants c = sc.declared;
    const auto lowest = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
    if (!pr.stable_rates.empty() && lowest(pr.stable_rates) < c.alpha)
        throw ConfigError("projection.stable_rates", "a stable rate is below the declared alpha");
    if (!pr.unstable_rates.empty() && lowest(pr.unstable_rates) < c.beta)
        throw ConfigError("projection.unstable_rates", "an unstable rate is below the declared beta");
    // The exact diagonal flow meets these; the factor 2 covers the unstable
    // coordinates' share of P(s) on [s, s + r).
    const double N = ratio_bound_N(g, sc.delay, uniform_grid(-50.0, 50.0, 10001));
    const double k_floor = (pr.unstable_rates.empty() ? 1.0 : 2.0) * std::pow(N, c.alpha);
    c.K = std::max(c.K, k_floor);
    if (!pr.unstable_rates.empty())
        c.a = std::max(c.a, *std::max_element(pr.unstable_rates.begin(), pr.unstable_rates.end()));
    c.k_growth = std::max(c.k_growth, 1.0);
    auto m = diagonal_model(g, sc.delay, pr.stable_rates, pr.unstable_rates, c, sc.resolution);
    m.label = sc.name;
    return m;
}

} // namespace

Scenario parse_scenario(const json& doc) {
    Reader root(doc, "");
    Scenario sc;
    sc.source = doc;
    sc.name = root.string("name");
    sc.growth_rate = root.string("growth_rate");
    try {
        (void)growth_rate_by_id(sc.growth_rate);
    } catch (const Error&) {
        throw ConfigError("growth_rate", "unknown rate '" + sc.growth_rate + "'");
    }
    sc.delay = root.positive("delay", 1.0);
    sc.resolution = root.integer_or("resolution", 32, 2);
    if (const json* v = root.find("seed")) {
        if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
            throw ConfigError("seed", "expected a non-negative integer");
        sc.seed = v->get<std::uint64_t>();
    }

    Reader system = root.required_object("system");
    sc.terms = parse_terms(system, sc.delay);
    system.done();
    const std::size_t dim = sc.terms.front().matrix.size();

    sc.projection = parse_projection(root.required_object("projection"), dim);

    Reader c = root.required_object("constants");
    const DichotomyConstants def;
    sc.declared.alpha = c.number_or("alpha", def.alpha);
    sc.declared.beta = c.number_or("beta", def.beta);
    sc.declared.theta = c.number_or("theta", def.theta);
    sc.declared.nu = c.number_or("nu", def.nu);
    sc.declared.eps = c.number_or("eps", def.eps);
    sc.declared.a = c.number_or("a", def.a);
    sc.declared.K = c.positive("K", def.K);
    sc.declared.k_growth = c.positive("k_growth", def.k_growth);
    sc.q = c.positive("q", 1.0);
    c.done();

    sc.perturbation = parse_perturbation(root.required_object("perturbation"), dim, sc.delay);

    if (auto d = root.object("dichotomy_check")) {
        sc.dichotomy_check.t_min = d->number_or("t_min", sc.dichotomy_check.t_min);
        sc.dichotomy_check.t_max = d->number_or("t_max", sc.dichotomy_check.t_max);
        sc.dichotomy_check.samples = d->integer_or("samples", sc.dichotomy_check.samples, 1);
        sc.dichotomy_check.tolerance = d->number_or("tolerance", sc.dichotomy_check.tolerance);
        if (sc.dichotomy_check.t_max <= sc.dichotomy_check.t_min)
            throw ConfigError(d->at("t_max"), "must exceed t_min");
        d->done();
    }

    if (auto g = root.object("conjugacy")) {
        auto& grid = sc.grid;
        grid.t_min = g->number_or("t_min", grid.t_min);
        grid.t_max = g->number_or("t_max", grid.t_max);
        grid.t_step = g->positive("t_step", grid.t_step);
        grid.z_min = g->number_or("z_min", grid.z_min);
        grid.z_max = g->number_or("z_max", grid.z_max);
        grid.z_points = g->integer_or("z_points", grid.z_points, 3);
        if (grid.z_max <= grid.z_min) throw ConfigError(g->at("z_max"), "must exceed z_min");
        sc.trunc.tail_tol = g->positive("tail_tol", sc.trunc.tail_tol);
        sc.trunc.max_span = g->positive("max_span", sc.trunc.max_span);
        sc.solver.tol = g->positive("tol", sc.solver.tol);
        sc.solver.max_sweeps = g->integer_or("max_sweeps", sc.solver.max_sweeps, 1);
        g->done();
    }

    if (auto v = root.object("verification")) {
        auto& ver = sc.verification;
        ver.residual_samples = v->integer_or("residual_samples", ver.residual_samples, 1);
        ver.max_gap_delays = v->positive("max_gap_delays", ver.max_gap_delays);
        ver.residual_tol = v->positive("residual_tol", ver.residual_tol);
        ver.zero_residual_tol = v->positive("zero_residual_tol", ver.zero_residual_tol);
        ver.fd_tol = v->positive("fd_tol", ver.fd_tol);
        ver.slack = v->number_or("slack", ver.slack);
        v->done();
    }

    root.done();
    return sc;
}

Scenario parse_scenario_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("line " + std::to_string(line), "malformed JSON");
    }
    return parse_scenario(doc);
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string(), "cannot read file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str());
}

ResolvedScenario resolve(const Scenario& sc) {
    const auto g = growth_rate_by_id(sc.growth_rate);
    DichotomyModel model = reference_model(sc, g);
    LinearDelaySystem sys = build_system(sc, g);
    check_against_reference(sys, model.sys, sc.dichotomy_check.t_min, sc.dichotomy_check.t_max);
    model.sys = std::move(sys);

    const auto& c = model.constants;
    ParamSet p;
    p.alpha = c.alpha;
    p.beta = c.beta;
    p.theta = c.theta;
    p.nu = c.nu;
    p.eps = c.eps;
    p.a = c.a;
    p.K = c.K;
    p.k_growth = c.k_growth;
    p.N = model_ratio_bound(model);
    p.D = derived_constant_D(c, p.N);
    p.gamma = sc.perturbation.gamma;
    p.q = sc.q;
    try {
        const auto [lo, hi] = xi_window(p);
        p.xi = sc.perturbation.xi.value_or(0.5 * (lo + hi));
    } catch (const EmptyWindow&) {
        // No admissible xi; the admissibility stage reports it.
        p.xi = sc.perturbation.xi.value_or(0.0);
    }
    const auto& ps = sc.perturbation;
    p.delta = ps.delta.fraction ? ps.delta.value * delta_ceiling(p) : ps.delta.value;
    if (ps.lambda.fraction) {
        try {
            p.lambda = ps.lambda.value * lambda_ceiling(p);
        } catch (const XiOutOfWindow&) {
            p.lambda = 0.0;
        }
    } else {
        p.lambda = ps.lambda.value;
    }

    Perturbation pert = zero_perturbation(model.dim());
    const EnvelopeParams env{p.delta, p.gamma, p.lambda, p.xi, p.eps};
    if (ps.shape == "quadratic_saturation") {
        try {
            pert = saturation_perturbation(g, sc.delay, sc.resolution, env, ps.saturation);
        } catch (const InvalidArgument& e) {
            throw ConfigError("perturbation", e.what());
        }
    } else {
        pert.params = env;
    }
    return {std::move(model), std::move(pert), p, sc.trunc, sc.grid};
}

} // namespace mulab
