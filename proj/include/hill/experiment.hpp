#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hill/asymptotics.hpp"
#include "hill/common.hpp"
#include "hill/discriminant.hpp"
#include "hill/oracle.hpp"
#include "hill/potential.hpp"
#include "hill/spectrum.hpp"

namespace hill {

using json = nlohmann::ordered_json;

struct ExperimentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string kind = "suite";
    std::string output = "hill_out";
    std::string potential = "free";
    int smoothness = 1;

    double rho = default_rho;
    std::vector<double> t_grid{0.0, 0.02, 0.05};
    int n_min = 8, n_max = 20;
    int M = 64, certify_M = 96;

    int k_max = default_k_max;
    std::vector<int> orders{1, 2};

    double ode_tol = default_ode_tol;
    double root_tol = 1e-10;
    double eps_probe = 0.1, c_probe = 0.2, similarity = 10.0;
    double stability_factor = 3.0;  // sup over the upper half of n against the lower half

    double window_lo = 1.0, window_hi = 400.0;
    int arc_grid = 64;

    int bounds_n_min = 0;  // 0: estimated N
    int bounds_n_max = 20;
    double bounds_t_lo = 0.0, bounds_t_hi = pi;
    int bounds_t_points = 33;
    int bounds_M = 48;

    int project_n = 2;
    double project_t0 = 0.2, project_t1 = 0.9;
    double support_a = -2.0, support_b = 3.0;
    int quad_points = 128;
    int project_M = 16, project_M_check = 24;
    double project_tol = 1e-6;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s)
{
    std::vector<T> out;
    for (const auto& x : split(s, ',')) {
        std::size_t used = 0;
        T v{};
        try {
            if constexpr (std::is_integral_v<T>)
                v = T(std::stoll(x, &used));
            else
                v = T(std::stod(x, &used));
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != x.size())
            throw ValidationError("cannot parse list entry '" + x + "'");
        out.push_back(v);
    }
    return out;
}

inline std::string join(const std::vector<double>& v)
{
    std::string s;
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        s += (i ? "," : "") + std::string(buf);
    }
    return s;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c)
{
    static const std::vector<std::string> kinds{"conditions", "compare", "arcs", "singularities",
                                                "bounds",     "project", "suite"};
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
        throw ValidationError("unknown experiment kind '" + c.kind + "'");
    if (!(c.rho > 0.0 && c.rho < pi / 2))
        throw ValidationError("rho must lie in (0, pi/2)");
    if (c.t_grid.empty())
        throw ValidationError("t grid is empty");
    for (double t : c.t_grid)
        if (!(t >= 0.0 && t <= pi))
            throw ValidationError("t grid values must lie in [0, pi]");
    if (c.n_min < 1 || c.n_max < c.n_min)
        throw ValidationError("index range must satisfy 1 <= n_min <= n_max");
    if (c.M < 8 || c.certify_M < 0 || c.bounds_M < 8 || c.project_M < 8 || c.project_M_check < 8)
        throw ValidationError("truncations must be at least 8");
    if (2 * c.n_max > c.M)
        throw ValidationError("n_max exceeds M/2");
    if (c.k_max < 1 || c.orders.empty())
        throw ValidationError("series depth and order list must be nonempty");
    for (int m : c.orders)
        if (m < 1)
            throw ValidationError("orders must be at least 1");
    for (double v : {c.ode_tol, c.root_tol, c.eps_probe, c.c_probe, c.project_tol, c.stability_factor})
        if (!(v > 0.0))
            throw ValidationError("tolerances and probe constants must be positive");
    if (!(c.similarity >= 1.0))
        throw ValidationError("similarity bound must be at least 1");
    if (!(c.window_hi > c.window_lo))
        throw ValidationError("candidate window is empty");
    if (c.arc_grid < 2 || c.bounds_t_points < 2 || c.quad_points < 8)
        throw ValidationError("grid sizes too small");
    if (c.bounds_n_max < std::max(1, c.bounds_n_min) || 2 * c.bounds_n_max > c.bounds_M)
        throw ValidationError("bounds index range must be nonempty and within bounds_M/2");
    if (!(c.bounds_t_hi > c.bounds_t_lo) || c.bounds_t_lo < 0.0 || c.bounds_t_hi > pi)
        throw ValidationError("bounds t interval must be a nonempty part of [0, pi]");
    if (!(c.project_t1 >= c.project_t0) || c.project_t0 < -pi || c.project_t1 > pi)
        throw ValidationError("projection t interval must lie in (-pi, pi]");
    if (!(c.support_b > c.support_a))
        throw ValidationError("projection support is empty");
    if (c.output.empty())
        throw ValidationError("output directory must be named");
}

// Sections: experiment, potential, grid, series, tolerances, window, arcs, bounds, project.
inline ExperimentConfig config_from_tree(const boost::property_tree::ptree& pt)
{
    ExperimentConfig c;
    // present keys must convert; the defaulted overload would swallow bad values
    auto get = [&](const char* key, auto fallback) {
        return pt.get_optional<std::string>(key) ? pt.get<decltype(fallback)>(key) : fallback;
    };
    try {
        c.kind = get("experiment.kind", c.kind);
        c.output = get("experiment.output", c.output);
        c.potential = get("potential.spec", c.potential);
        c.smoothness = get("potential.smoothness", c.smoothness);
        c.rho = get("grid.rho", c.rho);
        if (auto t = pt.get_optional<std::string>("grid.t"))
            c.t_grid = detail::parse_list<double>(*t);
        c.n_min = get("grid.n_min", c.n_min);
        c.n_max = get("grid.n_max", c.n_max);
        c.M = get("grid.M", c.M);
        c.certify_M = get("grid.certify_M", c.certify_M);
        c.k_max = get("series.k_max", c.k_max);
        if (auto o = pt.get_optional<std::string>("series.orders"))
            c.orders = detail::parse_list<int>(*o);
        c.ode_tol = get("tolerances.ode", c.ode_tol);
        c.root_tol = get("tolerances.root", c.root_tol);
        c.eps_probe = get("tolerances.eps_probe", c.eps_probe);
        c.c_probe = get("tolerances.c_probe", c.c_probe);
        c.similarity = get("tolerances.similarity", c.similarity);
        c.stability_factor = get("tolerances.stability_factor", c.stability_factor);
        c.project_tol = get("tolerances.project", c.project_tol);
        c.window_lo = get("window.lo", c.window_lo);
        c.window_hi = get("window.hi", c.window_hi);
        c.arc_grid = get("arcs.grid", c.arc_grid);
        c.bounds_n_min = get("bounds.n_min", c.bounds_n_min);
        c.bounds_n_max = get("bounds.n_max", c.bounds_n_max);
        c.bounds_t_lo = get("bounds.t_lo", c.bounds_t_lo);
        c.bounds_t_hi = get("bounds.t_hi", c.bounds_t_hi);
        c.bounds_t_points = get("bounds.t_points", c.bounds_t_points);
        c.bounds_M = get("bounds.M", c.bounds_M);
        c.project_n = get("project.n", c.project_n);
        c.project_t0 = get("project.t0", c.project_t0);
        c.project_t1 = get("project.t1", c.project_t1);
        if (auto s = pt.get_optional<std::string>("project.support")) {
            const auto ab = detail::parse_list<double>(*s);
            if (ab.size() != 2)
                throw ValidationError("project.support needs two values");
            c.support_a = ab[0];
            c.support_b = ab[1];
        }
        c.quad_points = get("project.quad_points", c.quad_points);
        c.project_M = get("project.M", c.project_M);
        c.project_M_check = get("project.M_check", c.project_M_check);
    } catch (const boost::property_tree::ptree_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    validate(c);
    return c;
}

// Reads an INI file (empty path: defaults) and applies "section.key=value" overrides.
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {})
{
    boost::property_tree::ptree pt;
    if (!path.empty()) {
        try {
            boost::property_tree::read_ini(path, pt);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ValidationError(std::string("config: ") + e.what());
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || o.find('.') > eq)
            throw ValidationError("override must look like section.key=value: " + o);
        pt.put(o.substr(0, eq), o.substr(eq + 1));
    }
    return config_from_tree(pt);
}

inline json to_json(const ExperimentConfig& c)
{
    return json{{"kind", c.kind},
                {"output", c.output},
                {"potential", c.potential},
                {"smoothness", c.smoothness},
                {"rho", c.rho},
                {"t_grid", c.t_grid},
                {"n_min", c.n_min},
                {"n_max", c.n_max},
                {"M", c.M},
                {"certify_M", c.certify_M},
                {"k_max", c.k_max},
                {"orders", c.orders},
                {"ode_tol", c.ode_tol},
                {"root_tol", c.root_tol},
                {"eps_probe", c.eps_probe},
                {"c_probe", c.c_probe},
                {"similarity", c.similarity},
                {"stability_factor", c.stability_factor},
                {"window", {c.window_lo, c.window_hi}},
                {"arc_grid", c.arc_grid},
                {"bounds", {{"n_min", c.bounds_n_min}, {"n_max", c.bounds_n_max}, {"t", {c.bounds_t_lo, c.bounds_t_hi}},
                            {"t_points", c.bounds_t_points}, {"M", c.bounds_M}}},
                {"project", {{"n", c.project_n}, {"t", {c.project_t0, c.project_t1}}, {"support", {c.support_a, c.support_b}},
                             {"quad_points", c.quad_points}, {"M", c.project_M}, {"M_check", c.project_M_check},
                             {"tol", c.project_tol}}}};
}

// ---------------------------------------------------------------- output

inline json cj(cplx z) { return json::array({z.real(), z.imag()}); }

// Finite doubles as numbers, non-finite ones as strings (JSON has no inf).
inline json num(double v)
{
    if (std::isfinite(v))
        return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline std::string fmt17(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct CsvTable {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) { rows.push_back(std::move(r)); }
    std::string text() const
    {
        std::string s = "# v1\n";
        for (std::size_t i = 0; i < header.size(); ++i)
            s += (i ? "," : "") + header[i];
        s += "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i)
                s += (i ? "," : "") + r[i];
            s += "\n";
        }
        return s;
    }
};

struct Check {
    std::string name;
    bool pass = false;
    json detail;
};

// Artifacts are collected in memory and written by one writer in a fixed order;
// checks read back the JSON artifact values they are derived from.
struct Bundle {
    std::vector<std::pair<std::string, json>> json_files;
    std::vector<CsvTable> csv_files;
    std::vector<Check> checks;
    json info = json::object();

    bool all_pass() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
    void merge(Bundle b, const std::string& prefix)
    {
        for (auto& [n, j] : b.json_files)
            json_files.push_back({n, std::move(j)});
        for (auto& c : b.csv_files)
            csv_files.push_back(std::move(c));
        for (auto& c : b.checks) {
            c.name = prefix + "." + c.name;
            checks.push_back(std::move(c));
        }
        if (!b.info.empty())
            info[prefix] = std::move(b.info);
    }
};

inline json summary_of(const Bundle& b, const ExperimentConfig& cfg)
{
    json s;
    s["config"] = to_json(cfg);
    s["info"] = b.info;
    json checks = json::array();
    for (const auto& c : b.checks)
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    s["checks"] = checks;
    s["all_pass"] = b.all_pass();
    json files = json::array();
    for (const auto& f : b.json_files)
        files.push_back(f.first);
    for (const auto& f : b.csv_files)
        files.push_back(f.name);
    s["artifacts"] = files;
    return s;
}

inline void write_bundle(const Bundle& b, const ExperimentConfig& cfg)
{
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output);
    auto put = [&](const std::string& name, const std::string& text) {
        std::ofstream out(fs::path(cfg.output) / name, std::ios::binary);
        if (!out)
            throw ExperimentError("cannot write " + name + " in " + cfg.output);
        out << text;
    };
    for (const auto& [name, j] : b.json_files)
        put(name, j.dump(2) + "\n");
    for (const auto& c : b.csv_files)
        put(c.name, c.text());
    put("summary.json", summary_of(b, cfg).dump(2) + "\n");
}

// Runs fn, rethrowing module errors tagged with module, operation and parameters.
template <class F>
auto guarded(const std::string& module, const std::string& op, const std::string& params, F&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ExperimentError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExperimentError(module + "." + op + "(" + params + "): " + e.what());
    }
}

// Boundedness of scaled errors: sup over the upper half of the n range within
// `factor` of the sup over the lower half. Values under `floor` are rounding.
inline Check stability_check(const std::string& name, const json& rows, const char* key, int n_min, int n_max,
                             double factor, double floor = 0.0)
{
    const double mid = 0.5 * (n_min + n_max);
    double lo = 0.0, hi = 0.0;
    bool finite = true;
    for (const auto& r : rows) {
        if (!r[key].is_number()) {
            finite = false;
            continue;
        }
        double& sup = r["n"].get<int>() <= mid ? lo : hi;
        sup = std::max(sup, r[key].get<double>());
    }
    Check c{name, finite && hi <= factor * lo + floor, {}};
    c.detail = {{"sup_lower_half", lo}, {"sup_upper_half", hi}, {"factor", factor}, {"rounding_floor", floor}};
    return c;
}

// ---------------------------------------------------------------- studies

inline Bundle study_conditions(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    const std::string params = p.label() + ", [" + std::to_string(cfg.n_min) + "," + std::to_string(cfg.n_max) + "]";
    auto report = [&](const PotentialSpec& q) {
        return guarded("potential", "check_conditions", params, [&] {
            return check_conditions(q, cfg.n_min, cfg.n_max, cfg.eps_probe, cfg.c_probe, cfg.similarity);
        });
    };
    const auto r = report(p);
    const auto ra = report(p.adjoint());
    auto verdict = [](const Verdict& v) { return json{{"holds", v.holds}, {"margin", num(v.margin)}}; };
    json j;
    j["potential"] = p.label();
    j["range"] = {r.n_min, r.n_max};
    j["smoothness_periodic"] = r.smoothness_periodic;
    j["log_ratio"] = {{"monotone", r.log_ratio.holds}, {"slope", num(r.log_ratio_slope)}};
    j["similar"] = verdict(r.similar);
    j["lower_bound"] = verdict(r.lower_bound);
    j["product_re"] = verdict(r.product_re);
    j["product_im"] = verdict(r.product_im);
    j["product_sector"] = verdict(r.product_sector);
    j["odd_lower_bound"] = verdict(r.odd_lower_bound);
    j["odd_product_re"] = verdict(r.odd_product_re);
    j["odd_product_im"] = verdict(r.odd_product_im);
    j["odd_product_sector"] = verdict(r.odd_product_sector);
    j["riesz_plus_bound"] = verdict(r.riesz_plus_bound);
    j["riesz_minus_bound"] = verdict(r.riesz_minus_bound);
    j["riesz_similar"] = r.riesz_similar;
    j["realized_c"] = num(r.realized_c);
    j["realized_eps"] = num(r.realized_eps);
    j["max_ratio"] = num(r.max_ratio);
    j["overall"] = r.overall;
    j["adjoint_overall"] = ra.overall;
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"n", row.n},
                        {"q_2n", cj(row.q_plus)},
                        {"q_-2n", cj(row.q_minus)},
                        {"log_ratio", num(row.log_ratio)},
                        {"ratio", num(row.ratio)},
                        {"margin_lower", num(row.margin_lower)},
                        {"margin_product_re", num(row.margin_product_re)},
                        {"margin_product_im", num(row.margin_product_im)},
                        {"margin_odd_lower", num(row.margin_odd_lower)},
                        {"margin_odd_product_re", num(row.margin_odd_product_re)},
                        {"margin_odd_product_im", num(row.margin_odd_product_im)},
                        {"riesz_plus", cj(row.riesz_plus)},
                        {"riesz_minus", cj(row.riesz_minus)}});
    j["rows"] = rows;
    Bundle b;
    b.json_files.push_back({"conditions.json", j});
    b.info = {{"overall", j["overall"]}};
    b.checks.push_back({"adjoint-duality", j["overall"] == j["adjoint_overall"],
                        {{"overall", j["overall"]}, {"adjoint_overall", j["adjoint_overall"]}}});
    return b;
}

inline Bundle study_compare(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    CsvTable csv{"compare.csv",
                 {"n", "t", "j", "m", "region", "re_asym", "im_asym", "re_oracle", "im_oracle", "error", "scaled"},
                 {}};
    json rows = json::array(), middle = json::array();
    OracleOptions o;
    o.certify_M = cfg.certify_M;
    o.duals = false;
    for (double t : cfg.t_grid) {
        const auto S = guarded("oracle", "oracle_spectrum", "t=" + fmt17(t) + ", M=" + std::to_string(cfg.M),
                               [&] { return oracle_spectrum(p, t, cfg.M, o); });
        const Region reg = region_of(t, cfg.rho);
        for (int n = cfg.n_min; n <= cfg.n_max; ++n)
            for (int j = 1; j <= 2; ++j) {
                // index n on the lambda_{n,2} branch, -n on lambda_{n,1} (odd side: -(n+1))
                const int idx = j == 2 ? n : (reg == Region::near_pi ? -(n + 1) : -n);
                const cplx ref = S.lambda(idx);
                auto emit = [&](int m, cplx lam, double scaled, json& sink) {
                    const double err = std::abs(lam - ref);
                    csv.add({std::to_string(n), fmt17(t), std::to_string(j), std::to_string(m), to_string(reg),
                             fmt17(lam.real()), fmt17(lam.imag()), fmt17(ref.real()), fmt17(ref.imag()), fmt17(err),
                             fmt17(scaled)});
                    sink.push_back({{"n", n}, {"t", t}, {"j", j}, {"m", m}, {"error", num(err)}, {"scaled", num(scaled)}});
                };
                if (reg == Region::middle) {
                    const double w = j == 2 ? two_pi * n + t : two_pi * n - t;
                    const cplx principal = w * w;
                    emit(0, principal, n * std::abs(principal - ref) / std::log(double(n)), middle);
                    continue;
                }
                for (int m : cfg.orders) {
                    const auto a = guarded("asymptotics", "fixed_point_eigenvalue",
                                           "n=" + std::to_string(n) + ", j=" + std::to_string(j) + ", t=" + fmt17(t) +
                                               ", m=" + std::to_string(m),
                                           [&] { return fixed_point_eigenvalue(p, n, j, t, m, cfg.k_max, cfg.rho); });
                    emit(m, a.lambda, std::pow(double(n), m) * std::abs(a.lambda - ref), rows);
                }
            }
    }
    // oracle rounding on the largest eigenvalue, carried through the n^m scaling
    const double wmax = two_pi * (cfg.n_max + 1) + pi;
    auto floor = [&](int m) {
        return 1e3 * std::numeric_limits<double>::epsilon() * wmax * wmax * std::pow(double(cfg.n_max), std::max(m, 1));
    };
    Bundle b;
    b.json_files.push_back({"compare.json", {{"rows", rows}, {"middle", middle}}});
    b.csv_files.push_back(csv);
    for (int m : cfg.orders) {
        json sel = json::array();
        for (const auto& r : rows)
            if (r["m"] == m)
                sel.push_back(r);
        if (!sel.empty())
            b.checks.push_back(stability_check("order-" + std::to_string(m) + "-bounded", sel, "scaled", cfg.n_min,
                                               cfg.n_max, cfg.stability_factor, floor(m)));
    }
    if (!middle.empty())
        b.checks.push_back(
            stability_check("middle-bounded", middle, "scaled", cfg.n_min, cfg.n_max, cfg.stability_factor, floor(1)));
    return b;
}

inline Bundle study_arcs(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    Bundle b;
    json arcs = json::array();
    std::vector<SpectralArc> traced;
    for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
        auto arc = guarded("spectrum", "trace_arc", "n=" + std::to_string(n) + ", M=" + std::to_string(cfg.M),
                           [&] { return trace_arc(p, n, cfg.arc_grid, cfg.M, cfg.ode_tol); });
        CsvTable csv{"arc_" + std::to_string(n) + ".csv", {"t", "re_lambda", "im_lambda"}, {}};
        for (const auto& s : arc.samples)
            csv.add({fmt17(s.t), fmt17(s.lambda.real()), fmt17(s.lambda.imag())});
        b.csv_files.push_back(csv);
        arcs.push_back({{"n", n},
                        {"lambda0", cj(arc.lambda0)},
                        {"lambda_pi", cj(arc.lambda_pi)},
                        {"endpoint0_simple", arc.endpoint0_simple},
                        {"endpoint_pi_simple", arc.endpoint_pi_simple},
                        {"continuous", arc.continuous},
                        {"injective", arc.injective},
                        {"min_self_distance", num(arc.min_self_distance)},
                        {"derivative_mismatch", num(arc.derivative_mismatch)},
                        {"min_abs_dF", num(arc.min_abs_dF)},
                        {"collision_t", arc.collision_t ? json(*arc.collision_t) : json(nullptr)}});
        traced.push_back(std::move(arc));
    }
    json sep = json::array();
    for (std::size_t i = 0; i + 1 < traced.size(); ++i)
        sep.push_back({{"n", traced[i].n}, {"next", traced[i + 1].n}, {"distance", num(arc_distance(traced[i], traced[i + 1]))}});
    b.json_files.push_back({"arcs.json", {{"arcs", arcs}, {"separation", sep}}});
    const double dt = pi / cfg.arc_grid;
    bool cont = true, inj = true, sep_ok = true, deriv_ok = true;
    double worst_deriv = 0.0;
    for (const auto& a : arcs) {
        cont = cont && a["continuous"].get<bool>();
        inj = inj && a["injective"].get<bool>();
        const double d = a["derivative_mismatch"].is_number() ? a["derivative_mismatch"].get<double>() : 1e300;
        worst_deriv = std::max(worst_deriv, d);
    }
    // first order in the step: central differences of a smooth arc
    deriv_ok = worst_deriv <= 10.0 * dt;
    for (const auto& s : sep)
        sep_ok = sep_ok && s["distance"].is_number() && s["distance"].get<double>() > 0.0;
    b.checks.push_back({"continuous", cont, {}});
    b.checks.push_back({"injective", inj, {}});
    b.checks.push_back({"separated", sep_ok, {}});
    b.checks.push_back({"derivative-identity", deriv_ok, {{"max_mismatch", worst_deriv}, {"step", dt}}});
    return b;
}

inline int classification_M(const PotentialSpec& p, double hi)
{
    const int nmax = int(std::ceil(std::sqrt(std::max(hi, 1.0)) / two_pi)) + 1;
    return std::max({24, 2 * nmax + 16, p.support_bound() + 8});
}

inline Bundle study_singularities(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    const std::string params = "window=[" + fmt17(cfg.window_lo) + "," + fmt17(cfg.window_hi) + "]";
    CandidateOptions opt;
    opt.ode_tol = cfg.ode_tol;
    const auto cands = guarded("spectrum", "find_singularity_candidates", params,
                               [&] { return find_singularity_candidates(p, cfg.window_lo, cfg.window_hi, 1e-12, opt); });
    const int M = classification_M(p, cfg.window_hi);
    json list = json::array();
    int counts[4] = {0, 0, 0, 0};
    for (const auto& c0 : cands) {
        const auto c = guarded("spectrum", "classify_singularity", "lambda=" + fmt17(c0.lambda.real()),
                               [&] { return classify_singularity(p, c0, M); });
        ++counts[int(c.classification)];
        const auto& e = c.evidence;
        list.push_back({{"lambda", cj(c.lambda)},
                        {"t", c.t_value},
                        {"F", cj(c.F)},
                        {"dF_residual", num(c.dF_residual)},
                        {"classification", to_string(c.classification)},
                        {"evidence",
                         {{"algebraic", e.algebraic},
                          {"geometric", e.geometric},
                          {"reduced", e.reduced},
                          {"nilpotent", num(e.nilpotent)},
                          {"noise", num(e.noise)},
                          {"smallest_sv", num(e.smallest_sv)},
                          {"second_sv", num(e.second_sv)},
                          {"oracle_lambda", cj(e.oracle_lambda)},
                          {"oracle_distance", num(e.oracle_distance)}}}});
    }
    Bundle b;
    b.json_files.push_back({"singularities.json", {{"window", {cfg.window_lo, cfg.window_hi}}, {"M", M}, {"candidates", list}}});
    b.info = {{"candidates", list.size()},
              {"spectral_singularity", counts[0]},
              {"diagonalizable_double", counts[1]},
              {"simple", counts[2]},
              {"unresolved", counts[3]}};
    bool resolved = true, consistent = true;
    for (const auto& c : list) {
        resolved = resolved && c["classification"] != "unresolved";
        if (c["classification"] == "spectral-singularity") {
            const double scale = 1.0 + std::hypot(c["lambda"][0].get<double>(), c["lambda"][1].get<double>());
            consistent = consistent && c["dF_residual"].is_number() &&
                         c["dF_residual"].get<double>() < singular_dF_threshold * scale &&
                         c["evidence"]["geometric"].get<int>() < c["evidence"]["algebraic"].get<int>();
        }
    }
    b.checks.push_back({"classified", resolved, b.info});
    b.checks.push_back({"two-signal-consistency", consistent, {}});
    return b;
}

inline std::vector<double> uniform_grid(double a, double b, int points)
{
    std::vector<double> g;
    for (int i = 0; i < points; ++i)
        g.push_back(i == points - 1 ? b : a + (b - a) * i / (points - 1));
    return g;
}

inline Bundle study_bounds(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    const auto grid = uniform_grid(cfg.bounds_t_lo, cfg.bounds_t_hi, cfg.bounds_t_points);
    int n_lo = cfg.bounds_n_min;
    if (n_lo <= 0)
        n_lo = guarded("oracle", "estimate_N", "M=" + std::to_string(cfg.bounds_M),
                       [&] { return estimate_N(p, grid, cfg.bounds_M, cfg.rho); });
    n_lo = std::min(n_lo, cfg.bounds_n_max);
    const std::string params = "n=[" + std::to_string(n_lo) + "," + std::to_string(cfg.bounds_n_max) + "], M=" +
                               std::to_string(cfg.bounds_M);
    const auto r = guarded("spectrum", "uniform_bound_report", params, [&] {
        return uniform_bound_report(p, n_lo, cfg.bounds_n_max, grid, cfg.bounds_M, 0);
    });
    auto sweep = [](const BoundSweep& s) {
        json rows = json::array();
        for (const auto& row : s.rows)
            rows.push_back({{"n", row.n},
                            {"t", row.t},
                            {"inv_alpha", num(row.inv_alpha)},
                            {"proj_norm", {num(row.proj_norm[0]), num(row.proj_norm[1]), num(row.proj_norm[2])}},
                            {"idempotence", num(row.idempotence)},
                            {"defect", row.defect}});
        return json{{"sup_inv_alpha", num(s.sup_inv_alpha)},
                    {"argmax_alpha", {s.argmax_alpha_n, s.argmax_alpha_t}},
                    {"sup_proj_norm", num(s.sup_proj_norm)},
                    {"argmax_proj", {s.argmax_proj_n, s.argmax_proj_t}},
                    {"max_idempotence", num(s.max_idempotence)},
                    {"defect_at", s.defect_at ? json{s.defect_at->first, s.defect_at->second} : json(nullptr)},
                    {"rows", rows}};
    };
    json j{{"n_range", {n_lo, cfg.bounds_n_max}},
           {"M", cfg.bounds_M},
           {"coarse", sweep(r.coarse)},
           {"fine", sweep(r.fine)},
           {"alpha_change", num(r.alpha_change)},
           {"proj_change", num(r.proj_change)},
           {"finite", r.finite},
           {"stable", r.stable},
           {"verdict", r.verdict}};
    Bundle b;
    b.json_files.push_back({"bounds.json", j});
    b.info = {{"verdict", j["verdict"]},
              {"sup_inv_alpha", j["coarse"]["sup_inv_alpha"]},
              {"sup_proj_norm", j["coarse"]["sup_proj_norm"]}};
    const bool idem = j["coarse"]["max_idempotence"].is_number() && j["coarse"]["max_idempotence"].get<double>() < 1e-8 &&
                      j["fine"]["max_idempotence"].is_number() && j["fine"]["max_idempotence"].get<double>() < 1e-8;
    b.checks.push_back({"finite", j["finite"].get<bool>(), {{"defect_at", j["coarse"]["defect_at"]}}});
    b.checks.push_back({"grid-stable", j["stable"].get<bool>(),
                        {{"alpha_change", j["alpha_change"]}, {"proj_change", j["proj_change"]}}});
    b.checks.push_back({"idempotence", idem, {}});
    return b;
}

// Direct band-pass of f onto frequencies [xi0, xi1]: convolution with
// (e^{i xi1 u} - e^{i xi0 u}) / (2 pi i u).
inline std::vector<cplx> band_pass(const SampledFunction& f, double xi0, double xi1)
{
    std::vector<cplx> out(f.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        cplx s{};
        for (std::size_t k = 0; k < f.values.size(); ++k) {
            const double u = f.x(i) - f.x(k);
            const cplx ker = u == 0.0 ? cplx{(xi1 - xi0) / two_pi}
                                      : (std::exp(cplx{0.0, xi1 * u}) - std::exp(cplx{0.0, xi0 * u})) /
                                            (cplx{0.0, two_pi * u});
            s += f.values[k] * ker;
        }
        out[i] = s * f.h;
    }
    return out;
}

inline Bundle study_project(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    const auto f = bump(cfg.support_a, cfg.support_b);
    const std::string params = "n=" + std::to_string(cfg.project_n) + ", t=[" + fmt17(cfg.project_t0) + "," +
                               fmt17(cfg.project_t1) + "]";
    const auto P = guarded("spectrum", "apply_projection", params, [&] {
        return apply_projection(p, cfg.project_n, cfg.project_t0, cfg.project_t1, f, cfg.quad_points, cfg.project_M);
    });
    const auto again = guarded("spectrum", "reproject", params + ", M=" + std::to_string(cfg.project_M_check),
                               [&] { return reproject(p, P.packet, cfg.project_M_check); });
    const double idem = packet_defect(P.packet, again);
    CsvTable csv{"project.csv", {"x", "re_f", "im_f", "re_Pf", "im_Pf"}, {}};
    for (std::size_t i = 0; i < f.values.size(); ++i)
        csv.add({fmt17(f.x(i)), fmt17(f.values[i].real()), fmt17(f.values[i].imag()),
                 fmt17(P.samples.values[i].real()), fmt17(P.samples.values[i].imag())});
    json j{{"n", cfg.project_n},
           {"t", {cfg.project_t0, cfg.project_t1}},
           {"nodes", P.packet.t.size()},
           {"min_abs_alpha", num(P.min_abs_alpha)},
           {"idempotence_defect", num(idem)}};
    if (p.is_zero()) {
        const double s = two_pi * cfg.project_n;
        const auto ref = band_pass(f, s + cfg.project_t0, s + cfg.project_t1);
        double num_ = 0.0, den = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            num_ = std::max(num_, std::abs(P.samples.values[i] - ref[i]));
            den = std::max(den, std::abs(ref[i]));
        }
        j["band_pass_error"] = num(den > 0.0 ? num_ / den : num_);
    }
    Bundle b;
    b.json_files.push_back({"project.json", j});
    b.csv_files.push_back(csv);
    b.checks.push_back({"idempotence", j["idempotence_defect"].is_number() &&
                                           j["idempotence_defect"].get<double>() < cfg.project_tol,
                        {{"defect", j["idempotence_defect"]}}});
    if (j.contains("band_pass_error"))
        b.checks.push_back({"band-pass", j["band_pass_error"].is_number() &&
                                             j["band_pass_error"].get<double>() < cfg.project_tol,
                            {{"error", j["band_pass_error"]}}});
    return b;
}

// Cross-method agreement: oracle eigenvalues against discriminant roots, and the
// Wronskian invariant along the way.
inline Bundle study_consistency(const PotentialSpec& p, const ExperimentConfig& cfg)
{
    json rows = json::array();
    OracleOptions o;
    o.duals = false;
    o.certify_M = cfg.certify_M;
    double worst = 0.0, worst_w = 0.0;
    for (double t : cfg.t_grid) {
        const auto S = guarded("oracle", "oracle_spectrum", "t=" + fmt17(t), [&] { return oracle_spectrum(p, t, cfg.M, o); });
        for (int n : {cfg.n_min, cfg.n_max})
            for (int idx : {n, -n}) {
                const cplx ref = S.lambda(idx);
                RootOptions ro;
                ro.tol = cfg.root_tol;
                ro.ode_tol = cfg.ode_tol;
                const auto r = guarded("discriminant", "solve_characteristic",
                                       "t=" + fmt17(t) + ", seed=" + fmt17(ref.real()),
                                       [&] { return solve_characteristic(p, t, ref, ro); });
                const auto s = monodromy(p, r.lambda, cfg.ode_tol);
                const double err = rel_err(r.lambda, ref);
                worst = std::max(worst, err);
                worst_w = std::max(worst_w, s.wronskian_defect);
                rows.push_back({{"n", idx}, {"t", t}, {"oracle", cj(ref)}, {"root", cj(r.lambda)}, {"rel_error", num(err)},
                                {"multiplicity", to_string(r.multiplicity_flag)}, {"wronskian_defect", num(s.wronskian_defect)}});
            }
    }
    Bundle b;
    b.json_files.push_back({"consistency.json", {{"rows", rows}}});
    b.checks.push_back({"oracle-vs-roots", worst <= 1e-8, {{"max_rel_error", worst}}});
    b.checks.push_back({"wronskian", worst_w <= 10.0 * cfg.ode_tol, {{"max_defect", worst_w}}});
    return b;
}

inline Bundle run_experiment(const ExperimentConfig& cfg)
{
    validate(cfg);
    const auto p = guarded("potential", "parse_preset", cfg.potential, [&] { return parse_preset(cfg.potential, cfg.smoothness); });
    Bundle b;
    b.info["potential"] = p.label();
    auto run = [&](const std::string& kind) {
        if (kind == "conditions")
            b.merge(study_conditions(p, cfg), kind);
        else if (kind == "compare")
            b.merge(study_compare(p, cfg), kind);
        else if (kind == "arcs")
            b.merge(study_arcs(p, cfg), kind);
        else if (kind == "singularities")
            b.merge(study_singularities(p, cfg), kind);
        else if (kind == "bounds")
            b.merge(study_bounds(p, cfg), kind);
        else if (kind == "project")
            b.merge(study_project(p, cfg), kind);
        else if (kind == "consistency")
            b.merge(study_consistency(p, cfg), kind);
    };
    if (cfg.kind == "suite")
        for (const char* k : {"conditions", "consistency", "compare", "arcs", "singularities", "bounds", "project"})
            run(k);
    else
        run(cfg.kind);
    write_bundle(b, cfg);
    return b;
}

// ---------------------------------------------------------------- direct queries

inline json discriminant_rows(const PotentialSpec& p, const std::vector<cplx>& lambdas, double ode_tol, CsvTable& csv,
                              double& worst_wronskian)
{
    csv = CsvTable{"discriminant.csv", {"re_lambda", "im_lambda", "re_F", "im_F", "re_dF", "im_dF"}, {}};
    json rows = json::array();
    worst_wronskian = 0.0;
    for (const cplx& l : lambdas) {
        const auto s = guarded("discriminant", "monodromy", "lambda=" + fmt17(l.real()) + "," + fmt17(l.imag()),
                               [&] { return monodromy(p, l, ode_tol); });
        csv.add({fmt17(l.real()), fmt17(l.imag()), fmt17(s.F.real()), fmt17(s.F.imag()), fmt17(s.dF.real()),
                 fmt17(s.dF.imag())});
        worst_wronskian = std::max(worst_wronskian, s.wronskian_defect);
        rows.push_back({{"lambda", cj(l)}, {"F", cj(s.F)}, {"dF", cj(s.dF)}, {"wronskian_defect", num(s.wronskian_defect)}});
    }
    return rows;
}

inline json oracle_json(const PotentialSpec& p, double t, int M, bool certify)
{
    OracleOptions o;
    o.certify = certify;
    const auto S = guarded("oracle", "oracle_spectrum", "t=" + fmt17(t) + ", M=" + std::to_string(M),
                           [&] { return oracle_spectrum(p, t, M, o); });
    json ev = json::array(), res = json::array();
    for (std::size_t i = 0; i < S.eigenvalues.size(); ++i) {
        ev.push_back(cj(S.eigenvalues[i]));
        res.push_back(num(S.residuals[i]));
    }
    json pairing = json::array();
    for (const auto& [n, col] : S.pairing) {
        json row{{"n", n}, {"column", col}, {"lambda", cj(S.eigenvalues[col])}, {"cluster_size", S.cluster_size[col]},
                 {"geometric", S.geometric[col]}, {"low_index_cluster", S.low_index_cluster.count(n) ? S.low_index_cluster.at(n) : false}};
        if (std::abs(n) <= M / 2) {
            const auto bd = biorthogonal(S, n);
            row["alpha"] = cj(bd.alpha);
            row["defect"] = bd.defect;
            row["u"] = cj(bd.u);
            row["v"] = cj(bd.v);
            row["tail_norm"] = num(bd.tail_norm);
        }
        pairing.push_back(row);
    }
    return json{{"t", t},
                {"M", M},
                {"eigenvalues", ev},
                {"residuals", res},
                {"pairing", pairing},
                {"certified", S.certified},
                {"certified_up_to", S.certified_up_to},
                {"certification_error", num(S.certification_error)}};
}

inline json asymptotic_json(const PotentialSpec& p, int n, int j, double t, int m, int k_max, double rho,
                            std::optional<Side> side)
{
    const std::string params = "n=" + std::to_string(n) + ", j=" + std::to_string(j) + ", t=" + fmt17(t) +
                               ", m=" + std::to_string(m);
    auto r = guarded("asymptotics", "fixed_point_eigenvalue", params,
                     [&] { return fixed_point_eigenvalue(p, n, j, t, m, k_max, rho, side); });
    json out{{"n", n}, {"j", j}, {"t", t}, {"order", m}, {"k_max", k_max}, {"region", to_string(r.region)}};
    const bool series = r.region != Region::middle || side;
    out["side"] = series ? json(to_string(r.side)) : json(nullptr);
    out["lambda"] = cj(r.lambda);
    json it = json::array();
    for (std::size_t i = 0; i < r.iterates.size(); ++i)
        it.push_back({{"k", i + 1}, {"value", cj(r.iterates[i])}, {"step", i ? num(r.steps[i - 1]) : json(nullptr)}});
    out["iterates"] = it;
    out["branch_ambiguous"] = r.branch_ambiguous;
    out["alpha"] = nullptr;
    if (series) {
        const auto e = guarded("asymptotics", "eval_series", params,
                               [&] { return eval_series(p, n, r.lambda, t, k_max, r.side); });
        json terms = json::array();
        for (int k = 0; k < k_max; ++k)
            terms.push_back({{"k", k + 1}, {"a", cj(e.a[k])}, {"b", cj(e.b[k])}, {"a_prime", cj(e.ap[k])},
                             {"b_prime", cj(e.bp[k])}});
        out["series"] = {{"A", cj(e.A)}, {"A_prime", cj(e.Aprime)}, {"B", cj(e.B)}, {"B_prime", cj(e.Bprime)},
                         {"C", cj(e.C)}, {"D", cj(e.D)}, {"D1", cj(e.D1)}, {"D2", cj(e.D2)}, {"terms", terms}};
        try {
            const auto prof = eigenfunction_profile(p, n, j, t, m, k_max, rho, side);
            out["alpha"] = cj(prof.alpha);
            json pr = json::array();
            for (const auto& [k, v] : prof.profile)
                pr.push_back({{"k", k}, {"coeff", cj(v)}});
            out["profile"] = pr;
        } catch (const DefectiveEigenvalue& ex) {
            out["alpha_error"] = ex.what();
        }
    }
    return out;
}

}  // namespace hill
