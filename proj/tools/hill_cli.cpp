#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hill/experiment.hpp"

using namespace hill;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> set;
    std::string potential, output;
    int smoothness = -1;
    std::string t_list;
    int n_min = 0, n_max = 0, M = 0;
    double rho = 0.0;
};

void add_common(CLI::App* app, Common& c, bool t_grid = true)
{
    app->add_option("--config", c.config, "INI configuration file");
    app->add_option("--set", c.set, "override, section.key=value (repeatable)");
    app->add_option("--potential", c.potential, "free | gasymov:c | cosine:k:a | decay:a:sigma:K | file:PATH");
    app->add_option("--smoothness", c.smoothness, "smoothness index s");
    app->add_option("--output", c.output, "output directory");
    if (t_grid)
        app->add_option("--t", c.t_list, "comma-separated t grid");
    app->add_option("--n-min", c.n_min);
    app->add_option("--n-max", c.n_max);
    app->add_option("--M", c.M, "oracle truncation half-width");
    app->add_option("--rho", c.rho);
}

std::vector<std::string> overrides(const Common& c, const std::string& kind)
{
    std::vector<std::string> o{"experiment.kind=" + kind};
    if (!c.potential.empty())
        o.push_back("potential.spec=" + c.potential);
    if (c.smoothness >= 0)
        o.push_back("potential.smoothness=" + std::to_string(c.smoothness));
    if (!c.output.empty())
        o.push_back("experiment.output=" + c.output);
    if (!c.t_list.empty())
        o.push_back("grid.t=" + c.t_list);
    if (c.n_min > 0)
        o.push_back("grid.n_min=" + std::to_string(c.n_min));
    if (c.n_max > 0)
        o.push_back("grid.n_max=" + std::to_string(c.n_max));
    if (c.M > 0)
        o.push_back("grid.M=" + std::to_string(c.M));
    if (c.rho > 0.0)
        o.push_back("grid.rho=" + fmt17(c.rho));
    o.insert(o.end(), c.set.begin(), c.set.end());
    return o;
}

// Config for the direct queries: potential and tolerances only.
ExperimentConfig query_config(Common c)
{
    c.M = 0;  // --M is the oracle query's own truncation
    auto o = overrides(c, "suite");
    return load_config(c.config, o);
}

int report(const std::vector<Check>& checks)
{
    bool ok = true;
    for (const auto& c : checks) {
        std::fprintf(stderr, "%s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str());
        ok = ok && c.pass;
    }
    return ok ? 0 : 1;
}

void emit(const std::string& path, const std::string& text)
{
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ExperimentError("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hill operator spectral laboratory"};
    app.require_subcommand(1);

    Common common;
    std::string out_path;
    int rc = 0;

    for (const char* kind : {"conditions", "compare", "arcs", "singularities", "bounds", "project", "suite"}) {
        auto* sub = app.add_subcommand(kind, std::string("run the ") + kind + " study");
        add_common(sub, common);
        sub->callback([&, kind] {
            const auto cfg = load_config(common.config, overrides(common, kind));
            const auto b = run_experiment(cfg);
            rc = report(b.checks);
            std::fprintf(stderr, "artifacts in %s\n", cfg.output.c_str());
        });
    }

    // discriminant: CSV of F and dF at the given points or along a segment
    std::vector<std::string> lambdas;
    std::string seg_from, seg_to;
    int seg_points = 0;
    auto* disc = app.add_subcommand("discriminant", "evaluate F and dF/dlambda");
    add_common(disc, common);
    disc->add_option("--lambda", lambdas, "complex point re,im (repeatable)");
    disc->add_option("--from", seg_from, "segment start re,im");
    disc->add_option("--to", seg_to, "segment end re,im");
    disc->add_option("--points", seg_points, "segment points");
    disc->add_option("--out", out_path, "CSV file (default stdout)");
    disc->callback([&] {
        const auto cfg = query_config(common);
        const auto p = parse_preset(cfg.potential, cfg.smoothness);
        std::vector<cplx> pts;
        for (const auto& s : lambdas)
            pts.push_back(parse_complex(s));
        if (seg_points > 0) {
            if (seg_from.empty() || seg_to.empty())
                throw ValidationError("--points needs --from and --to");
            const cplx a = parse_complex(seg_from), b = parse_complex(seg_to);
            for (int i = 0; i < seg_points; ++i)
                pts.push_back(seg_points == 1 ? a : a + (b - a) * (double(i) / (seg_points - 1)));
        }
        if (pts.empty())
            throw ValidationError("no evaluation points given");
        CsvTable csv;
        double worst = 0.0;
        discriminant_rows(p, pts, cfg.ode_tol, csv, worst);
        emit(out_path, csv.text());
        rc = report({{"wronskian", worst <= 10.0 * cfg.ode_tol, {}}});
    });

    // roots: characteristic-equation roots seeded by the first-order formulas or explicit seeds
    std::vector<std::string> seeds;
    double root_t = 0.0;
    auto* roots = app.add_subcommand("roots", "solve F(lambda) = 2 cos t");
    add_common(roots, common, false);
    roots->add_option("--t", root_t, "quasimomentum t in [0, pi]")->required();
    roots->add_option("--seed", seeds, "seed re,im (repeatable); default: first-order values over the n range");
    roots->add_option("--out", out_path, "JSON file (default stdout)");
    roots->callback([&] {
        const auto cfg = query_config(common);
        const auto p = parse_preset(cfg.potential, cfg.smoothness);
        std::vector<std::pair<std::string, cplx>> jobs;
        for (const auto& s : seeds)
            jobs.push_back({"seed", parse_complex(s)});
        if (jobs.empty())
            for (int n = cfg.n_min; n <= cfg.n_max; ++n)
                for (int j = 1; j <= 2; ++j)
                    jobs.push_back({std::to_string(n) + "," + std::to_string(j),
                                    first_order_eigenvalue(p, n, j, root_t, cfg.rho)});
        RootOptions ro;
        ro.tol = cfg.root_tol;
        ro.ode_tol = cfg.ode_tol;
        json rows = json::array();
        for (const auto& [label, seed] : jobs) {
            const auto r = guarded("discriminant", "solve_characteristic", "t=" + fmt17(root_t) + ", seed=" + label,
                                   [&] { return solve_characteristic(p, root_t, seed, ro); });
            rows.push_back({{"label", label}, {"seed", cj(seed)}, {"lambda", cj(r.lambda)},
                            {"multiplicity", to_string(r.multiplicity_flag)}, {"residual", num(r.residual)},
                            {"iterations", r.iterations}, {"dF", cj(r.dF)}});
        }
        emit(out_path, json{{"t", root_t}, {"roots", rows}}.dump(2) + "\n");
        rc = report({{"converged", true, {}}});
    });

    double oracle_t = 0.0;
    bool no_certify = false;
    auto* orc = app.add_subcommand("oracle", "truncated-matrix eigen-oracle");
    add_common(orc, common, false);
    orc->add_option("--t", oracle_t, "quasimomentum t in (-pi, pi]")->required();
    orc->add_flag("--no-certify", no_certify);
    orc->add_option("--out", out_path, "JSON file (default stdout)");
    orc->callback([&] {
        const auto cfg = query_config(common);
        const auto p = parse_preset(cfg.potential, cfg.smoothness);
        const json j = oracle_json(p, oracle_t, common.M > 0 ? common.M : 16, !no_certify);
        emit(out_path, j.dump(2) + "\n");
        double worst = 0.0;
        for (std::size_t i = 0; i < j["residuals"].size(); ++i) {
            const auto& l = j["eigenvalues"][i];
            const double scale = 1.0 + std::hypot(l[0].get<double>(), l[1].get<double>());
            worst = std::max(worst, j["residuals"][i].get<double>() / scale);
        }
        std::vector<Check> checks{{"residuals", worst < 1e-10, {}}};
        if (!no_certify)
            checks.push_back({"certified", j["certified"].get<bool>(), {}});
        rc = report(checks);
    });

    int an = 1, aj = 2, order = 1, kmax = default_k_max;
    double at = 0.0;
    std::string side = "auto";
    auto* asy = app.add_subcommand("asymptotic", "fixed-point eigenvalue and eigenfunction asymptotics");
    add_common(asy, common, false);
    asy->add_option("--n", an)->required();
    asy->add_option("--j", aj)->required();
    asy->add_option("--t", at, "quasimomentum t in [0, pi]")->required();
    asy->add_option("--order", order);
    asy->add_option("--k-max", kmax);
    asy->add_option("--side", side)->check(CLI::IsMember({"auto", "even", "odd"}));
    asy->add_option("--out", out_path, "JSON file (default stdout)");
    asy->callback([&] {
        const auto cfg = query_config(common);
        const auto p = parse_preset(cfg.potential, cfg.smoothness);
        std::optional<Side> forced;
        if (side == "even")
            forced = Side::even;
        else if (side == "odd")
            forced = Side::odd;
        const json j = asymptotic_json(p, an, aj, at, order, kmax, cfg.rho, forced);
        emit(out_path, j.dump(2) + "\n");
        rc = report({{"branch-unambiguous", !j["branch_ambiguous"].get<bool>(), {}}});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}
