#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hill/experiment.hpp"

using namespace hill;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name)
{
    auto d = fs::temp_directory_path() / ("hill_test_" + name);
    fs::remove_all(d);
    return d;
}

// Small sizes so that a whole suite runs in seconds.
std::vector<std::string> small_overrides(const std::string& out)
{
    return {"experiment.output=" + out, "grid.n_min=8",   "grid.n_max=10",     "grid.M=24",
            "grid.certify_M=32",        "grid.t=0,0.05",  "window.hi=120",     "arcs.grid=16",
            "bounds.n_min=2",           "bounds.n_max=4", "bounds.t_points=3", "bounds.M=16",
            "project.quad_points=64"};
}

}  // namespace

TEST(Config, DefaultsAndOverrides)
{
    const auto d = load_config("");
    EXPECT_EQ(d.kind, "suite");
    EXPECT_EQ(d.n_min, 8);
    const auto c = load_config("", {"grid.rho=0.2", "grid.t=0,0.1,0.3", "potential.spec=gasymov:1"});
    EXPECT_DOUBLE_EQ(c.rho, 0.2);
    EXPECT_EQ(c.t_grid, (std::vector<double>{0.0, 0.1, 0.3}));
    EXPECT_EQ(c.potential, "gasymov:1");
}

TEST(Config, IniFile)
{
    const auto dir = scratch("ini");
    fs::create_directories(dir);
    const auto path = dir / "run.ini";
    std::ofstream(path) << "[experiment]\nkind = arcs\n[grid]\nn_min = 3\nn_max = 5\nM = 16\n[arcs]\ngrid = 8\n";
    const auto c = load_config(path.string(), {"grid.n_max=6"});
    EXPECT_EQ(c.kind, "arcs");
    EXPECT_EQ(c.n_min, 3);
    EXPECT_EQ(c.n_max, 6);
    EXPECT_EQ(c.arc_grid, 8);
}

TEST(Config, Validation)
{
    EXPECT_THROW(load_config("", {"grid.rho=2.0"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.rho=0"}), ValidationError);
    EXPECT_THROW(load_config("", {"experiment.kind=nope"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.t=0,4"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.n_min=9", "grid.n_max=3"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.M=4"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.n_min=abc"}), ValidationError);
    EXPECT_THROW(load_config("", {"nodot=1"}), ValidationError);
    EXPECT_THROW(load_config("/nonexistent/cfg.ini"), ValidationError);
}

TEST(Experiment, FreeSuiteAllGreenAndReproducible)
{
    const auto a = scratch("suite_a"), b = scratch("suite_b");
    const auto ra = run_experiment(load_config("", small_overrides(a.string())));
    for (const auto& c : ra.checks)
        EXPECT_TRUE(c.pass) << c.name << " " << c.detail.dump();
    run_experiment(load_config("", small_overrides(b.string())));
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto other = b / e.path().filename();
        ASSERT_TRUE(fs::exists(other)) << other;
        if (e.path().filename() == "summary.json")
            continue;  // holds the output directory
        EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
        ++files;
    }
    EXPECT_GT(files, 5u);
    const auto summary = json::parse(slurp(a / "summary.json"));
    EXPECT_TRUE(summary["all_pass"].get<bool>());
    const auto csv = slurp(a / "compare.csv");
    EXPECT_EQ(csv.rfind("# v1\n", 0), 0u);
}

TEST(Experiment, GasymovSingularitiesClassified)
{
    const auto dir = scratch("gasymov");
    auto o = small_overrides(dir.string());
    o.push_back("experiment.kind=singularities");
    o.push_back("potential.spec=gasymov:1");
    o.push_back("window.hi=400");
    const auto b = run_experiment(load_config("", o));
    const auto j = json::parse(slurp(dir / "singularities.json"));
    ASSERT_EQ(j["candidates"].size(), 6u);
    for (const auto& c : j["candidates"])
        EXPECT_EQ(c["classification"], "spectral-singularity");
    EXPECT_TRUE(b.all_pass());
}

TEST(Experiment, ErrorsAreTagged)
{
    auto cfg = load_config("", {"experiment.output=" + scratch("err").string()});
    cfg.potential = "decay:1";
    try {
        run_experiment(cfg);
        FAIL() << "no error";
    } catch (const ExperimentError& e) {
        EXPECT_NE(std::string(e.what()).find("potential.parse_preset(decay:1)"), std::string::npos) << e.what();
    }
}

TEST(Experiment, StabilityCheck)
{
    json rows = json::array();
    for (int n = 8; n <= 20; ++n)
        rows.push_back({{"n", n}, {"err", 1.0 + 0.01 * n}});
    EXPECT_TRUE(stability_check("s", rows, "err", 8, 20, 3.0).pass);
    rows.push_back({{"n", 20}, {"err", 10.0}});
    EXPECT_FALSE(stability_check("s", rows, "err", 8, 20, 3.0).pass);
    rows.push_back({{"n", 9}, {"err", "nan"}});
    EXPECT_FALSE(stability_check("s", rows, "err", 8, 20, 100.0).pass);
}

TEST(Experiment, DirectQueries)
{
    CsvTable csv;
    double ww = 0.0;
    const auto d = discriminant_rows(free_potential(), {cplx(pi * pi, 0.0)}, 1e-12, csv, ww);
    ASSERT_EQ(csv.rows.size(), 1u);
    EXPECT_LE(ww, 1e-11);
    const auto o = oracle_json(gasymov(1.0), 0.0, 12, true);
    EXPECT_TRUE(o.contains("eigenvalues"));
    const auto a = asymptotic_json(cosine(2, 1.0), 1, 1, 0.0, 2, 3, 0.1, std::nullopt);
    EXPECT_NEAR(a["lambda"][0].get<double>(), 38.475, 1e-3);
    (void)d;
}
