#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "billiard/scenario.hpp"

using namespace billiard;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("billiard_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("preset registry covers the figure set and round-trips") {
    const auto presets = list_presets();
    CHECK(presets.size() >= 11);
    for (const char* name :
         {"fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig6c", "fig7a", "fig7b", "fig7c",
          "fig7d"}) {
        const Scenario s = preset_scenario(name);
        CHECK(s.name == name);
        const Scenario back = scenario_from_json_text(scenario_to_json_text(s));
        CHECK(scenario_to_json_text(back) == scenario_to_json_text(s));
    }
    CHECK_THROWS_AS(preset_scenario("fig99"), ValidationError);

    // the two-packet preset carries the superposition weights exactly
    const Scenario fig5 = preset_scenario("fig5");
    REQUIRE(fig5.packets.size() == 2);
    CHECK(fig5.packets[0].weight.real() == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(fig5.packets[1].weight.real() == doctest::Approx(-1.0 / std::sqrt(2.0)));
    CHECK(fig5.packets[0].weight.imag() == 0.0);
}

TEST_CASE("validation errors name the offending field") {
    auto expect_error = [](const std::string& json, const std::string& needle) {
        try {
            scenario_from_json_text(json);
            FAIL_CHECK("expected rejection: " << json);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error(R"({"billiard": {"L": -1}})", "L");
    expect_error(R"({"times": {"values": [1.0, 0.5]}})", "times.values");
    expect_error(R"({"outputs": ["nonsense"]})", "outputs");
    expect_error(R"({"packets": [{"x0": [20, 5], "p0": [1, 1], "d": 0.5}]})", "packets[0].x0");
    expect_error(R"({"outputs": ["quantum_grids"]})", "packets");
    expect_error(
        R"({"packets": [{"x0": [5, 5], "p0": [1, 1], "d": 0.5}],
            "outputs": ["equivariance"], "equivariance": {}})",
        "seed");
    expect_error(R"({"grids": {"n": 64, "fine_n": 100}})", "fine_n");
}

TEST_CASE("grid files round-trip bit-exactly") {
    const auto dir = temp_dir("grid");
    DensityGrid g;
    g.nx = 7;
    g.ny = 5;
    g.x0 = 0.0;
    g.y0 = 0.0;
    g.x1 = 10.0;
    g.y1 = 10.0;
    g.values.resize(35);
    for (std::size_t i = 0; i < g.values.size(); ++i)
        g.values[i] = 0.1 * static_cast<double>(i) + 1e-17;
    g.recompute_mass();
    const std::string path = (dir / "t.grid").string();
    write_grid(path, g);
    const DensityGrid back = read_grid(path);
    CHECK(back.same_shape(g));
    for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(back.values[i] == g.values[i]);
}

TEST_CASE("state snapshot restores the exact coefficient table") {
    const BilliardConfig box{10.0, 1.0, 1.0};
    PacketSpec p;
    p.params.x0 = {7.5, 2.5};
    p.params.p0 = {16.0, 32.0};
    p.params.d = 0.5;
    ProjectOptions opt;
    opt.eps_trunc = 1e-6;
    const QuantumState st = project({p}, box, opt);
    const auto dir = temp_dir("state");
    const std::string path = (dir / "s.qst").string();
    save_state(path, st);
    const QuantumState back = load_state(path);
    CHECK(back.n_max == st.n_max);
    CHECK(back.cfg.L == st.cfg.L);
    REQUIRE(back.coeffs.size() == st.coeffs.size());
    for (std::size_t i = 0; i < st.coeffs.size(); i += 37)
        CHECK(back.coeffs[i] == st.coeffs[i]);
    // evolved evaluation agrees between original and restored state
    const PsiEval a = evaluate_psi(st, {4.4, 5.6}, 0.7);
    const PsiEval b = evaluate_psi(back, {4.4, 5.6}, 0.7);
    CHECK(std::abs(a.psi - b.psi) < 1e-14);
}

TEST_CASE("run: reproducibility and manifest completeness") {
    // small custom scenario: cheap classical + quantum grids + metrics
    Scenario s;
    s.name = "mini";
    s.billiard = BilliardConfig{10.0, 1.0, 1.0};
    s.seed = 7;
    PacketSpec p;
    p.params.x0 = {7.5, 2.5};
    p.params.p0 = {16.0, 32.0};
    p.params.d = 0.5;
    p.params.Delta = 0.5;
    s.packets = {p};
    s.classical_components = {{p.params, 1.0}};
    s.classical_samples = 20000;
    s.eps_trunc = 1e-6;
    s.times = {0.0, 1.0};
    s.grid_n = 64;
    s.fine_grid_n = 512;
    s.outputs = {"quantum_grids", "smoothed_quantum_grids", "classical_grids",
                 "ensemble_histograms", "po_polyline", "metrics", "plots", "state"};

    const auto dir_a = temp_dir("runa");
    const auto dir_b = temp_dir("runb");
    const RunResult ra = run_scenario(s, dir_a.string());
    const RunResult rb = run_scenario(s, dir_b.string());
    CHECK(ra.exit_code == 0);
    CHECK(rb.exit_code == 0);

    for (const char* name : {"manifest.json", "metrics.json", "quantum_t00.grid",
                             "quantum_t01.grid", "classical_t01.grid", "histogram_t00.grid",
                             "po.csv", "state.qst"}) {
        CAPTURE(name);
        REQUIRE(fs::exists(dir_a / name));
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));
    }

    const std::string manifest = slurp(dir_a / "manifest.json");
    CHECK(manifest.find("\"T_PO\"") != std::string::npos);
    CHECK(manifest.find("\"n_max\"") != std::string::npos);
    CHECK(manifest.find("\"seed\"") != std::string::npos);
    CHECK(manifest.find("\"exit_code\": 0") != std::string::npos);

    // quantum grid artifact holds the cell-averaged density (mass ~ norm)
    const DensityGrid q0 = read_grid((dir_a / "quantum_t00.grid").string());
    CHECK(q0.mass == doctest::Approx(1.0).epsilon(1e-4));
    const DensityGrid h0 = read_grid((dir_a / "histogram_t00.grid").string());
    CHECK(h0.mass == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(l1_distance(q0, h0) < 0.2); // same packet, MC noise apart
}

TEST_CASE("run: trajectory artifacts and csv window") {
    Scenario s = preset_scenario("fig7c");
    // shrink the run so the unit suite stays quick: one eighth of a period
    s.trajectories->t1 = 0.125;
    s.trajectories->integrator.rel_tol = 1e-7;
    s.trajectories->integrator.abs_tol = 1e-7;
    const auto dir = temp_dir("traj");
    const RunResult r = run_scenario(s, dir.string());
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(dir / "trajectory_0.csv"));
    REQUIRE(fs::exists(dir / "trajectory_1.csv"));
    REQUIRE(fs::exists(dir / "po.csv"));
    const std::string csv = slurp(dir / "trajectory_0.csv");
    CHECK(csv.rfind("t,x,y,vx,vy,R,Q\n", 0) == 0);
    // count rows: samples_per_period/8 + endpoint
    std::size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows >= 64);
    const std::string metrics = slurp(dir / "metrics.json");
    CHECK(metrics.find("hausdorff_union_vs_po") != std::string::npos);
}
