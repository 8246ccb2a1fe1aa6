#include <cmath>
#include <functional>
#include <numbers>

#include "billiard/scenario.hpp"

namespace billiard {

namespace {

// Shared geometry of the figure presets. The box (L = 10, m = 1, hbar = 1),
// the Delta = d width lock, the snapshot times and the (1/sqrt2, -1/sqrt2)
// superposition weights are fixed by the figure layouts; the packet width,
// momentum and the M/N anchor points are tool defaults chosen so the packet
// stays localized for several traversals of the (2,1) periodic orbit
// (d |p| >> hbar) while every projection meets the default truncation budget.
constexpr double kWidth = 0.25;
const Vec2 kMomentum{64.0, 128.0};
const Vec2 kPointM{7.5, 2.5};
const Vec2 kPointN{7.5, 7.5};
constexpr std::uint64_t kSeed = 20260808;

GaussianEnsembleParams gauss_at(const Vec2& x0) {
    GaussianEnsembleParams p;
    p.x0 = x0;
    p.p0 = kMomentum;
    p.d = kWidth;
    p.Delta = kWidth;
    return p;
}

Scenario base() {
    Scenario s;
    s.billiard = BilliardConfig{10.0, 1.0, 1.0};
    s.seed = kSeed;
    s.grid_n = 256;
    s.fine_grid_n = 2048;
    return s;
}

PacketSpec packet_m(Complex w = 1.0) { return PacketSpec{gauss_at(kPointM), w}; }
PacketSpec packet_n(Complex w) { return PacketSpec{gauss_at(kPointN), w}; }

Scenario classical_single() {
    Scenario s = base();
    s.name = "fig2";
    s.classical_components = {{gauss_at(kPointM), 1.0}};
    s.times = {0.0, 0.75, 1.0, 5.0, 25.0, 100.0};
    s.outputs = {"classical_grids", "ensemble_histograms", "po_polyline", "metrics", "plots"};
    return s;
}

Scenario classical_double() {
    Scenario s = base();
    s.name = "fig3";
    s.classical_components = {{gauss_at(kPointM), 0.5}, {gauss_at(kPointN), 0.5}};
    s.times = {0.0, 21.0 / 16.0, 5.0};
    s.outputs = {"classical_grids", "ensemble_histograms", "metrics", "plots"};
    return s;
}

Scenario quantum_single() {
    Scenario s = base();
    s.name = "fig4";
    s.packets = {packet_m()};
    s.classical_components = {{gauss_at(kPointM), 1.0}};
    s.times = {0.0, 0.75, 1.0, 5.0, 25.0, 100.0};
    s.outputs = {"quantum_grids", "smoothed_quantum_grids", "classical_grids", "metrics",
                 "plots", "state"};
    return s;
}

Scenario quantum_double() {
    Scenario s = base();
    s.name = "fig5";
    const double r = 1.0 / std::numbers::sqrt2;
    s.packets = {packet_m(Complex(r, 0.0)), packet_n(Complex(-r, 0.0))};
    s.classical_components = {{gauss_at(kPointM), 0.5}, {gauss_at(kPointN), 0.5}};
    s.times = {0.0, 21.0 / 16.0, 5.0};
    s.outputs = {"quantum_grids", "smoothed_quantum_grids", "classical_grids", "metrics",
                 "plots"};
    return s;
}

Scenario bohm_single(const std::string& name, Vec2 start, double t1, double eta_scale) {
    Scenario s = base();
    s.name = name;
    s.packets = {packet_m()};
    s.times = {};
    TrajectoryJob tj;
    tj.starts = {start};
    tj.t0 = 0.0;
    tj.t1 = t1;
    tj.node_eta_scale = eta_scale;
    s.trajectories = tj;
    s.outputs = {"trajectories", "po_polyline", "metrics", "plots"};
    return s;
}

Scenario bohm_double(const std::string& name, std::vector<Vec2> starts, double t0_out,
                     double t1) {
    Scenario s = base();
    s.name = name;
    const double r = 1.0 / std::numbers::sqrt2;
    s.packets = {packet_m(Complex(r, 0.0)), packet_n(Complex(-r, 0.0))};
    TrajectoryJob tj;
    tj.starts = std::move(starts);
    tj.t0 = 0.0;
    tj.t1 = t1;
    tj.output_t_min = t0_out;
    tj.node_eta_scale = 1e-4;
    s.trajectories = tj;
    s.outputs = {"trajectories", "po_polyline", "metrics", "plots"};
    return s;
}

Scenario equivariance_preset() {
    Scenario s = base();
    s.name = "equivariance";
    GaussianEnsembleParams params;
    params.x0 = kPointM;
    params.p0 = {16.0, 32.0};
    params.d = 0.5;
    params.Delta = 0.5;
    s.packets = {PacketSpec{params, 1.0}};
    s.eps_trunc = 1e-6;
    EquivarianceJob ej;
    ej.n_samples = 10000;
    ej.endpoint_grid = 64;
    ej.t1 = 1.0;
    s.equivariance = ej;
    s.outputs = {"equivariance", "metrics", "plots"};
    return s;
}

struct PresetEntry {
    PresetInfo info;
    std::function<Scenario()> make;
};

const std::vector<PresetEntry>& registry() {
    static const std::vector<PresetEntry> entries = [] {
        std::vector<PresetEntry> v;
        v.push_back({{"fig2", "2",
                      "classical Gaussian ensemble on the (2,1) orbit; density snapshots at "
                      "t/T_PO = 0, 3/4, 1, 5, 25, 100 (layout-fixed times; d, p0, M are tool "
                      "defaults)"},
                     classical_single});
        v.push_back({{"fig3", "3",
                      "classical two-Gaussian mixture at M and N crossing at t = 11/8 T_PO; "
                      "snapshots at t/T_PO = 0, 21/16, 5"},
                     classical_double});
        v.push_back({{"fig4", "4",
                      "quantum packet launched at M along the (2,1) orbit; |psi|^2 snapshots "
                      "matching fig2 times, plus sigma = d smoothed grids"},
                     quantum_single});
        v.push_back({{"fig5", "5",
                      "two-packet superposition (psi_M - psi_N)/sqrt(2) (layout-fixed "
                      "weights); snapshots at t/T_PO = 0, 21/16, 5"},
                     quantum_double});
        v.push_back({{"fig6a", "6a",
                      "pilot-wave trajectory from M over 3 T_PO: bouncing-ball regime, "
                      "wall standoff grows every traversal"},
                     [] { return bohm_single("fig6a", kPointM, 3.0, 1.0); }});
        v.push_back({{"fig6b", "6b",
                      "same trajectory continued to 40 T_PO: pseudo-period persists while "
                      "the motion contracts toward the center"},
                     [] { return bohm_single("fig6b", kPointM, 40.0, 1e-4); }});
        v.push_back({{"fig6c", "6c",
                      "trajectory started off the packet maximum at M + (L/80, L/80); "
                      "drifts to a quadrant fixed point at late times"},
                     [] {
                         return bohm_single("fig6c", kPointM + Vec2{0.125, 0.125}, 13.0, 1e-4);
                     }});
        v.push_back({{"fig7a", "7a",
                      "two-packet state, trajectory from M over 10 T_PO; turns at the "
                      "packet-crossing zones"},
                     [] { return bohm_double("fig7a", {kPointM}, 0.0, 10.0); }});
        v.push_back({{"fig7b", "7b", "two-packet state, trajectory from N over 10 T_PO"},
                     [] { return bohm_double("fig7b", {kPointN}, 0.0, 10.0); }});
        v.push_back({{"fig7c", "7c",
                      "both trajectories over one T_PO plus the classical orbit polyline "
                      "and their union-vs-orbit Hausdorff distance"},
                     [] { return bohm_double("fig7c", {kPointM, kPointN}, 0.0, 1.0); }});
        v.push_back({{"fig7d", "7d",
                      "both trajectories, CSV window restricted to 10 T_PO < t < 11 T_PO"},
                     [] { return bohm_double("fig7d", {kPointM, kPointN}, 10.0, 11.0); }});
        v.push_back({{"equivariance", "-",
                      "statistical check: 10^4 pilot-wave trajectories started from "
                      "|psi_0|^2 stay |psi(t)|^2-distributed (moderate packet, smoothed "
                      "64x64 L1 metric)"},
                     equivariance_preset});
        return v;
    }();
    return entries;
}

} // namespace

std::vector<PresetInfo> list_presets() {
    std::vector<PresetInfo> out;
    for (const auto& e : registry()) out.push_back(e.info);
    return out;
}

Scenario preset_scenario(const std::string& name) {
    for (const auto& e : registry())
        if (e.info.name == name) return e.make();
    throw ValidationError("preset: unknown name '" + name + "'");
}

} // namespace billiard
