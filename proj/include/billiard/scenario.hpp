#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "billiard/bohmian.hpp"
#include "billiard/classical.hpp"
#include "billiard/quantum.hpp"

namespace billiard {

/// Configuration faults carry the offending field and constraint.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One weighted component of the classical mixture density.
struct ClassicalComponent {
    GaussianEnsembleParams params;
    double weight = 1.0;
};

struct TrajectoryJob {
    std::vector<Vec2> starts;
    double t0 = 0.0; // in the scenario time unit
    double t1 = 1.0;
    IntegratorSpec integrator;
    double node_eta_scale = 1.0; // multiplies the state threshold
    int samples_per_period = 512;
    double output_t_min = 0.0; // CSV rows and metrics start here
};

struct EquivarianceJob {
    std::size_t n_samples = 10000;
    int endpoint_grid = 64;
    double smooth_sigma = -1.0; // -1: packet width
    double t1 = 1.0;            // in the scenario time unit
    double rel_tol = 1e-6;
};

/// A declarative run description; everything a run produces is derivable
/// from this plus the seed.
struct Scenario {
    std::string name = "custom";
    BilliardConfig billiard;
    std::uint64_t seed = 0;

    std::vector<PacketSpec> packets;                  // quantum initial state
    std::vector<ClassicalComponent> classical_components;
    std::size_t classical_samples = 1'000'000;

    bool times_in_periods = true; // values given in units of the return period
    std::vector<double> times;

    std::optional<TrajectoryJob> trajectories;
    std::optional<EquivarianceJob> equivariance;

    int n_max = 0;            // 0 = automatic
    double eps_trunc = 1e-8;
    int grid_n = 256;         // written grid resolution
    int fine_grid_n = 2048;   // fringe-resolving evaluation grid (multiple of grid_n)
    double smooth_sigma = -1.0; // -1: packet width d
    bool csv_grids = false;

    std::vector<std::string> outputs;

    bool wants(const std::string& artifact) const;
    void validate() const; // throws ValidationError naming the field
};

/// JSON round-trip of the scenario (the on-disk config dialect).
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& s);
Scenario load_scenario(const std::string& path);

struct RunResult {
    int exit_code = 0; // 0 ok, 2 numerical failure (manifest has details)
    std::string out_dir;
    std::vector<std::string> warnings;
};

/// Execute the scenario and write all requested artifacts plus manifest.json
/// into out_dir (created if missing). Identical scenario + seed produce
/// byte-identical numerical artifacts: reductions run in fixed order and
/// parallel work writes to disjoint slots.
RunResult run_scenario(const Scenario& s, const std::string& out_dir);

/// Grid file I/O (binary: 4 text header lines + row-major float64).
void write_grid(const std::string& path, const DensityGrid& g);
DensityGrid read_grid(const std::string& path);
void write_grid_csv(const std::string& path, const DensityGrid& g);

/// Coefficient-table snapshot for exact run resumption. Loading restores the
/// dense table (the separable fast path is not persisted).
void save_state(const std::string& path, const QuantumState& st);
QuantumState load_state(const std::string& path);

/// Preset registry (the figure scenarios).
struct PresetInfo {
    std::string name;
    std::string figure;      // layout key, e.g. "2", "6a"
    std::string description; // includes which knobs are layout-fixed vs tool defaults
};
std::vector<PresetInfo> list_presets();
Scenario preset_scenario(const std::string& name);

} // namespace billiard
