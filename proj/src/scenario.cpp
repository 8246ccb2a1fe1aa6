#include "billiard/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "billiard/parallel.hpp"

namespace billiard {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKnownOutputs = {
    "quantum_grids", "smoothed_quantum_grids", "classical_grids", "ensemble_histograms",
    "trajectories", "po_polyline", "metrics", "plots", "state", "equivariance"};

Vec2 vec_from_json(const ordered_json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2)
        throw ValidationError(field + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

ordered_json vec_to_json(const Vec2& v) { return ordered_json::array({v.x, v.y}); }

GaussianEnsembleParams gauss_from_json(const ordered_json& j, const std::string& field) {
    GaussianEnsembleParams p;
    p.x0 = vec_from_json(j.at("x0"), field + ".x0");
    p.p0 = vec_from_json(j.at("p0"), field + ".p0");
    p.d = j.at("d").get<double>();
    p.Delta = j.value("Delta", p.d);
    if (!(p.d > 0.0)) throw ValidationError(field + ".d: must be > 0");
    if (!(p.Delta > 0.0)) throw ValidationError(field + ".Delta: must be > 0");
    return p;
}

ordered_json gauss_to_json(const GaussianEnsembleParams& p) {
    ordered_json j;
    j["x0"] = vec_to_json(p.x0);
    j["p0"] = vec_to_json(p.p0);
    j["d"] = p.d;
    j["Delta"] = p.Delta;
    return j;
}

std::string time_tag(std::size_t idx) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02zu", idx);
    return buf;
}

// Hausdorff distance between point sets built from resampled polylines.
double hausdorff_point_sets(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    auto directed = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
        double worst = 0.0;
        for (const Vec2& u : p) {
            double best = 1e300;
            for (const Vec2& v : q) best = std::min(best, (u - v).norm_sq());
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(a, b), directed(b, a));
}

} // namespace

bool Scenario::wants(const std::string& artifact) const {
    return std::find(outputs.begin(), outputs.end(), artifact) != outputs.end();
}

void Scenario::validate() const {
    try {
        billiard.validate();
    } catch (const std::domain_error& e) {
        throw ValidationError(std::string("billiard.L/m/hbar: ") + e.what());
    }
    for (std::size_t i = 0; i < packets.size(); ++i) {
        const auto& p = packets[i].params;
        const std::string f = "packets[" + std::to_string(i) + "]";
        if (!(p.d > 0.0)) throw ValidationError(f + ".d: must be > 0");
        if (!(p.x0.x > 0.0 && p.x0.x < billiard.L && p.x0.y > 0.0 && p.x0.y < billiard.L))
            throw ValidationError(f + ".x0: must lie strictly inside the box");
        if (!std::isfinite(std::abs(packets[i].weight)))
            throw ValidationError(f + ".weight: must be finite");
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < classical_components.size(); ++i) {
        const std::string f = "classical.components[" + std::to_string(i) + "]";
        if (classical_components[i].weight < 0.0)
            throw ValidationError(f + ".weight: must be >= 0");
        wsum += classical_components[i].weight;
    }
    if (!classical_components.empty() && !(wsum > 0.0))
        throw ValidationError("classical.components: weights must not all vanish");

    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw ValidationError("times.values: must be strictly ascending");
    for (double t : times)
        if (t < 0.0) throw ValidationError("times.values: must be >= 0");

    if (grid_n < 2) throw ValidationError("grids.n: must be >= 2");
    if (fine_grid_n % grid_n != 0)
        throw ValidationError("grids.fine_n: must be a multiple of grids.n");

    for (const auto& o : outputs)
        if (!kKnownOutputs.count(o))
            throw ValidationError("outputs: unknown artifact '" + o + "'");

    const bool stochastic = wants("ensemble_histograms") || wants("equivariance");
    if (stochastic && seed == 0)
        throw ValidationError("seed: required (nonzero) for stochastic outputs");

    if ((wants("quantum_grids") || wants("smoothed_quantum_grids") || wants("trajectories") ||
         wants("equivariance") || wants("state")) &&
        packets.empty())
        throw ValidationError("packets: required by the requested quantum outputs");
    if ((wants("classical_grids") || wants("ensemble_histograms")) &&
        classical_components.empty())
        throw ValidationError("classical.components: required by the requested classical outputs");

    if (trajectories) {
        const auto& tj = *trajectories;
        if (tj.starts.empty())
            throw ValidationError("trajectories.starts: must not be empty");
        if (!(tj.t1 > tj.t0))
            throw ValidationError("trajectories.t1: must exceed trajectories.t0");
        if (tj.samples_per_period < 1)
            throw ValidationError("trajectories.samples_per_period: must be >= 1");
        if (tj.output_t_min < tj.t0 || tj.output_t_min >= tj.t1)
            throw ValidationError("trajectories.output_t_min: must lie in [t0, t1)");
        try {
            tj.integrator.validate();
        } catch (const std::domain_error& e) {
            throw ValidationError(std::string("trajectories.integrator: ") + e.what());
        }
    }
    if (equivariance) {
        if (equivariance->n_samples < 1)
            throw ValidationError("equivariance.n_samples: must be >= 1");
        if (equivariance->endpoint_grid < 2)
            throw ValidationError("equivariance.endpoint_grid: must be >= 2");
    }
    if (!(eps_trunc > 0.0)) throw ValidationError("quantum.eps_trunc: must be > 0");
}

Scenario scenario_from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config: JSON parse failure: ") + e.what());
    }
    Scenario s;
    s.name = j.value("name", std::string("custom"));
    if (j.contains("billiard")) {
        const auto& b = j["billiard"];
        s.billiard.L = b.value("L", 10.0);
        s.billiard.m = b.value("m", 1.0);
        s.billiard.hbar = b.value("hbar", 1.0);
    }
    s.seed = j.value("seed", 0ull);
    if (j.contains("packets"))
        for (const auto& pj : j["packets"]) {
            PacketSpec p;
            p.params = gauss_from_json(pj, "packets[]");
            if (pj.contains("weight")) {
                const auto& w = pj["weight"];
                if (w.is_array() && w.size() == 2)
                    p.weight = Complex(w[0].get<double>(), w[1].get<double>());
                else
                    p.weight = Complex(w.get<double>(), 0.0);
            }
            s.packets.push_back(p);
        }
    if (j.contains("classical")) {
        const auto& c = j["classical"];
        if (c.contains("components"))
            for (const auto& cj : c["components"]) {
                ClassicalComponent comp;
                comp.params = gauss_from_json(cj, "classical.components[]");
                comp.weight = cj.value("weight", 1.0);
                s.classical_components.push_back(comp);
            }
        s.classical_samples = c.value("samples", s.classical_samples);
    }
    if (j.contains("times")) {
        const auto& t = j["times"];
        const std::string unit = t.value("unit", std::string("T_PO"));
        if (unit == "T_PO")
            s.times_in_periods = true;
        else if (unit == "absolute")
            s.times_in_periods = false;
        else
            throw ValidationError("times.unit: must be 'T_PO' or 'absolute'");
        for (const auto& v : t.at("values")) s.times.push_back(v.get<double>());
    }
    if (j.contains("trajectories")) {
        const auto& t = j["trajectories"];
        TrajectoryJob tj;
        for (const auto& st : t.at("starts"))
            tj.starts.push_back(vec_from_json(st, "trajectories.starts[]"));
        tj.t0 = t.value("t0", 0.0);
        tj.t1 = t.value("t1", 1.0);
        tj.integrator.rel_tol = t.value("rel_tol", 1e-9);
        tj.integrator.abs_tol = t.value("abs_tol", 1e-9);
        tj.integrator.h_init = t.value("h_init", 1e-3);
        tj.integrator.h_min = t.value("h_min", 1e-12);
        tj.node_eta_scale = t.value("node_eta_scale", 1.0);
        tj.samples_per_period = t.value("samples_per_period", 512);
        tj.output_t_min = t.value("output_t_min", tj.t0);
        s.trajectories = tj;
    }
    if (j.contains("equivariance")) {
        const auto& e = j["equivariance"];
        EquivarianceJob ej;
        ej.n_samples = e.value("n_samples", 10000ull);
        ej.endpoint_grid = e.value("endpoint_grid", 64);
        ej.smooth_sigma = e.value("smooth_sigma", -1.0);
        ej.t1 = e.value("t1", 1.0);
        ej.rel_tol = e.value("rel_tol", 1e-6);
        s.equivariance = ej;
    }
    if (j.contains("quantum")) {
        s.n_max = j["quantum"].value("n_max", 0);
        s.eps_trunc = j["quantum"].value("eps_trunc", 1e-8);
    }
    if (j.contains("grids")) {
        s.grid_n = j["grids"].value("n", s.grid_n);
        s.fine_grid_n = j["grids"].value("fine_n", s.fine_grid_n);
        s.smooth_sigma = j["grids"].value("smooth_sigma", -1.0);
        s.csv_grids = j["grids"].value("csv", false);
    }
    if (j.contains("outputs"))
        for (const auto& o : j["outputs"]) s.outputs.push_back(o.get<std::string>());
    s.validate();
    return s;
}

std::string scenario_to_json_text(const Scenario& s) {
    ordered_json j;
    j["name"] = s.name;
    j["billiard"] = {{"L", s.billiard.L}, {"m", s.billiard.m}, {"hbar", s.billiard.hbar}};
    j["seed"] = s.seed;
    if (!s.packets.empty()) {
        ordered_json arr = ordered_json::array();
        for (const auto& p : s.packets) {
            ordered_json pj = gauss_to_json(p.params);
            pj["weight"] = ordered_json::array({p.weight.real(), p.weight.imag()});
            arr.push_back(pj);
        }
        j["packets"] = arr;
    }
    if (!s.classical_components.empty()) {
        ordered_json arr = ordered_json::array();
        for (const auto& c : s.classical_components) {
            ordered_json cj = gauss_to_json(c.params);
            cj["weight"] = c.weight;
            arr.push_back(cj);
        }
        j["classical"] = {{"components", arr}, {"samples", s.classical_samples}};
    }
    if (!s.times.empty())
        j["times"] = {{"unit", s.times_in_periods ? "T_PO" : "absolute"},
                      {"values", s.times}};
    if (s.trajectories) {
        const auto& t = *s.trajectories;
        ordered_json starts = ordered_json::array();
        for (const auto& x : t.starts) starts.push_back(vec_to_json(x));
        j["trajectories"] = {{"starts", starts},
                             {"t0", t.t0},
                             {"t1", t.t1},
                             {"rel_tol", t.integrator.rel_tol},
                             {"abs_tol", t.integrator.abs_tol},
                             {"h_init", t.integrator.h_init},
                             {"h_min", t.integrator.h_min},
                             {"node_eta_scale", t.node_eta_scale},
                             {"samples_per_period", t.samples_per_period},
                             {"output_t_min", t.output_t_min}};
    }
    if (s.equivariance) {
        const auto& e = *s.equivariance;
        j["equivariance"] = {{"n_samples", e.n_samples},
                             {"endpoint_grid", e.endpoint_grid},
                             {"smooth_sigma", e.smooth_sigma},
                             {"t1", e.t1},
                             {"rel_tol", e.rel_tol}};
    }
    j["quantum"] = {{"n_max", s.n_max}, {"eps_trunc", s.eps_trunc}};
    j["grids"] = {{"n", s.grid_n},
                  {"fine_n", s.fine_grid_n},
                  {"smooth_sigma", s.smooth_sigma},
                  {"csv", s.csv_grids}};
    j["outputs"] = s.outputs;
    return j.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json_text(ss.str());
}

void write_grid(const std::string& path, const DensityGrid& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_grid: cannot open " + path);
    out << "billiard-grid 1\n"
        << g.nx << " " << g.ny << "\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", g.x0, g.y0, g.x1, g.y1);
    out << buf << "row-major float64 little-endian\n";
    out.write(reinterpret_cast<const char*>(g.values.data()),
              static_cast<std::streamsize>(g.values.size() * sizeof(double)));
}

DensityGrid read_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("read_grid: cannot open " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "billiard-grid 1")
        throw std::runtime_error("read_grid: bad magic in " + path);
    DensityGrid g;
    in >> g.nx >> g.ny >> g.x0 >> g.y0 >> g.x1 >> g.y1;
    std::string rest;
    std::getline(in, rest); // end of extent line
    std::getline(in, rest); // layout line
    g.values.resize(static_cast<std::size_t>(g.nx) * g.ny);
    in.read(reinterpret_cast<char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!in)
        throw std::runtime_error("read_grid: truncated data in " + path);
    g.recompute_mass();
    return g;
}

void write_grid_csv(const std::string& path, const DensityGrid& g) {
    std::ofstream out(path);
    out << "x,y,value\n";
    char buf[160];
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const Vec2 c = g.cell_center(ix, iy);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", c.x, c.y, g.at(ix, iy));
            out << buf;
        }
}

namespace {

void write_trajectory_csv(const std::string& path, const BohmTrajectory& tr, double t_min) {
    std::ofstream out(path);
    out << "t,x,y,vx,vy,R,Q\n";
    char buf[256];
    for (const auto& p : tr.points) {
        if (p.t < t_min) continue;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.t,
                      p.x.x, p.x.y, p.v.x, p.v.y, p.R, p.Q);
        out << buf;
    }
}

void write_polyline_csv(const std::string& path, const Polyline& poly) {
    std::ofstream out(path);
    out << "x,y\n";
    char buf[96];
    for (const auto& v : poly) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", v.x, v.y);
        out << buf;
    }
}

void write_state_file(const std::string& path, const QuantumState& st) {
    std::ofstream out(path, std::ios::binary);
    out << "billiard-state 1\n"
        << st.n_max << "\n";
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n", st.cfg.L, st.cfg.m,
                  st.cfg.hbar, st.t_ref, st.eps_trunc, st.node_eta);
    out << buf << "row-major complex128\n";
    out.write(reinterpret_cast<const char*>(st.coeffs.data()),
              static_cast<std::streamsize>(st.coeffs.size() * sizeof(Complex)));
}

QuantumState read_state_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("read_state: cannot open " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "billiard-state 1")
        throw std::runtime_error("read_state: bad magic in " + path);
    QuantumState st;
    in >> st.n_max >> st.cfg.L >> st.cfg.m >> st.cfg.hbar >> st.t_ref >> st.eps_trunc >>
        st.node_eta;
    std::string rest;
    std::getline(in, rest);
    std::getline(in, rest);
    st.coeffs.resize(static_cast<std::size_t>(st.n_max) * st.n_max);
    in.read(reinterpret_cast<char*>(st.coeffs.data()),
            static_cast<std::streamsize>(st.coeffs.size() * sizeof(Complex)));
    if (!in)
        throw std::runtime_error("read_state: truncated data in " + path);
    st.diag.norm = st.norm_sq();
    st.diag.n_max = st.n_max;
    return st;
}

const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plot the artifacts of one run directory (written by the scenario runner).

Standalone: reads only files next to this script.
"""
import json
import os
import sys

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_grid(path):
    with open(path, "rb") as f:
        assert f.readline().strip() == b"billiard-grid 1"
        nx, ny = map(int, f.readline().split())
        x0, y0, x1, y1 = map(float, f.readline().split())
        f.readline()
        data = np.fromfile(f, dtype="<f8", count=nx * ny).reshape(ny, nx)
    return data, (x0, x1, y0, y1)


def main(run_dir):
    with open(os.path.join(run_dir, "manifest.json")) as f:
        manifest = json.load(f)
    arts = manifest["artifacts"]
    grids = [a for a in arts if a.endswith(".grid")]
    for kind in ("classical", "quantum", "quantum_smooth", "histogram"):
        sel = sorted(a for a in grids if a.startswith(kind + "_t"))
        if not sel:
            continue
        fig, axes = plt.subplots(1, len(sel), figsize=(3 * len(sel), 3.2), squeeze=False)
        for ax, name in zip(axes[0], sel):
            data, extent = read_grid(os.path.join(run_dir, name))
            ax.imshow(data, origin="lower", extent=extent, cmap="inferno")
            ax.set_title(name.replace(".grid", ""), fontsize=8)
        fig.tight_layout()
        out = os.path.join(run_dir, f"plot_{kind}.png")
        fig.savefig(out, dpi=130)
        print("wrote", out)
    trajs = sorted(a for a in arts if a.startswith("trajectory_") and a.endswith(".csv"))
    if trajs:
        fig, ax = plt.subplots(figsize=(5, 5))
        for name in trajs:
            data = np.genfromtxt(os.path.join(run_dir, name), delimiter=",", names=True)
            ax.plot(data["x"], data["y"], lw=0.6, label=name.replace(".csv", ""))
        if "po.csv" in arts:
            po = np.genfromtxt(os.path.join(run_dir, "po.csv"), delimiter=",", names=True)
            ax.plot(po["x"], po["y"], "k--", lw=1.0, label="po")
        L = manifest["config"]["billiard"]["L"]
        ax.set_xlim(0, L)
        ax.set_ylim(0, L)
        ax.set_aspect("equal")
        ax.legend(fontsize=7)
        out = os.path.join(run_dir, "plot_trajectories.png")
        fig.savefig(out, dpi=130)
        print("wrote", out)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__)))
)PY";

} // namespace

RunResult run_scenario(const Scenario& s, const std::string& out_dir) {
    s.validate();
    fs::create_directories(out_dir);
    RunResult result;
    result.out_dir = out_dir;
    std::vector<std::string> artifacts;
    ordered_json metrics;
    int exit_code = 0;

    auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    // Momentum defining the orbit (quantum packet first, classical otherwise).
    Vec2 p_ref{};
    if (!s.packets.empty())
        p_ref = s.packets.front().params.p0;
    else if (!s.classical_components.empty())
        p_ref = s.classical_components.front().params.p0;

    double T = 0.0;
    if (s.times_in_periods || s.trajectories || s.equivariance) {
        try {
            T = return_period(p_ref, s.billiard);
        } catch (const std::domain_error&) {
            throw ValidationError(
                "times.unit: T_PO units need a periodic reference momentum (p0)");
        }
    }
    const double unit = s.times_in_periods ? T : 1.0;
    std::vector<double> times_abs;
    for (double t : s.times) times_abs.push_back(t * unit);

    const double d_ref = s.packets.empty() ? (s.classical_components.empty()
                                                  ? 0.5
                                                  : s.classical_components.front().params.d)
                                           : s.packets.front().params.d;
    const double sigma = s.smooth_sigma >= 0.0 ? s.smooth_sigma : d_ref;

    // ---- quantum state -------------------------------------------------
    QuantumState state;
    bool have_state = false;
    if (!s.packets.empty() &&
        (s.wants("quantum_grids") || s.wants("smoothed_quantum_grids") ||
         s.wants("trajectories") || s.wants("equivariance") || s.wants("state"))) {
        ProjectOptions opt;
        opt.n_max = s.n_max;
        opt.eps_trunc = s.eps_trunc;
        try {
            state = project(s.packets, s.billiard, opt);
            have_state = true;
        } catch (const TruncationError& e) {
            result.warnings.push_back(std::string("projection failed: ") + e.what());
            exit_code = 2;
        }
        if (have_state && state.diag.leak_warning)
            result.warnings.push_back(
                "packet close to a wall: estimated leaked mass " +
                std::to_string(state.diag.leak_estimate));
    }

    // ---- density grids --------------------------------------------------
    const int down = s.fine_grid_n / s.grid_n;
    for (std::size_t i = 0; i < times_abs.size(); ++i) {
        const double t = times_abs[i];
        if (have_state && (s.wants("quantum_grids") || s.wants("smoothed_quantum_grids"))) {
            const DensityGrid fine = density_grid(state, t, s.fine_grid_n, s.fine_grid_n);
            const DensityGrid q = downsample(fine, down);
            if (s.wants("quantum_grids")) {
                const std::string name = "quantum_t" + time_tag(i) + ".grid";
                write_grid(out_path(name), q);
                artifacts.push_back(name);
                if (s.csv_grids) {
                    write_grid_csv(out_path("quantum_t" + time_tag(i) + ".csv"), q);
                    artifacts.push_back("quantum_t" + time_tag(i) + ".csv");
                }
            }
            if (s.wants("smoothed_quantum_grids")) {
                const DensityGrid qs = gaussian_smooth(q, sigma);
                const std::string name = "quantum_smooth_t" + time_tag(i) + ".grid";
                write_grid(out_path(name), qs);
                artifacts.push_back(name);
            }
        }
        if (!s.classical_components.empty() && s.wants("classical_grids")) {
            double wsum = 0.0;
            for (const auto& c : s.classical_components) wsum += c.weight;
            const DensityGrid cg = grid_from_field(
                [&](const Vec2& x) {
                    double acc = 0.0;
                    for (const auto& c : s.classical_components)
                        acc += c.weight *
                               classical_density_boxed(x, t, c.params, s.billiard);
                    return acc / wsum;
                },
                s.grid_n, s.grid_n, s.billiard);
            const std::string name = "classical_t" + time_tag(i) + ".grid";
            write_grid(out_path(name), cg);
            artifacts.push_back(name);
            if (s.csv_grids) {
                write_grid_csv(out_path("classical_t" + time_tag(i) + ".csv"), cg);
                artifacts.push_back("classical_t" + time_tag(i) + ".csv");
            }
        }
    }

    // smoothed-quantum vs classical distances where both exist
    if (have_state && s.wants("metrics") && s.wants("smoothed_quantum_grids") &&
        s.wants("classical_grids") && !s.classical_components.empty()) {
        ordered_json l1s = ordered_json::array();
        for (std::size_t i = 0; i < times_abs.size(); ++i) {
            const DensityGrid qs = read_grid(out_path("quantum_smooth_t" + time_tag(i) + ".grid"));
            const DensityGrid cg = read_grid(out_path("classical_t" + time_tag(i) + ".grid"));
            l1s.push_back({{"t", times_abs[i]},
                           {"l1_smoothed_quantum_vs_classical", l1_distance(qs, cg)}});
        }
        metrics["density_correspondence"] = l1s;
    }

    // ---- Monte-Carlo ensemble histograms --------------------------------
    if (!s.classical_components.empty() && s.wants("ensemble_histograms")) {
        double wsum = 0.0;
        for (const auto& c : s.classical_components) wsum += c.weight;
        // deterministic per-component sample allocation, largest remainder
        std::vector<std::size_t> counts;
        std::size_t assigned = 0;
        for (const auto& c : s.classical_components) {
            const std::size_t k = static_cast<std::size_t>(
                std::floor(s.classical_samples * c.weight / wsum));
            counts.push_back(k);
            assigned += k;
        }
        for (std::size_t i = 0; assigned < s.classical_samples; ++i, ++assigned)
            ++counts[i % counts.size()];
        ClassicalEnsemble mix;
        mix.seed = s.seed;
        for (std::size_t i = 0; i < s.classical_components.size(); ++i) {
            const auto part = sample_ensemble(s.classical_components[i].params, counts[i],
                                              s.seed + i, s.billiard);
            mix.samples.insert(mix.samples.end(), part.samples.begin(), part.samples.end());
        }
        for (std::size_t i = 0; i < times_abs.size(); ++i) {
            const DensityGrid h =
                ensemble_histogram(mix, times_abs[i], s.grid_n, s.grid_n, s.billiard);
            const std::string name = "histogram_t" + time_tag(i) + ".grid";
            write_grid(out_path(name), h);
            artifacts.push_back(name);
        }
    }

    // ---- periodic orbit polyline ----------------------------------------
    Polyline po;
    if (s.wants("po_polyline")) {
        const Vec2 start = s.trajectories && !s.trajectories->starts.empty()
                               ? s.trajectories->starts.front()
                               : (s.packets.empty() ? Vec2{s.billiard.L / 2, s.billiard.L / 2}
                                                    : s.packets.front().params.x0);
        po = po_polyline({start, p_ref, 0.0}, s.billiard);
        write_polyline_csv(out_path("po.csv"), po);
        artifacts.push_back("po.csv");
    }

    // ---- Bohmian trajectories --------------------------------------------
    if (have_state && s.trajectories && s.wants("trajectories")) {
        const auto& tj = *s.trajectories;
        const double t0 = tj.t0 * unit, t1 = tj.t1 * unit;
        const double t_min_out = tj.output_t_min * unit;
        IntegratorSpec ispec = tj.integrator;
        if (ispec.node_eta <= 0.0) ispec.node_eta = state.node_eta * tj.node_eta_scale;
        const int n_samples = static_cast<int>(
            std::ceil((t1 - t0) / (T > 0.0 ? T : (t1 - t0)) * tj.samples_per_period));
        const auto outs = integrate_ensemble(state, tj.starts, t0, t1, ispec, n_samples);

        ordered_json traj_metrics = ordered_json::array();
        std::vector<Polyline> windows;
        for (std::size_t i = 0; i < outs.size(); ++i) {
            const auto& o = outs[i];
            const std::string name = "trajectory_" + std::to_string(i) + ".csv";
            write_trajectory_csv(out_path(name), o.trajectory, t_min_out);
            artifacts.push_back(name);
            ordered_json m;
            m["start"] = vec_to_json(tj.starts[i]);
            m["ok"] = o.ok;
            if (!o.ok) {
                m["error"] = o.error;
                result.warnings.push_back("trajectory " + std::to_string(i) + ": " + o.error);
                exit_code = 2;
            }
            m["steps"] = o.trajectory.stats.steps;
            m["rejects"] = o.trajectory.stats.rejects;
            m["forced_steps"] = o.trajectory.stats.forced_steps;
            m["min_R"] = o.trajectory.stats.min_R;
            if (!o.trajectory.points.empty()) {
                const auto path = o.trajectory.timed_path();
                m["endpoint"] = vec_to_json(path.x.back());
                if (T > 0.0) {
                    const auto returns =
                        near_returns(path, tj.starts[i], 0.05 * s.billiard.L, T / 4.0);
                    m["near_return_times"] = returns;
                    try {
                        const auto standoff =
                            wall_standoff_series(path, s.billiard, 0.05 * s.billiard.L, T / 4.0);
                        ordered_json so = ordered_json::array();
                        for (const auto& [idx, dist] : standoff)
                            so.push_back({{"traversal", idx}, {"min_wall_distance", dist}});
                        m["wall_standoff"] = so;
                    } catch (const std::domain_error&) {
                        // fewer than two traversals; nothing to report
                    }
                    ordered_json speeds = ordered_json::array();
                    const int periods = static_cast<int>(std::floor((t1 - t0) / T + 1e-9));
                    for (int k = 0; k < periods; ++k) {
                        double acc = 0.0;
                        int cnt = 0;
                        for (const auto& q : o.trajectory.points)
                            if (q.t >= t0 + k * T && q.t < t0 + (k + 1) * T) {
                                acc += q.v.norm();
                                ++cnt;
                            }
                        if (cnt > 0) speeds.push_back(acc / cnt);
                    }
                    m["mean_speed_per_period"] = speeds;
                }
            }
            traj_metrics.push_back(m);

            Polyline window;
            for (const auto& q : o.trajectory.points)
                if (q.t >= t_min_out) window.push_back(q.x);
            windows.push_back(std::move(window));
        }
        if (s.wants("metrics")) metrics["trajectories"] = traj_metrics;

        if (!po.empty() && s.wants("metrics")) {
            // union of the trajectory windows vs the periodic orbit
            std::vector<Vec2> uni;
            for (const auto& w : windows) {
                if (w.size() < 2) continue;
                const Polyline res = resample_polyline(w, s.billiard.L / 1000.0);
                uni.insert(uni.end(), res.begin(), res.end());
            }
            if (!uni.empty()) {
                const Polyline po_res = resample_polyline(po, s.billiard.L / 1000.0);
                metrics["hausdorff_union_vs_po"] = hausdorff_point_sets(uni, po_res);
            }
        }
    }

    // ---- equivariance ------------------------------------------------------
    if (have_state && s.equivariance && s.wants("equivariance")) {
        const auto& ej = *s.equivariance;
        const double t1 = ej.t1 * unit;
        const double sig = ej.smooth_sigma >= 0.0 ? ej.smooth_sigma : d_ref;
        const auto starts =
            sample_from_density(state, 0.0, ej.n_samples, s.seed, SampleMethod::Stratified, 512);
        IntegratorSpec ispec;
        ispec.rel_tol = ej.rel_tol;
        ispec.abs_tol = ej.rel_tol;
        ispec.node_eta = state.node_eta * 1e-4;
        const auto outs = integrate_ensemble(state, starts, 0.0, t1, ispec, 1);
        DensityGrid hist;
        hist.nx = ej.endpoint_grid;
        hist.ny = ej.endpoint_grid;
        hist.x0 = 0.0;
        hist.y0 = 0.0;
        hist.x1 = s.billiard.L;
        hist.y1 = s.billiard.L;
        hist.values.assign(static_cast<std::size_t>(hist.nx) * hist.ny, 0.0);
        std::size_t failures = 0;
        for (const auto& o : outs) {
            if (!o.ok) {
                ++failures;
                continue;
            }
            const Vec2 e = o.trajectory.points.back().x;
            const int ix =
                std::min(hist.nx - 1, static_cast<int>(e.x * hist.nx / s.billiard.L));
            const int iy =
                std::min(hist.ny - 1, static_cast<int>(e.y * hist.ny / s.billiard.L));
            hist.at(ix, iy) += 1.0;
        }
        hist.recompute_mass();
        const std::string name = "equivariance_endpoints.grid";
        write_grid(out_path(name), hist);
        artifacts.push_back(name);
        const DensityGrid ref = downsample(density_grid(state, t1, s.fine_grid_n, s.fine_grid_n),
                                           s.fine_grid_n / ej.endpoint_grid);
        const double l1 =
            l1_distance(gaussian_smooth(hist, sig), gaussian_smooth(ref, sig));
        metrics["equivariance"] = {{"t1", t1},
                                   {"n_samples", ej.n_samples},
                                   {"failures", failures},
                                   {"smooth_sigma", sig},
                                   {"l1", l1}};
        if (failures > 0) {
            result.warnings.push_back("equivariance: " + std::to_string(failures) +
                                      " trajectories failed");
            exit_code = 2;
        }
    }

    // ---- state, metrics, plots, manifest -----------------------------------
    if (have_state && s.wants("state")) {
        write_state_file(out_path("state.qst"), state);
        artifacts.push_back("state.qst");
    }
    if (s.wants("metrics")) {
        std::ofstream mf(out_path("metrics.json"));
        mf << metrics.dump(2) << "\n";
        artifacts.push_back("metrics.json");
    }
    if (s.wants("plots")) {
        std::ofstream pf(out_path("plot.py"));
        pf << kPlotScript;
        artifacts.push_back("plot.py");
    }

    ordered_json manifest;
    manifest["name"] = s.name;
    manifest["config"] = ordered_json::parse(scenario_to_json_text(s));
    manifest["seed"] = s.seed;
    ordered_json derived;
    derived["T_PO"] = T;
    derived["times_abs"] = times_abs;
    derived["smooth_sigma"] = sigma;
    if (have_state) {
        derived["n_max"] = state.n_max;
        derived["norm"] = state.diag.norm;
        derived["leak_estimate"] = state.diag.leak_estimate;
        derived["node_eta"] = state.node_eta;
    }
    manifest["derived"] = derived;
    manifest["versions"] = {{"billiard", "0.1.0"}, {"compiler", __VERSION__}};
    manifest["threads"] = thread_count();
    manifest["artifacts"] = artifacts;
    manifest["warnings"] = result.warnings;
    manifest["exit_code"] = exit_code;
    {
        std::ofstream mf(out_path("manifest.json"));
        mf << manifest.dump(2) << "\n";
    }

    result.exit_code = exit_code;
    return result;
}

void save_state(const std::string& path, const QuantumState& st) { write_state_file(path, st); }

QuantumState load_state(const std::string& path) { return read_state_file(path); }

} // namespace billiard
