#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "billiard/bohmian.hpp"
#include "billiard/classical.hpp"
#include "billiard/quantum.hpp"
#include "billiard/scenario.hpp"

namespace py = pybind11;
using namespace billiard;

namespace {

py::array_t<double> grid_to_array(const DensityGrid& g) {
    py::array_t<double> out({g.ny, g.nx});
    auto r = out.mutable_unchecked<2>();
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) r(iy, ix) = g.at(ix, iy);
    return out;
}

DensityGrid grid_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> a,
                            double L) {
    if (a.ndim() != 2) throw std::invalid_argument("grid array must be 2D");
    DensityGrid g;
    g.ny = static_cast<int>(a.shape(0));
    g.nx = static_cast<int>(a.shape(1));
    g.x0 = 0.0;
    g.y0 = 0.0;
    g.x1 = L;
    g.y1 = L;
    g.values.resize(static_cast<std::size_t>(g.nx) * g.ny);
    auto r = a.unchecked<2>();
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) g.at(ix, iy) = r(iy, ix);
    g.recompute_mass();
    return g;
}

py::dict trajectory_to_dict(const BohmTrajectory& tr) {
    const py::ssize_t n = static_cast<py::ssize_t>(tr.points.size());
    py::array_t<double> t(n), x(n), y(n), vx(n), vy(n), R(n), Q(n);
    auto wt = t.mutable_unchecked<1>();
    auto wx = x.mutable_unchecked<1>();
    auto wy = y.mutable_unchecked<1>();
    auto wvx = vx.mutable_unchecked<1>();
    auto wvy = vy.mutable_unchecked<1>();
    auto wr = R.mutable_unchecked<1>();
    auto wq = Q.mutable_unchecked<1>();
    for (py::ssize_t i = 0; i < n; ++i) {
        const auto& p = tr.points[static_cast<std::size_t>(i)];
        wt(i) = p.t;
        wx(i) = p.x.x;
        wy(i) = p.x.y;
        wvx(i) = p.v.x;
        wvy(i) = p.v.y;
        wr(i) = p.R;
        wq(i) = p.Q;
    }
    py::dict d;
    d["t"] = t;
    d["x"] = x;
    d["y"] = y;
    d["vx"] = vx;
    d["vy"] = vy;
    d["R"] = R;
    d["Q"] = Q;
    d["steps"] = tr.stats.steps;
    d["rejects"] = tr.stats.rejects;
    d["min_R"] = tr.stats.min_R;
    d["node_stall"] = tr.stats.node_stall;
    return d;
}

GaussianEnsembleParams make_params(std::pair<double, double> x0, std::pair<double, double> p0,
                                   double d, double Delta) {
    GaussianEnsembleParams g;
    g.x0 = {x0.first, x0.second};
    g.p0 = {p0.first, p0.second};
    g.d = d;
    g.Delta = Delta > 0.0 ? Delta : d;
    return g;
}

} // namespace

PYBIND11_MODULE(_billiard, m) {
    m.doc() = "square-billiard dynamics: classical ensembles, exact wavepacket evolution, "
              "pilot-wave trajectories";

    py::class_<BilliardConfig>(m, "BilliardConfig")
        .def(py::init([](double L, double mass, double hbar) {
                 BilliardConfig c{L, mass, hbar};
                 c.validate();
                 return c;
             }),
             py::arg("L") = 10.0, py::arg("m") = 1.0, py::arg("hbar") = 1.0)
        .def_readonly("L", &BilliardConfig::L)
        .def_readonly("m", &BilliardConfig::m)
        .def_readonly("hbar", &BilliardConfig::hbar);

    py::class_<GaussianEnsembleParams>(m, "GaussianParams")
        .def(py::init(&make_params), py::arg("x0"), py::arg("p0"), py::arg("d"),
             py::arg("Delta") = -1.0)
        .def_readonly("d", &GaussianEnsembleParams::d)
        .def_readonly("Delta", &GaussianEnsembleParams::Delta);

    py::class_<PacketSpec>(m, "PacketSpec")
        .def(py::init([](const GaussianEnsembleParams& p, Complex w) {
                 return PacketSpec{p, w};
             }),
             py::arg("params"), py::arg("weight") = Complex(1.0, 0.0));

    py::class_<QuantumState>(m, "QuantumState")
        .def_readonly("n_max", &QuantumState::n_max)
        .def_readonly("t_ref", &QuantumState::t_ref)
        .def_readonly("node_eta", &QuantumState::node_eta)
        .def("norm_sq", &QuantumState::norm_sq)
        .def("coeff", [](const QuantumState& s, int nx, int ny) { return s.coeff(nx, ny); });

    // geometry
    m.def(
        "fold_coordinate",
        [](double u, double L) {
            const FoldedPoint f = fold_coordinate(u, L);
            return py::make_tuple(f.u, f.odd);
        },
        py::arg("u"), py::arg("L"), "fold an unfolded coordinate into [0, L]; returns (u, odd)");
    m.def(
        "image_points",
        [](std::pair<double, double> x, double L, int k_max) {
            std::vector<std::tuple<double, double, int>> out;
            for (const auto& im : image_points({x.first, x.second}, L, k_max))
                out.emplace_back(im.pos.x, im.pos.y, im.sign);
            return out;
        },
        py::arg("x"), py::arg("L"), py::arg("k_max"));

    // classical
    m.def(
        "propagate_classical",
        [](std::pair<double, double> x, std::pair<double, double> p, double dt,
           const BilliardConfig& cfg) {
            const ClassicalState s{{x.first, x.second}, {p.first, p.second}, 0.0};
            const ClassicalState r = propagate_classical(s, dt, cfg);
            return py::make_tuple(py::make_tuple(r.x.x, r.x.y), py::make_tuple(r.p.x, r.p.y));
        },
        py::arg("x"), py::arg("p"), py::arg("dt"), py::arg("cfg"));
    m.def(
        "detect_periodic",
        [](std::pair<double, double> p, double tol, long max_denominator)
            -> std::optional<std::pair<long, long>> {
            const auto r = detect_periodic({p.first, p.second}, tol, max_denominator);
            if (!r) return std::nullopt;
            return std::make_pair(r->n_x, r->n_y);
        },
        py::arg("p"), py::arg("tol") = 1e-12, py::arg("max_denominator") = 1l << 31);
    m.def(
        "po_period",
        [](long n_x, long n_y, std::pair<double, double> p, const BilliardConfig& cfg) {
            return po_period(n_x, n_y, {p.first, p.second}, cfg);
        },
        py::arg("n_x"), py::arg("n_y"), py::arg("p"), py::arg("cfg"));
    m.def(
        "return_period",
        [](std::pair<double, double> p, const BilliardConfig& cfg) {
            return return_period({p.first, p.second}, cfg);
        },
        py::arg("p"), py::arg("cfg"));
    m.def(
        "po_polyline",
        [](std::pair<double, double> x, std::pair<double, double> p, const BilliardConfig& cfg) {
            std::vector<std::pair<double, double>> out;
            for (const Vec2& v :
                 po_polyline({{x.first, x.second}, {p.first, p.second}, 0.0}, cfg))
                out.emplace_back(v.x, v.y);
            return out;
        },
        py::arg("x"), py::arg("p"), py::arg("cfg"));
    m.def(
        "classical_density_free",
        [](std::pair<double, double> x, double t, const GaussianEnsembleParams& params,
           const BilliardConfig& cfg) {
            return classical_density_free({x.first, x.second}, t, params, cfg);
        },
        py::arg("x"), py::arg("t"), py::arg("params"), py::arg("cfg"));
    m.def(
        "classical_density_boxed",
        [](std::pair<double, double> x, double t, const GaussianEnsembleParams& params,
           const BilliardConfig& cfg, int k_max) {
            return classical_density_boxed({x.first, x.second}, t, params, cfg, k_max);
        },
        py::arg("x"), py::arg("t"), py::arg("params"), py::arg("cfg"), py::arg("k_max") = -1);
    m.def(
        "classical_density_grid",
        [](double t, const GaussianEnsembleParams& params, const BilliardConfig& cfg, int n) {
            return grid_to_array(grid_from_field(
                [&](const Vec2& x) { return classical_density_boxed(x, t, params, cfg); }, n, n,
                cfg));
        },
        py::arg("t"), py::arg("params"), py::arg("cfg"), py::arg("n") = 128);
    m.def(
        "ensemble_histogram",
        [](const GaussianEnsembleParams& params, std::size_t n_samples, std::uint64_t seed,
           double t, int bins, const BilliardConfig& cfg) {
            const auto e = sample_ensemble(params, n_samples, seed, cfg);
            return grid_to_array(ensemble_histogram(e, t, bins, bins, cfg));
        },
        py::arg("params"), py::arg("n_samples"), py::arg("seed"), py::arg("t"),
        py::arg("bins"), py::arg("cfg"));

    // quantum
    m.def(
        "eigen_energy",
        [](int nx, int ny, const BilliardConfig& cfg) {
            return eigen_energy({nx, ny}, cfg);
        },
        py::arg("n_x"), py::arg("n_y"), py::arg("cfg"));
    m.def(
        "project",
        [](const std::vector<PacketSpec>& specs, const BilliardConfig& cfg, int n_max,
           double eps_trunc) {
            ProjectOptions opt;
            opt.n_max = n_max;
            opt.eps_trunc = eps_trunc;
            return project(specs, cfg, opt);
        },
        py::arg("packets"), py::arg("cfg"), py::arg("n_max") = 0,
        py::arg("eps_trunc") = 1e-8);
    m.def("make_eigenstate", &make_eigenstate, py::arg("n_x"), py::arg("n_y"), py::arg("cfg"));
    m.def("evolve", &evolve, py::arg("state"), py::arg("dt"));
    m.def(
        "evaluate_psi",
        [](const QuantumState& st, std::pair<double, double> x, double t) {
            const PsiEval e = evaluate_psi(st, {x.first, x.second}, t);
            py::dict d;
            d["psi"] = e.psi;
            d["grad"] = py::make_tuple(e.d_x, e.d_y);
            d["dpsi_dt"] = e.d_t;
            return d;
        },
        py::arg("state"), py::arg("x"), py::arg("t"));
    m.def(
        "hydrodynamic_fields",
        [](const QuantumState& st, std::pair<double, double> x, double t) {
            const HydroFields f = hydrodynamic_fields(st, {x.first, x.second}, t);
            py::dict d;
            d["R"] = f.R;
            d["v"] = py::make_tuple(f.v.x, f.v.y);
            d["j"] = py::make_tuple(f.j.x, f.j.y);
            d["Q"] = f.Q;
            return d;
        },
        py::arg("state"), py::arg("x"), py::arg("t"));
    m.def(
        "density_grid",
        [](const QuantumState& st, double t, int n) {
            return grid_to_array(density_grid(st, t, n, n));
        },
        py::arg("state"), py::arg("t"), py::arg("n") = 256);
    m.def(
        "short_time_density",
        [](std::pair<double, double> x, double t, const PacketSpec& spec,
           const BilliardConfig& cfg) {
            return short_time_density({x.first, x.second}, t, spec, cfg);
        },
        py::arg("x"), py::arg("t"), py::arg("packet"), py::arg("cfg"));
    m.def(
        "quantum_moments",
        [](const QuantumState& st, double t) {
            const QuantumMoments q = quantum_moments(st, t);
            py::dict d;
            d["x"] = q.mean_x;
            d["x2"] = q.mean_x2;
            d["y"] = q.mean_y;
            d["y2"] = q.mean_y2;
            d["px"] = q.mean_px;
            d["px2"] = q.mean_px2;
            d["py"] = q.mean_py;
            d["py2"] = q.mean_py2;
            d["E"] = q.mean_E;
            return d;
        },
        py::arg("state"), py::arg("t") = 0.0);

    // bohmian
    m.def(
        "integrate_trajectory",
        [](const QuantumState& st, std::pair<double, double> x0, double t0, double t1,
           double rel_tol, double abs_tol, int n_samples, double node_eta) {
            IntegratorSpec spec;
            spec.rel_tol = rel_tol;
            spec.abs_tol = abs_tol;
            spec.node_eta = node_eta;
            return trajectory_to_dict(
                integrate_trajectory(st, {x0.first, x0.second}, t0, t1, spec, n_samples));
        },
        py::arg("state"), py::arg("x0"), py::arg("t0"), py::arg("t1"),
        py::arg("rel_tol") = 1e-9, py::arg("abs_tol") = 1e-9, py::arg("n_samples") = 512,
        py::arg("node_eta") = 0.0);
    m.def(
        "sample_from_density",
        [](const QuantumState& st, double t, std::size_t n, std::uint64_t seed,
           const std::string& method) {
            const auto pts = sample_from_density(
                st, t, n, seed,
                method == "stratified" ? SampleMethod::Stratified : SampleMethod::Rejection);
            py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t(2)});
            auto w = out.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < static_cast<py::ssize_t>(pts.size()); ++i) {
                w(i, 0) = pts[static_cast<std::size_t>(i)].x;
                w(i, 1) = pts[static_cast<std::size_t>(i)].y;
            }
            return out;
        },
        py::arg("state"), py::arg("t"), py::arg("n"), py::arg("seed"),
        py::arg("method") = "rejection");

    // analysis
    m.def(
        "l1_distance",
        [](py::array_t<double> a, py::array_t<double> b, double L) {
            return l1_distance(grid_from_array(a, L), grid_from_array(b, L));
        },
        py::arg("a"), py::arg("b"), py::arg("L") = 10.0);
    m.def(
        "gaussian_smooth",
        [](py::array_t<double> a, double sigma, double L) {
            return grid_to_array(gaussian_smooth(grid_from_array(a, L), sigma));
        },
        py::arg("grid"), py::arg("sigma"), py::arg("L") = 10.0);
    m.def(
        "hausdorff_distance",
        [](const std::vector<std::pair<double, double>>& a,
           const std::vector<std::pair<double, double>>& b, double step) {
            Polyline pa, pb;
            for (auto& [x, y] : a) pa.push_back({x, y});
            for (auto& [x, y] : b) pb.push_back({x, y});
            return hausdorff_distance(pa, pb, step);
        },
        py::arg("a"), py::arg("b"), py::arg("resample_step") = 0.01);

    // scenario runner
    m.def("list_presets", [] {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& p : list_presets()) out.emplace_back(p.name, p.figure, p.description);
        return out;
    });
    m.def(
        "preset_config",
        [](const std::string& name) { return scenario_to_json_text(preset_scenario(name)); },
        py::arg("name"));
    m.def(
        "run",
        [](const std::string& config_json, const std::string& out_dir) {
            const RunResult r = run_scenario(scenario_from_json_text(config_json), out_dir);
            py::dict d;
            d["exit_code"] = r.exit_code;
            d["out_dir"] = r.out_dir;
            d["warnings"] = r.warnings;
            return d;
        },
        py::arg("config_json"), py::arg("out_dir"));

    py::register_exception<ValidationError>(m, "ValidationError");
    py::register_exception<NodeError>(m, "NodeError");
    py::register_exception<TruncationError>(m, "TruncationError");
}
