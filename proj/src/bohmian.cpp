#include "billiard/bohmian.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "billiard/parallel.hpp"
#include "billiard/rng.hpp"

namespace billiard {

namespace {

// Dormand-Prince 5(4) tableau (FSAL).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (error weights, with the 7th stage = next k1).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output weights of the classic 4th-order interpolant.
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

struct DenseSegment {
    double t = 0.0, h = 0.0;
    Vec2 r1, r2, r3, r4, r5;

    Vec2 eval(double tq) const {
        const double th = (tq - t) / h;
        const double th1 = 1.0 - th;
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
    }
};

struct FieldProbe {
    const QuantumState* state;
    double eta;
    double min_R = std::numeric_limits<double>::infinity();
    double last_R = std::numeric_limits<double>::infinity();

    bool operator()(const Vec2& x, double t, Vec2& v) {
        double R = 0.0;
        const bool ok = try_velocity(*state, x, t, eta, v, R);
        if (R > 0.0) {
            min_R = std::min(min_R, R);
            last_R = R;
        }
        return ok;
    }
};

TrajectoryPoint sample_point(const QuantumState& state, double t, const Vec2& x) {
    TrajectoryPoint p;
    p.t = t;
    p.x = x;
    HydroFields f;
    if (try_hydrodynamic_fields(state, x, t, f)) {
        p.v = f.v;
        p.R = f.R;
        p.Q = f.Q;
    }
    return p;
}

} // namespace

BohmTrajectory integrate_trajectory(const QuantumState& state, const Vec2& x_i, double t0,
                                    double t1, const IntegratorSpec& spec, int n_samples) {
    spec.validate();
    if (!(t1 > t0))
        throw std::domain_error("integrate_trajectory: need t1 > t0");
    if (n_samples < 1)
        throw std::domain_error("integrate_trajectory: need n_samples >= 1");
    const double eta = spec.node_eta > 0.0 ? spec.node_eta : state.node_eta;

    FieldProbe probe{&state, eta};
    Vec2 v0;
    {
        double R0 = 0.0;
        Vec2 vtmp;
        if (!try_velocity(state, x_i, t0, eta, vtmp, R0))
            throw NodeError("integrate_trajectory: initial point below node threshold", R0);
        v0 = vtmp;
        probe.min_R = R0;
    }

    BohmTrajectory traj;
    traj.initial = x_i;
    traj.points.reserve(n_samples + 1);

    std::vector<double> sample_times(n_samples + 1);
    for (int k = 0; k <= n_samples; ++k)
        sample_times[k] = t0 + (t1 - t0) * static_cast<double>(k) / n_samples;
    std::size_t next_sample = 0;

    auto emit_upto = [&](double t_end, const DenseSegment& seg) {
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t_end) {
            const double ts = sample_times[next_sample];
            traj.points.push_back(sample_point(state, ts, seg.eval(ts)));
            ++next_sample;
        }
    };

    // first sample is the initial point itself
    traj.points.push_back(sample_point(state, t0, x_i));
    next_sample = 1;

    double t = t0;
    Vec2 x = x_i;
    Vec2 k1 = v0;
    double h = std::min(spec.h_init, t1 - t0);
    bool rejected_last = false;

    while (t < t1) {
        h = std::min(h, t1 - t);
        Vec2 k2, k3, k4, k5, k6, k7;
        Vec2 x_new;
        bool stage_ok =
            probe(x + h * (a21 * k1), t + c2 * h, k2) &&
            probe(x + h * (a31 * k1 + a32 * k2), t + c3 * h, k3) &&
            probe(x + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h, k4) &&
            probe(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h, k5) &&
            probe(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h, k6);
        if (stage_ok) {
            x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            stage_ok = probe(x_new, t + h, k7); // FSAL stage
        }

        double err = 2.0;
        if (stage_ok) {
            const Vec2 ev =
                h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const double sx = spec.abs_tol +
                              spec.rel_tol * std::max(std::fabs(x.x), std::fabs(x_new.x));
            const double sy = spec.abs_tol +
                              spec.rel_tol * std::max(std::fabs(x.y), std::fabs(x_new.y));
            err = std::sqrt(0.5 * ((ev.x / sx) * (ev.x / sx) + (ev.y / sy) * (ev.y / sy)));
        }

        if (stage_ok && err <= 1.0) {
            DenseSegment seg;
            seg.t = t;
            seg.h = h;
            const Vec2 ydiff = x_new - x;
            const Vec2 bspl = h * k1 - ydiff;
            seg.r1 = x;
            seg.r2 = ydiff;
            seg.r3 = bspl;
            seg.r4 = ydiff - h * k7 - bspl;
            seg.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
            emit_upto(t + h, seg);

            t += h;
            x = x_new;
            k1 = k7;
            ++traj.stats.steps;

            const double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
            h *= std::min(rejected_last ? 1.0 : 5.0, std::max(0.2, fac));
            rejected_last = false;
        } else {
            ++traj.stats.rejects;
            rejected_last = true;
            h *= stage_ok ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.5;
            if (h < spec.h_min) {
                if (probe.last_R < eta) {
                    // genuinely at a node: stop rather than regularize
                    traj.stats.node_stall = true;
                    traj.stats.stall_time = t;
                    break;
                }
                // finite velocity spike: cross it with forced Euler slivers
                const double h_forced = std::max(spec.h_min, 4.0 * t * 1e-16);
                DenseSegment seg;
                seg.t = t;
                seg.h = h_forced;
                seg.r1 = x;
                seg.r2 = h_forced * k1;
                emit_upto(t + h_forced, seg);
                t += h_forced;
                x += h_forced * k1;
                ++traj.stats.forced_steps;
                Vec2 k_new;
                if (!probe(x, t, k_new)) {
                    traj.stats.node_stall = true;
                    traj.stats.stall_time = t;
                    break;
                }
                k1 = k_new;
                h = std::min(1e3 * h_forced, t1 - t);
                rejected_last = false;
                if (traj.stats.forced_steps > 5'000'000) {
                    traj.stats.node_stall = true; // runaway spike: report, do not hang
                    traj.stats.stall_time = t;
                    break;
                }
            }
        }
    }
    traj.stats.min_R = probe.min_R;

    if (!traj.stats.node_stall) {
        // make sure the final time is represented even with rounding slack
        if (next_sample == sample_times.size() - 1) {
            traj.points.push_back(sample_point(state, t1, x));
            ++next_sample;
        }
    }
    return traj;
}

std::vector<TrajectoryOutcome> integrate_ensemble(const QuantumState& state,
                                                  const std::vector<Vec2>& starts, double t0,
                                                  double t1, const IntegratorSpec& spec,
                                                  int n_samples) {
    std::vector<TrajectoryOutcome> out(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        try {
            out[i].trajectory = integrate_trajectory(state, starts[i], t0, t1, spec, n_samples);
            out[i].ok = !out[i].trajectory.stats.node_stall;
            if (!out[i].ok) out[i].error = "node stall at t = " +
                                           std::to_string(out[i].trajectory.stats.stall_time);
        } catch (const std::exception& e) {
            out[i].ok = false;
            out[i].error = e.what();
        }
    });
    return out;
}

std::vector<Vec2> sample_from_density(const QuantumState& state, double t, std::size_t n,
                                      std::uint64_t seed, SampleMethod method, int grid_n) {
    if (n < 1)
        throw std::domain_error("sample_from_density: need n >= 1");
    const DensityGrid g = density_grid(state, t, grid_n, grid_n);
    double total = 0.0;
    for (double v : g.values) total += v;
    if (!(total > 0.0))
        throw std::domain_error("sample_from_density: density grid is identically zero");

    const double eta = state.node_eta;
    Rng rng(seed);
    std::vector<Vec2> out;
    out.reserve(n);

    auto density_at = [&](const Vec2& x) {
        const PsiEval e = evaluate_psi(state, x, t);
        return std::norm(e.psi);
    };

    if (method == SampleMethod::Rejection) {
        // Per-cell envelope: neighborhood max with headroom; exact cell-level
        // discrete sampling, then accept/reject inside the cell.
        std::vector<double> env(g.values.size());
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                double m = 0.0;
                for (int oy = -1; oy <= 1; ++oy)
                    for (int ox = -1; ox <= 1; ++ox) {
                        const int jx = std::clamp(ix + ox, 0, g.nx - 1);
                        const int jy = std::clamp(iy + oy, 0, g.ny - 1);
                        m = std::max(m, g.at(jx, jy));
                    }
                env[static_cast<std::size_t>(iy) * g.nx + ix] = 1.5 * m;
            }
        std::vector<double> cdf(env.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < env.size(); ++i) {
            acc += env[i];
            cdf[i] = acc;
        }
        while (out.size() < n) {
            const double u = rng.uniform() * acc;
            const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
            const std::size_t cell = static_cast<std::size_t>(it - cdf.begin());
            const int iy = static_cast<int>(cell) / g.nx;
            const int ix = static_cast<int>(cell) % g.nx;
            const Vec2 x{g.x0 + (ix + rng.uniform()) * g.cell_w(),
                         g.y0 + (iy + rng.uniform()) * g.cell_h()};
            const double R = density_at(x);
            if (R < eta) continue;
            if (rng.uniform() * env[cell] <= R) out.push_back(x);
        }
        return out;
    }

    // Stratified: exact inverse-CDF sampling of the grid density driven by a
    // jittered lattice; endpoint statistics converge ~N^-3/4 instead of N^-1/2.
    std::vector<double> colsum(g.nx, 0.0);
    for (int ix = 0; ix < g.nx; ++ix)
        for (int iy = 0; iy < g.ny; ++iy) colsum[ix] += g.at(ix, iy);
    std::vector<double> col_cdf(g.nx);
    double acc = 0.0;
    for (int ix = 0; ix < g.nx; ++ix) {
        acc += colsum[ix];
        col_cdf[ix] = acc;
    }
    std::vector<std::vector<double>> cond_cdf(g.nx);
    for (int ix = 0; ix < g.nx; ++ix) {
        cond_cdf[ix].resize(g.ny);
        double a2 = 0.0;
        for (int iy = 0; iy < g.ny; ++iy) {
            a2 += g.at(ix, iy);
            cond_cdf[ix][iy] = a2;
        }
    }
    const std::size_t gx = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    std::size_t tries = 0;
    for (std::size_t i = 0; out.size() < n; ++i, ++tries) {
        if (tries > 100 * n + 1000)
            throw std::domain_error("sample_from_density: node threshold rejects everything");
        const std::size_t sx0 = i % gx;
        const std::size_t sy0 = (i / gx) % gx;
        const double u = (static_cast<double>(sx0) + rng.uniform()) / static_cast<double>(gx);
        const double v = (static_cast<double>(sy0) + rng.uniform()) / static_cast<double>(gx);
        const double uu = u * acc;
        const auto itx = std::lower_bound(col_cdf.begin(), col_cdf.end(), uu);
        const int ix = static_cast<int>(itx - col_cdf.begin());
        const double prev_x = ix > 0 ? col_cdf[ix - 1] : 0.0;
        const double fx = colsum[ix] > 0.0 ? (uu - prev_x) / colsum[ix] : rng.uniform();
        const double vv = v * cond_cdf[ix].back();
        const auto ity = std::lower_bound(cond_cdf[ix].begin(), cond_cdf[ix].end(), vv);
        const int iy = static_cast<int>(ity - cond_cdf[ix].begin());
        const double prev_y = iy > 0 ? cond_cdf[ix][iy - 1] : 0.0;
        const double fy = g.at(ix, iy) > 0.0 ? (vv - prev_y) / g.at(ix, iy) : rng.uniform();
        const Vec2 x{g.x0 + (ix + std::clamp(fx, 0.0, 1.0)) * g.cell_w(),
                     g.y0 + (iy + std::clamp(fy, 0.0, 1.0)) * g.cell_h()};
        if (density_at(x) < eta) continue;
        out.push_back(x);
    }
    return out;
}

int thread_count() {
    if (const char* env = std::getenv("BILLIARD_THREADS")) {
        const int k = std::atoi(env);
        if (k >= 1) return k;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const int workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

} // namespace billiard
