#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "billiard/analysis.hpp"
#include "billiard/quantum.hpp"

namespace billiard {

/// Tolerances and step bounds for the guidance-equation integrator.
struct IntegratorSpec {
    double rel_tol = 1e-9;
    double abs_tol = 1e-9;
    double h_init = 1e-3;
    double h_min = 1e-12;
    double node_eta = 0.0; // 0 = use the state's own threshold

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
            throw std::domain_error("IntegratorSpec: tolerances must be positive");
        if (!(h_min > 0.0) || !(h_min < h_init))
            throw std::domain_error("IntegratorSpec: need 0 < h_min < h_init");
    }
};

struct TrajectoryPoint {
    double t = 0.0;
    Vec2 x;
    Vec2 v;        // guidance velocity at (x, t)
    double R = 0.0; // |psi|^2 at (x, t)
    double Q = 0.0; // quantum potential at (x, t)
};

struct IntegratorStats {
    std::size_t steps = 0;
    std::size_t rejects = 0;
    std::size_t forced_steps = 0; // h_min Euler slivers through velocity spikes
    double min_R = std::numeric_limits<double>::infinity();
    bool node_stall = false;
    double stall_time = 0.0; // where integration stopped if node_stall
};

/// Time-ordered samples of one pilot-wave trajectory with per-point
/// diagnostics. When the integrator stalls at a node the trajectory is
/// truncated and stats.node_stall is set; nothing is interpolated past the
/// stall.
struct BohmTrajectory {
    Vec2 initial;
    std::vector<TrajectoryPoint> points;
    IntegratorStats stats;

    TimedPath timed_path() const {
        TimedPath p;
        p.t.reserve(points.size());
        p.x.reserve(points.size());
        for (const auto& q : points) {
            p.t.push_back(q.t);
            p.x.push_back(q.x);
        }
        return p;
    }
};

/// Integrate dx/dt = v_psi(x,t) from t0 to t1 with an embedded
/// Dormand-Prince 5(4) pair, PI step control and 4th-order dense output at
/// n_samples uniform times (endpoints included). Near a node the step
/// shrinks; if it collapses below h_min while |psi|^2 sits below the node
/// threshold the trajectory is returned truncated with a stall report - the
/// velocity field is never regularized. A step collapse away from any node
/// (a finite velocity spike) advances by forced h_min Euler slivers, counted
/// in stats.forced_steps.
/// Throws NodeError if the initial point is already below the node threshold.
BohmTrajectory integrate_trajectory(const QuantumState& state, const Vec2& x_i, double t0,
                                    double t1, const IntegratorSpec& spec, int n_samples = 512);

struct TrajectoryOutcome {
    BohmTrajectory trajectory;
    bool ok = false;
    std::string error;
};

/// Independent integrations over a batch of starting points, parallel across
/// trajectories; per-trajectory failures are collected, never thrown.
std::vector<TrajectoryOutcome> integrate_ensemble(const QuantumState& state,
                                                  const std::vector<Vec2>& starts, double t0,
                                                  double t1, const IntegratorSpec& spec,
                                                  int n_samples = 512);

enum class SampleMethod {
    Rejection,  // grid-envelope rejection sampling
    Stratified, // low-discrepancy inverse-CDF sampling on the density grid
};

/// Draw n positions distributed as |psi(.,t)|^2, deterministic for a fixed
/// seed. Sampling is grid-based (grid_n per axis); samples below the node
/// threshold are rejected. Throws std::domain_error if the density grid is
/// all zero.
std::vector<Vec2> sample_from_density(const QuantumState& state, double t, std::size_t n,
                                      std::uint64_t seed,
                                      SampleMethod method = SampleMethod::Rejection,
                                      int grid_n = 512);

} // namespace billiard
