#pragma once

#include <functional>
#include <vector>

#include "billiard/geometry.hpp"
#include "billiard/vec2.hpp"

namespace billiard {

/// Uniform cell-centered density grid over a rectangle (normally [0,L]^2).
/// `mass` is the midpoint-rule integral sum(values)*cell_area, kept in sync
/// by every constructor/mutator here.
struct DensityGrid {
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    std::vector<double> values; // row-major, index iy*nx + ix
    double mass = 0.0;

    double cell_w() const { return (x1 - x0) / nx; }
    double cell_h() const { return (y1 - y0) / ny; }
    double cell_area() const { return cell_w() * cell_h(); }
    Vec2 cell_center(int ix, int iy) const {
        return {x0 + (ix + 0.5) * cell_w(), y0 + (iy + 0.5) * cell_h()};
    }
    double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * nx + ix]; }
    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }

    double recompute_mass();
    /// Scale values so the grid integrates to one. Throws on zero mass.
    void normalize();
    bool same_shape(const DensityGrid& o) const {
        return nx == o.nx && ny == o.ny && x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
    }
};

/// Midpoint-sample a density function on cell centers. The recorded mass is
/// whatever the samples integrate to; it is not forced to one. Negative
/// samples are a contract violation and raise std::domain_error.
DensityGrid grid_from_field(const std::function<double(const Vec2&)>& f, int nx, int ny,
                            const BilliardConfig& cfg);

/// Cell-averaged variant (subsamples x subsamples midpoint points per cell);
/// the right reference when comparing against histograms of samples.
DensityGrid grid_from_field_avg(const std::function<double(const Vec2&)>& f, int nx, int ny,
                                const BilliardConfig& cfg, int subsamples = 4);

/// L1 distance sum(|a-b|)*cell_area between unit-mass copies of the inputs;
/// ranges over [0,2]. Throws std::domain_error on shape mismatch.
double l1_distance(const DensityGrid& a, const DensityGrid& b);

/// Convolve with a Gaussian of width sigma (truncated at 4 sigma), applied
/// separably per axis with reflecting walls so mass is preserved.
/// sigma == 0 returns the input unchanged.
DensityGrid gaussian_smooth(const DensityGrid& g, double sigma);

/// Block-average the grid by an integer factor (mass preserved); used to
/// carry fringe-resolving fine grids down to comparison resolution.
DensityGrid downsample(const DensityGrid& g, int factor);

using Polyline = std::vector<Vec2>;

/// Resample a polyline at (at most) uniform arc-length steps of `step`,
/// keeping the original vertices.
Polyline resample_polyline(const Polyline& poly, double step);

/// Symmetric Hausdorff distance between the two polylines after resampling
/// both at steps <= resample_step. Throws std::domain_error on empty input.
double hausdorff_distance(const Polyline& a, const Polyline& b, double resample_step);

/// A time-stamped sampled path (the geometry-only view of a trajectory).
struct TimedPath {
    std::vector<double> t;
    std::vector<Vec2> x;
};

/// Times of local minima of |x(t) - x_ref| that dip below `radius`; minima
/// closer than min_separation keep only the deepest representative.
std::vector<double> near_returns(const TimedPath& path, const Vec2& x_ref, double radius,
                                 double min_separation = 0.0);

/// Per-traversal minimum wall distance. The path is cut at its near-returns
/// to the starting point (radius/min_separation as in near_returns) and each
/// segment reports its minimum distance to the nearest wall. Throws
/// std::domain_error when fewer than two segments result.
std::vector<std::pair<int, double>> wall_standoff_series(const TimedPath& path,
                                                         const BilliardConfig& cfg,
                                                         double radius,
                                                         double min_separation = 0.0);

/// Distance from a point to the nearest wall of [0,L]^2.
double wall_distance(const Vec2& x, const BilliardConfig& cfg);

} // namespace billiard
