#include "billiard/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "billiard/rng.hpp"

namespace billiard {

ClassicalState propagate_classical(const ClassicalState& s, double dt, const BilliardConfig& cfg) {
    cfg.validate();
    if (dt < 0.0)
        throw std::domain_error("propagate_classical: dt must be >= 0");
    const FoldedPoint fx = fold_coordinate(s.x.x + s.p.x * dt / cfg.m, cfg.L);
    const FoldedPoint fy = fold_coordinate(s.x.y + s.p.y * dt / cfg.m, cfg.L);
    ClassicalState out;
    out.x = {fx.u, fy.u};
    out.p = {fx.odd ? -s.p.x : s.p.x, fy.odd ? -s.p.y : s.p.y};
    out.t = s.t + dt;
    return out;
}

namespace {

long gcd_ll(long a, long b) {
    while (b != 0) {
        const long r = a % b;
        a = b;
        b = r;
    }
    return a < 0 ? -a : a;
}

} // namespace

std::optional<PoIndices> detect_periodic(const Vec2& p, double tol, long max_denominator) {
    if (p.x == 0.0 && p.y == 0.0)
        throw std::domain_error("detect_periodic: zero momentum");
    if (p.y == 0.0) return PoIndices{0, 1};
    if (p.x == 0.0) return PoIndices{1, 0};

    const double ratio = std::fabs(p.x / p.y); // = n_y / n_x for a closed orbit
    // Continued-fraction convergents h_k/q_k of ratio.
    double frac = ratio;
    long h_prev = 1, h = static_cast<long>(std::floor(frac));
    long q_prev = 0, q = 1;
    frac -= std::floor(frac);
    for (int iter = 0; iter < 64; ++iter) {
        if (q <= max_denominator &&
            std::fabs(ratio - static_cast<double>(h) / static_cast<double>(q)) <= tol * ratio) {
            const long g = gcd_ll(h == 0 ? 1 : h, q);
            return PoIndices{q / g, h == 0 ? 0 : h / g};
        }
        if (frac == 0.0) break;
        const double inv = 1.0 / frac;
        const double a_f = std::floor(inv);
        if (a_f > 4.0e18) break;
        const long a = static_cast<long>(a_f);
        frac = inv - a_f;
        const long h_next = a * h + h_prev;
        const long q_next = a * q + q_prev;
        h_prev = h;
        q_prev = q;
        h = h_next;
        q = q_next;
        if (q > max_denominator && q_prev > 0 &&
            std::fabs(ratio - static_cast<double>(h_prev) / static_cast<double>(q_prev)) >
                tol * ratio)
            return std::nullopt;
    }
    if (q <= max_denominator &&
        std::fabs(ratio - static_cast<double>(h) / static_cast<double>(q)) <= tol * ratio) {
        const long g = gcd_ll(h == 0 ? 1 : h, q);
        return PoIndices{q / g, h == 0 ? 0 : h / g};
    }
    return std::nullopt;
}

double po_period(long n_x, long n_y, const Vec2& p, const BilliardConfig& cfg) {
    cfg.validate();
    const double pnorm = p.norm();
    if (pnorm == 0.0)
        throw std::domain_error("po_period: zero momentum");
    return cfg.L * std::hypot(static_cast<double>(n_x), static_cast<double>(n_y)) / pnorm;
}

double return_period(const Vec2& p, const BilliardConfig& cfg, double tol, long max_denominator) {
    const auto idx = detect_periodic(p, tol, max_denominator);
    if (!idx)
        throw std::domain_error("return_period: momentum direction is not periodic at this tolerance");
    return 2.0 * cfg.m * po_period(idx->n_x, idx->n_y, p, cfg);
}

ClassicalEnsemble sample_ensemble(const GaussianEnsembleParams& params, std::size_t n,
                                  std::uint64_t seed, const BilliardConfig& cfg) {
    params.validate();
    cfg.validate();
    if (n < 1)
        throw std::domain_error("sample_ensemble: need at least one sample");
    const double sigma_p = 1.0 / (2.0 * params.Delta);
    ClassicalEnsemble e;
    e.seed = seed;
    e.params = params;
    e.samples.reserve(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double ux = rng.normal(params.x0.x, params.d);
        const double uy = rng.normal(params.x0.y, params.d);
        const double px = rng.normal(params.p0.x, sigma_p);
        const double py = rng.normal(params.p0.y, sigma_p);
        const FoldedPoint fx = fold_coordinate(ux, cfg.L);
        const FoldedPoint fy = fold_coordinate(uy, cfg.L);
        ClassicalState s;
        s.x = {fx.u, fy.u};
        s.p = {fx.odd ? -px : px, fy.odd ? -py : py};
        s.t = 0.0;
        e.samples.push_back(s);
    }
    return e;
}

double classical_sigma(double t, const GaussianEnsembleParams& params, const BilliardConfig& cfg) {
    const double md = cfg.m * params.Delta;
    return std::sqrt(params.d * params.d + t * t / (4.0 * md * md));
}

double classical_density_free(const Vec2& x, double t, const GaussianEnsembleParams& params,
                              const BilliardConfig& cfg) {
    params.validate();
    cfg.validate();
    const double m = cfg.m;
    const double d2 = params.d * params.d;
    const double D2 = params.Delta * params.Delta;
    const double denom = std::numbers::pi * t * t / (2.0 * D2 * m * m) + 2.0 * std::numbers::pi * d2;
    const double ax = params.x0.x - x.x + params.p0.x * t / m;
    const double ay = params.x0.y - x.y + params.p0.y * t / m;
    const double coeff = 2.0 * m * m * D2 / (t * t + 4.0 * d2 * m * m * D2);
    return std::exp(-coeff * (ax * ax + ay * ay)) / denom;
}

int boxed_density_auto_kmax(double t, const GaussianEnsembleParams& params,
                            const BilliardConfig& cfg) {
    // Per axis: images of x live at 2jL +- x; all of them matter only while
    // |2jL| stays within the packet's reach. 8 sigma leaves tail mass below
    // 1e-15 per axis, comfortably under the 1e-12 budget.
    const double sigma = classical_sigma(t, params, cfg);
    const double vmax = std::max(std::fabs(params.p0.x), std::fabs(params.p0.y)) / cfg.m;
    const double reach = std::max(std::fabs(params.x0.x), std::fabs(params.x0.y)) +
                         vmax * t + 8.0 * sigma + cfg.L;
    return static_cast<int>(std::ceil(reach / (2.0 * cfg.L)));
}

double classical_density_boxed(const Vec2& x, double t, const GaussianEnsembleParams& params,
                               const BilliardConfig& cfg, int k_max) {
    if (!(x.x >= 0.0 && x.x <= cfg.L && x.y >= 0.0 && x.y <= cfg.L))
        throw std::domain_error("classical_density_boxed: point outside the box");
    if (k_max < 0) k_max = boxed_density_auto_kmax(t, params, cfg);

    // The free density factorizes per axis, and every image carries weight +1,
    // so the image sum is a product of two one-dimensional wrapped sums.
    const double m = cfg.m;
    const double d2 = params.d * params.d;
    const double D2 = params.Delta * params.Delta;
    const double denom = std::numbers::pi * t * t / (2.0 * D2 * m * m) + 2.0 * std::numbers::pi * d2;
    const double coeff = 2.0 * m * m * D2 / (t * t + 4.0 * d2 * m * m * D2);

    auto axis_sum = [&](double u, double c0, double v) {
        const double center = c0 + v * t / m;
        double acc = 0.0;
        for (int j = -k_max; j <= k_max; ++j) {
            const double even_im = 2.0 * j * cfg.L + u;
            const double odd_im = 2.0 * j * cfg.L - u;
            const double de = even_im - center;
            const double dd = odd_im - center;
            acc += std::exp(-coeff * de * de) + std::exp(-coeff * dd * dd);
        }
        return acc;
    };
    const double sx = axis_sum(x.x, params.x0.x, params.p0.x);
    const double sy = axis_sum(x.y, params.x0.y, params.p0.y);
    return sx * sy / denom;
}

Polyline po_polyline(const ClassicalState& s, const BilliardConfig& cfg, double tol,
                     long max_denominator) {
    const double T = return_period(s.p, cfg, tol, max_denominator);
    // wall-hit times per axis: x0 + v t crosses a multiple of L
    std::vector<double> events;
    auto axis_events = [&](double x0, double p) {
        if (p == 0.0) return;
        const double v = p / cfg.m;
        // first crossing ahead of x0 in direction v, then every L/|v|
        const double step = cfg.L / std::fabs(v);
        double u = x0 / cfg.L;
        double first = v > 0.0 ? (std::ceil(u) - u) * cfg.L / v : (u - std::floor(u)) * cfg.L / (-v);
        if (first == 0.0) first = step;
        for (double t = first; t < T - 1e-12 * T; t += step) events.push_back(t);
    };
    axis_events(s.x.x, s.p.x);
    axis_events(s.x.y, s.p.y);
    std::sort(events.begin(), events.end());
    Polyline out;
    out.push_back(s.x);
    for (double t : events) out.push_back(propagate_classical(s, t, cfg).x);
    out.push_back(s.x); // closes after exactly one period
    return out;
}

DensityGrid ensemble_histogram(const ClassicalEnsemble& e, double t, int nx, int ny,
                               const BilliardConfig& cfg) {
    if (e.samples.empty())
        throw std::domain_error("ensemble_histogram: empty ensemble");
    if (nx < 2 || ny < 2)
        throw std::domain_error("ensemble_histogram: need at least 2 bins per axis");
    DensityGrid g;
    g.nx = nx;
    g.ny = ny;
    g.x0 = 0.0;
    g.y0 = 0.0;
    g.x1 = cfg.L;
    g.y1 = cfg.L;
    g.values.assign(static_cast<std::size_t>(nx) * ny, 0.0);
    const double wx = nx / cfg.L;
    const double wy = ny / cfg.L;
    for (const ClassicalState& s : e.samples) {
        const ClassicalState moved = propagate_classical(s, t, cfg);
        int ix = static_cast<int>(moved.x.x * wx);
        int iy = static_cast<int>(moved.x.y * wy);
        if (ix == nx) ix = nx - 1; // boundary hit folds into the last cell
        if (iy == ny) iy = ny - 1;
        g.at(ix, iy) += 1.0;
    }
    const double norm = 1.0 / (static_cast<double>(e.samples.size()) * g.cell_area());
    for (double& v : g.values) v *= norm;
    g.recompute_mass();
    return g;
}

} // namespace billiard
