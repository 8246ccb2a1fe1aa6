#include "billiard/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace billiard {

double DensityGrid::recompute_mass() {
    double acc = 0.0;
    for (double v : values) acc += v;
    mass = acc * cell_area();
    return mass;
}

void DensityGrid::normalize() {
    recompute_mass();
    if (!(mass > 0.0))
        throw std::domain_error("DensityGrid::normalize: zero or negative mass");
    const double inv = 1.0 / mass;
    for (double& v : values) v *= inv;
    mass = 1.0;
}

DensityGrid grid_from_field(const std::function<double(const Vec2&)>& f, int nx, int ny,
                            const BilliardConfig& cfg) {
    if (nx < 2 || ny < 2)
        throw std::domain_error("grid_from_field: need nx, ny >= 2");
    cfg.validate();
    DensityGrid g;
    g.nx = nx;
    g.ny = ny;
    g.x0 = 0.0;
    g.y0 = 0.0;
    g.x1 = cfg.L;
    g.y1 = cfg.L;
    g.values.resize(static_cast<std::size_t>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const double v = f(g.cell_center(ix, iy));
            if (v < 0.0 || !std::isfinite(v))
                throw std::domain_error("grid_from_field: density sample negative or non-finite");
            g.at(ix, iy) = v;
        }
    }
    g.recompute_mass();
    return g;
}

DensityGrid grid_from_field_avg(const std::function<double(const Vec2&)>& f, int nx, int ny,
                                const BilliardConfig& cfg, int subsamples) {
    if (subsamples < 1)
        throw std::domain_error("grid_from_field_avg: need subsamples >= 1");
    DensityGrid g = grid_from_field(f, nx, ny, cfg);
    if (subsamples == 1) return g;
    const double hx = g.cell_w() / subsamples;
    const double hy = g.cell_h() / subsamples;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            double acc = 0.0;
            for (int sy = 0; sy < subsamples; ++sy)
                for (int sx = 0; sx < subsamples; ++sx) {
                    const Vec2 x{g.x0 + ix * g.cell_w() + (sx + 0.5) * hx,
                                 g.y0 + iy * g.cell_h() + (sy + 0.5) * hy};
                    const double v = f(x);
                    if (v < 0.0 || !std::isfinite(v))
                        throw std::domain_error(
                            "grid_from_field_avg: density sample negative or non-finite");
                    acc += v;
                }
            g.at(ix, iy) = acc / (subsamples * subsamples);
        }
    g.recompute_mass();
    return g;
}

double l1_distance(const DensityGrid& a, const DensityGrid& b) {
    if (!a.same_shape(b))
        throw std::domain_error("l1_distance: grid shapes differ");
    DensityGrid an = a, bn = b;
    an.normalize();
    bn.normalize();
    double acc = 0.0;
    for (std::size_t i = 0; i < an.values.size(); ++i)
        acc += std::fabs(an.values[i] - bn.values[i]);
    return acc * a.cell_area();
}

namespace {

// Reflect an out-of-range index back into [0, n): ... 2,1,0 | 0,1,2 ... n-1 | n-1 ...
int reflect_index(int i, int n) {
    const int period = 2 * n;
    int r = i % period;
    if (r < 0) r += period;
    return r < n ? r : period - 1 - r;
}

std::vector<double> gaussian_kernel(double sigma_cells) {
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_cells)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i / sigma_cells) * (i / sigma_cells));
        k[i + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

} // namespace

DensityGrid gaussian_smooth(const DensityGrid& g, double sigma) {
    if (sigma < 0.0)
        throw std::domain_error("gaussian_smooth: sigma must be >= 0");
    if (sigma == 0.0) return g;

    DensityGrid out = g;
    // Separable pass per axis; the kernel is normalized and indices reflect
    // at the walls, so each pass redistributes mass without loss.
    {
        const auto k = gaussian_kernel(sigma / g.cell_w());
        const int radius = (static_cast<int>(k.size()) - 1) / 2;
        DensityGrid tmp = out;
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                double acc = 0.0;
                for (int o = -radius; o <= radius; ++o)
                    acc += k[o + radius] * out.at(reflect_index(ix + o, g.nx), iy);
                tmp.at(ix, iy) = acc;
            }
        out = std::move(tmp);
    }
    {
        const auto k = gaussian_kernel(sigma / g.cell_h());
        const int radius = (static_cast<int>(k.size()) - 1) / 2;
        DensityGrid tmp = out;
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                double acc = 0.0;
                for (int o = -radius; o <= radius; ++o)
                    acc += k[o + radius] * out.at(ix, reflect_index(iy + o, g.ny));
                tmp.at(ix, iy) = acc;
            }
        out = std::move(tmp);
    }
    out.recompute_mass();
    return out;
}

DensityGrid downsample(const DensityGrid& g, int factor) {
    if (factor < 1 || g.nx % factor != 0 || g.ny % factor != 0)
        throw std::domain_error("downsample: factor must divide both grid dimensions");
    DensityGrid o;
    o.nx = g.nx / factor;
    o.ny = g.ny / factor;
    o.x0 = g.x0;
    o.y0 = g.y0;
    o.x1 = g.x1;
    o.y1 = g.y1;
    o.values.assign(static_cast<std::size_t>(o.nx) * o.ny, 0.0);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            o.at(ix / factor, iy / factor) += g.at(ix, iy) * inv;
    o.recompute_mass();
    return o;
}

Polyline resample_polyline(const Polyline& poly, double step) {
    if (poly.empty())
        throw std::domain_error("resample_polyline: empty polyline");
    if (!(step > 0.0))
        throw std::domain_error("resample_polyline: step must be positive");
    Polyline out;
    out.push_back(poly.front());
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
        const Vec2 a = poly[i];
        const Vec2 b = poly[i + 1];
        const double len = distance(a, b);
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / step)));
        for (int j = 1; j <= pieces; ++j) {
            const double s = static_cast<double>(j) / pieces;
            out.push_back(a + (b - a) * s);
        }
    }
    return out;
}

double hausdorff_distance(const Polyline& a, const Polyline& b, double resample_step) {
    if (a.empty() || b.empty())
        throw std::domain_error("hausdorff_distance: empty polyline");
    const Polyline ra = resample_polyline(a, resample_step);
    const Polyline rb = resample_polyline(b, resample_step);
    auto directed = [](const Polyline& p, const Polyline& q) {
        double worst = 0.0;
        for (const Vec2& u : p) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec2& v : q) {
                const double d2 = (u - v).norm_sq();
                if (d2 < best) best = d2;
            }
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(ra, rb), directed(rb, ra));
}

std::vector<double> near_returns(const TimedPath& path, const Vec2& x_ref, double radius,
                                 double min_separation) {
    if (!(radius > 0.0))
        throw std::domain_error("near_returns: radius must be positive");
    if (path.t.size() != path.x.size())
        throw std::domain_error("near_returns: inconsistent path");
    const std::size_t n = path.t.size();
    std::vector<std::pair<double, double>> hits; // (time, distance)
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double dm = distance(path.x[i - 1], x_ref);
        const double d0 = distance(path.x[i], x_ref);
        const double dp = distance(path.x[i + 1], x_ref);
        if (d0 <= dm && d0 <= dp && d0 < radius)
            hits.emplace_back(path.t[i], d0);
    }
    // a return that ends the path counts too
    if (n >= 2) {
        const double d_end = distance(path.x[n - 1], x_ref);
        if (d_end <= distance(path.x[n - 2], x_ref) && d_end < radius)
            hits.emplace_back(path.t[n - 1], d_end);
    }
    // Deduplicate: inside any min_separation window keep the deepest minimum.
    std::vector<double> out;
    std::size_t i = 0;
    while (i < hits.size()) {
        std::size_t best = i;
        std::size_t j = i + 1;
        while (j < hits.size() && hits[j].first - hits[best].first < min_separation) {
            if (hits[j].second < hits[best].second) best = j;
            ++j;
        }
        out.push_back(hits[best].first);
        i = j;
    }
    return out;
}

double wall_distance(const Vec2& x, const BilliardConfig& cfg) {
    return std::min(std::min(x.x, cfg.L - x.x), std::min(x.y, cfg.L - x.y));
}

std::vector<std::pair<int, double>> wall_standoff_series(const TimedPath& path,
                                                         const BilliardConfig& cfg,
                                                         double radius,
                                                         double min_separation) {
    if (path.t.size() != path.x.size() || path.t.empty())
        throw std::domain_error("wall_standoff_series: inconsistent path");
    const auto cuts = near_returns(path, path.x.front(), radius, min_separation);
    std::vector<double> boundaries;
    boundaries.push_back(path.t.front());
    for (double c : cuts)
        if (c > boundaries.back()) boundaries.push_back(c);
    if (path.t.back() > boundaries.back()) boundaries.push_back(path.t.back());
    if (boundaries.size() < 3)
        throw std::domain_error("wall_standoff_series: trajectory spans fewer than two traversals");

    std::vector<std::pair<int, double>> out;
    std::size_t k = 0;
    for (std::size_t seg = 0; seg + 1 < boundaries.size(); ++seg) {
        double best = std::numeric_limits<double>::infinity();
        while (k < path.t.size() && path.t[k] <= boundaries[seg + 1]) {
            best = std::min(best, wall_distance(path.x[k], cfg));
            ++k;
        }
        if (k > 0) --k; // boundary sample belongs to both segments
        out.emplace_back(static_cast<int>(seg), best);
    }
    return out;
}

} // namespace billiard
