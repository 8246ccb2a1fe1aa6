#include "billiard/geometry.hpp"

#include <cmath>

namespace billiard {

FoldedPoint fold_coordinate(double u_unfolded, double L) {
    if (!(L > 0.0))
        throw std::domain_error("fold_coordinate: L must be positive");
    if (!std::isfinite(u_unfolded))
        throw std::domain_error("fold_coordinate: non-finite coordinate");

    const double two_L = 2.0 * L;
    double r = std::fmod(u_unfolded, two_L);
    if (r < 0.0) r += two_L;          // r in [0, 2L), shifted by an even cell count
    const double folded = L - std::fabs(r - L);

    // floor(u/L) and floor(r/L) differ by the even number 2*floor(u/2L),
    // so the reduced remainder carries the reflection parity directly.
    const bool odd = (r >= L);
    return {folded, odd};
}

std::vector<std::pair<double, int>> axis_images(double u, double L, int k_max) {
    if (k_max < 0)
        throw std::domain_error("axis_images: k_max must be >= 0");
    if (!(u >= 0.0 && u <= L))
        throw std::domain_error("axis_images: coordinate outside the closed box");
    std::vector<std::pair<double, int>> out;
    out.reserve(2 * (2 * k_max + 1));
    for (int j = -k_max; j <= k_max; ++j) {
        const double base = 2.0 * j * L;
        out.emplace_back(base + u, +1);
        out.emplace_back(base - u, -1);
    }
    return out;
}

std::vector<ImagePoint> image_points(const Vec2& x, double L, int k_max) {
    if (!(x.x >= 0.0 && x.x <= L && x.y >= 0.0 && x.y <= L))
        throw std::domain_error("image_points: point outside the closed box");
    const auto xs = axis_images(x.x, L, k_max);
    const auto ys = axis_images(x.y, L, k_max);
    std::vector<ImagePoint> out;
    out.reserve(xs.size() * ys.size());
    for (const auto& [yv, ysign] : ys)
        for (const auto& [xv, xsign] : xs)
            out.push_back({{xv, yv}, xsign * ysign});
    return out;
}

} // namespace billiard
