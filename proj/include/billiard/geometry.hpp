#pragma once

#include <stdexcept>
#include <vector>

#include "billiard/vec2.hpp"

namespace billiard {

/// Physical arena shared by every module: a square box [0,L]^2 holding a
/// particle of mass m, with hbar setting the quantum action scale.
struct BilliardConfig {
    double L = 10.0;
    double m = 1.0;
    double hbar = 1.0;

    void validate() const {
        if (!(L > 0.0) || !(m > 0.0) || !(hbar > 0.0))
            throw std::domain_error("BilliardConfig: L, m, hbar must all be positive");
    }
};

/// Result of folding an unfolded coordinate back into [0, L].
/// `odd` is true when the fold corresponds to an odd number of wall
/// reflections, i.e. when the unfolded coordinate sits in an odd cell
/// [jL, (j+1)L) with j odd. Exact multiples of L land on the boundary and
/// take the parity of the cell being entered (floor convention).
struct FoldedPoint {
    double u = 0.0;
    bool odd = false;
};

/// Fold an unfolded free-motion coordinate into the box side [0, L].
///
/// The map is the 2L-periodic triangle wave  u -> L - |((u mod 2L) + 2L) mod 2L - L|,
/// which realizes specular reflection at u = 0 and u = L.
/// Throws std::domain_error for non-finite input or L <= 0.
FoldedPoint fold_coordinate(double u_unfolded, double L);

/// One mirror image of a source point together with its Dirichlet sign,
/// (-1)^(number of reflections that generate the image).
struct ImagePoint {
    Vec2 pos;
    int sign = 1; // +1 or -1
};

/// Enumerate the mirror images of a point x in [0,L]^2 in the unfolded plane.
///
/// Per axis and for each |j| <= k_max the images are 2jL + u (even type,
/// sign +1) and 2jL - u (odd type, sign -1); the 2D sign is the product of
/// the per-axis signs, consistent with eigenfunctions vanishing on the walls.
/// Enumeration order (fixed so cross-validation sums are reproducible
/// term-by-term): outer loop over y-axis entries, inner loop over x-axis
/// entries, each axis ordered j = -k_max..k_max with the even-type image
/// before the odd-type one. The returned list has (2*(2*k_max+1))^2 entries.
/// Throws std::domain_error if x lies outside the closed box or k_max < 0.
std::vector<ImagePoint> image_points(const Vec2& x, double L, int k_max);

/// Per-axis building block of image_points: images of a scalar coordinate,
/// in the documented order. Exposed because the classical folded density and
/// the image propagator both consume per-axis sums.
std::vector<std::pair<double, int>> axis_images(double u, double L, int k_max);

} // namespace billiard
