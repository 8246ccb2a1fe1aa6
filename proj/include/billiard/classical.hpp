#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "billiard/analysis.hpp"
#include "billiard/geometry.hpp"
#include "billiard/vec2.hpp"

namespace billiard {

/// A phase-space point of the billiard flow.
struct ClassicalState {
    Vec2 x;      // position, inside the closed box
    Vec2 p;      // momentum
    double t = 0.0;
};

/// Parameters of the product-Gaussian phase-space density
///   rho_0(x,p) = pi^-2 exp[-(x-x0)^2/2d^2 - 2 Delta^2 (px-px0)^2] * (same in y),
/// shared verbatim with the quantum Gaussian packet (which reuses x0, p0, d).
/// Per axis: position variance d^2, momentum variance 1/(4 Delta^2).
struct GaussianEnsembleParams {
    Vec2 x0;
    Vec2 p0;
    double d = 0.5;
    double Delta = 0.5;

    void validate() const {
        if (!(d > 0.0) || !(Delta > 0.0))
            throw std::domain_error("GaussianEnsembleParams: d and Delta must be positive");
    }
};

/// Monte-Carlo representation of the Gaussian ensemble.
struct ClassicalEnsemble {
    std::vector<ClassicalState> samples;
    std::uint64_t seed = 0;
    GaussianEnsembleParams params;
};

/// Exact free flight + folding over an arbitrary time step: the unfolded
/// endpoint x + p*dt/m is folded back per axis and the momentum component
/// flips sign wherever the fold parity is odd. Kinetic energy is conserved
/// exactly; no sub-stepping is involved.
ClassicalState propagate_classical(const ClassicalState& s, double dt, const BilliardConfig& cfg);

/// Coprime orbit label (n_x, n_y) with p_x/p_y = n_y/n_x.
struct PoIndices {
    long n_x = 0;
    long n_y = 0;
};

/// Decide whether a momentum direction closes into a periodic orbit.
///
/// Runs the continued-fraction expansion of |p_x/p_y| and returns the first
/// convergent h/q with |ratio - h/q| <= tol*|ratio| as (n_x, n_y) = (q, h),
/// reduced and coprime; nullopt when no convergent with denominator
/// <= max_denominator matches. Axis-parallel momenta return (1,0) for
/// p_x = 0 and (0,1) for p_y = 0. Throws std::domain_error for p = 0.
std::optional<PoIndices> detect_periodic(const Vec2& p, double tol, long max_denominator);

/// Geometric orbit period L*sqrt(n_x^2+n_y^2)/|p| for the given indices.
/// With the coprime labels from detect_periodic this is half the phase-space
/// return time of a generic orbit; use return_period for the full return.
double po_period(long n_x, long n_y, const Vec2& p, const BilliardConfig& cfg);

/// First phase-space return time of the periodic orbit carrying momentum p:
/// one full traversal crosses each wall pair twice per coprime step, so this
/// equals 2*m*po_period(detect_periodic(p), p). Throws std::domain_error if
/// p is not periodic within (tol, max_denominator).
double return_period(const Vec2& p, const BilliardConfig& cfg,
                     double tol = 1e-12, long max_denominator = 1l << 31);

/// Draw n i.i.d. phase-space samples from the product Gaussian. Positions are
/// folded into the box (with the matching momentum sign flips), which is the
/// sampling counterpart of the folded configuration density. Deterministic
/// for a fixed seed.
ClassicalEnsemble sample_ensemble(const GaussianEnsembleParams& params, std::size_t n,
                                  std::uint64_t seed, const BilliardConfig& cfg);

/// Free-plane configuration density at time t: the momentum-integrated
/// Liouville evolution of the product Gaussian,
///   rho(x,t) = exp[-(2 m^2 Delta^2/(t^2+4 d^2 m^2 Delta^2)) * |x0 - x + p0 t/m|^2]
///              / (pi t^2/(2 Delta^2 m^2) + 2 pi d^2).
double classical_density_free(const Vec2& x, double t, const GaussianEnsembleParams& params,
                              const BilliardConfig& cfg);

/// Boxed configuration density: the free density summed over all mirror
/// images of x (every image weighted +1; densities add). k_max < 0 selects
/// the smallest per-axis cutoff whose neglected Gaussian tail mass is below
/// 1e-12 at the requested time.
double classical_density_boxed(const Vec2& x, double t, const GaussianEnsembleParams& params,
                               const BilliardConfig& cfg, int k_max = -1);

/// Per-axis image cutoff used by classical_density_boxed in automatic mode.
int boxed_density_auto_kmax(double t, const GaussianEnsembleParams& params,
                            const BilliardConfig& cfg);

/// Sigma of the free configuration density per axis at time t.
double classical_sigma(double t, const GaussianEnsembleParams& params, const BilliardConfig& cfg);

/// Propagate every sample to time t (one exact fold step each), bin the
/// positions on an nx-by-ny grid over the box and normalize to unit mass.
/// Accumulation runs in fixed sample order, so the result is independent of
/// threading. Throws std::domain_error for an empty ensemble.
DensityGrid ensemble_histogram(const ClassicalEnsemble& e, double t, int nx, int ny,
                               const BilliardConfig& cfg);

/// Vertex polyline of one full periodic-orbit traversal starting at s
/// (closed: first point repeated at the end). Vertices sit at the wall
/// bounces. Throws std::domain_error if the momentum is not periodic.
Polyline po_polyline(const ClassicalState& s, const BilliardConfig& cfg,
                     double tol = 1e-12, long max_denominator = 1l << 31);

} // namespace billiard
