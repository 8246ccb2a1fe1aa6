#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "billiard/analysis.hpp"
#include "billiard/classical.hpp"
#include "billiard/geometry.hpp"

namespace billiard {

using Complex = std::complex<double>;

struct EigenIndex {
    int n_x = 1;
    int n_y = 1;
};

/// E(n_x, n_y) = hbar^2 pi^2 (n_x^2 + n_y^2) / (2 m L^2).
double eigen_energy(const EigenIndex& idx, const BilliardConfig& cfg);

/// One Gaussian packet: normalization 1/(d sqrt(2 pi)), envelope
/// exp(-|x-x0|^2/(4 d^2)), plane-wave phase exp(i x.p0 / hbar). Reuses the
/// classical ensemble parameterization (Delta plays no role here).
/// `weight` is the coefficient the packet carries inside a superposition.
struct PacketSpec {
    GaussianEnsembleParams params;
    Complex weight{1.0, 0.0};
};

/// The bare packet amplitude at x (weight not applied). hbar sets the
/// plane-wave phase scale.
Complex packet_amplitude(const PacketSpec& spec, const Vec2& x, const BilliardConfig& cfg);

/// Weighted sum of packet amplitudes.
Complex superposition_amplitude(const std::vector<PacketSpec>& specs, const Vec2& x,
                                const BilliardConfig& cfg);

/// Raised when a projection cannot reach its truncation budget.
struct TruncationError : std::runtime_error {
    TruncationError(const std::string& msg, double achieved_, int suggested_n_max_)
        : std::runtime_error(msg), achieved(achieved_), suggested_n_max(suggested_n_max_) {}
    double achieved;
    int suggested_n_max;
};

/// Raised when a field is requested too close to a node of psi.
struct NodeError : std::runtime_error {
    NodeError(const std::string& msg, double density_)
        : std::runtime_error(msg), density(density_) {}
    double density; // |psi|^2 at the offending point
};

/// One separable component of a coefficient table: contributes
/// weight * ax[n_x-1] * ay[n_y-1] to c_{n_x,n_y}. Gaussian packets project
/// separably, so packet states carry these alongside the dense table and the
/// evaluators use them as an O(N) fast path.
struct SeparableTerm {
    Complex weight{1.0, 0.0};
    std::vector<Complex> ax;
    std::vector<Complex> ay;
};

struct ProjectionDiagnostics {
    double norm = 0.0;          // sum |c|^2 at construction
    double leak_estimate = 0.0; // Gaussian mass outside the box (analytic)
    bool leak_warning = false;
    int n_max = 0;
};

/// Truncated sine-eigenbasis coefficient table; the single source of
/// psi(x,t) and its derivatives. Coefficients are stored at time t_ref with
/// no global phase normalization; evaluation applies exp(-i E (t - t_ref)/hbar)
/// on the fly, so evolution is exactly unitary.
struct QuantumState {
    BilliardConfig cfg;
    int n_max = 0;                    // cutoff per axis
    double t_ref = 0.0;
    std::vector<Complex> coeffs;      // row-major, index (n_x-1)*n_max + (n_y-1)
    std::vector<SeparableTerm> factors; // empty unless the state is a packet sum
    double eps_trunc = 1e-8;          // declared truncation budget
    double node_eta = 0.0;            // |psi|^2 node threshold
    ProjectionDiagnostics diag;

    Complex coeff(int nx, int ny) const {
        return coeffs[static_cast<std::size_t>(nx - 1) * n_max + (ny - 1)];
    }
    double norm_sq() const;
};

struct ProjectOptions {
    int n_max = 0;                  // 0 = choose automatically
    double eps_trunc = 1e-8;        // basis-truncation budget (wall leak excluded)
    double energy_tail_budget = 1e-6; // outer-band energy weight vs <E>
    int quad_oversampling = 6;      // quadrature nodes per basis function >= 4
};

/// Expand a packet superposition on the sine eigenbasis. Per-axis
/// coefficients come from composite 16-point Gauss-Legendre quadrature with
/// at least quad_oversampling*n_max nodes per axis; the 2D table is their
/// outer product, so packet states keep an exact separable form.
///
/// In automatic mode n_max grows until the basis-truncation deficit is below
/// eps_trunc and the outer-band energy weight is below
/// energy_tail_budget * <E>. Wall-leaked mass (packets closer than ~4d to a
/// wall) is estimated analytically, excluded from the truncation deficit and
/// reported via diag.leak_warning.
QuantumState project(const std::vector<PacketSpec>& specs, const BilliardConfig& cfg,
                     const ProjectOptions& opt = {});

/// Expand an arbitrary amplitude function sampled by tensor Gauss-Legendre
/// quadrature (no separable fast path; intended for cross-checks and states
/// that are not packet superpositions).
QuantumState project_function(const std::function<Complex(const Vec2&)>& psi0, int n_max,
                              const BilliardConfig& cfg, int quad_oversampling = 6);

/// A single basis state (useful as an exactly known reference).
QuantumState make_eigenstate(int n_x, int n_y, const BilliardConfig& cfg);

/// Unitary phase evolution by dt: c -> c exp(-i E dt / hbar), t_ref += dt.
QuantumState evolve(const QuantumState& state, double dt);

struct PsiEval {
    Complex psi;
    Complex d_x, d_y;     // gradient
    Complex d_t;          // time derivative, = (i hbar / 2m) laplacian
    Complex d_xx, d_yy;   // second spatial derivatives (when requested)
};

/// psi, its first and second spatial derivatives and dpsi/dt at (x, t); all
/// sums share one pass over the retained coefficients (dpsi/dt is assembled
/// from the laplacian). Throws std::domain_error outside the closed box.
PsiEval evaluate_psi(const QuantumState& state, const Vec2& x, double t);

struct HydroFields {
    double R = 0.0; // probability density |psi|^2
    Vec2 v;         // guidance velocity (hbar/m) Im(grad psi / psi)
    Vec2 j;         // current density R v
    double Q = 0.0; // quantum potential -(hbar^2/2m) lap|psi| / |psi|
};

/// Hydrodynamic picture at a strictly interior point; throws NodeError
/// (carrying |psi|^2) when R falls below the state's node threshold.
HydroFields hydrodynamic_fields(const QuantumState& state, const Vec2& x, double t);

/// Policy-free variant for diagnostics: no node threshold, returns false
/// only outside the open box or exactly on a node.
bool try_hydrodynamic_fields(const QuantumState& state, const Vec2& x, double t,
                             HydroFields& out);

/// Non-throwing guidance-velocity evaluation for integrator hot loops.
/// Returns false at walls/outside or below the node threshold eta.
bool try_velocity(const QuantumState& state, const Vec2& x, double t, double eta,
                  Vec2& v_out, double& density_out);

/// |psi|^2 sampled on an nx-by-ny cell-centered grid over the box.
DensityGrid density_grid(const QuantumState& state, double t, int nx, int ny);

/// Boxed propagator via the method of images: the free kernel
///   K(x0,x,t) = m/(2 pi hbar t) exp(i m |x-x0|^2/(2 hbar t) - i pi/2)
/// summed over the mirror images of x with Dirichlet signs. On the real time
/// axis the image sum converges only distributionally (every image term has
/// the same modulus); im_eps > 0 evaluates at complex time t - i*im_eps,
/// where the sum converges absolutely. Throws std::domain_error for t <= 0.
Complex propagator_images(const Vec2& x0, const Vec2& x, double t, const BilliardConfig& cfg,
                          int k_max, double im_eps = 0.0);

/// Spectral representation of the same kernel,
/// sum_n psi_n(x0) psi_n(x) exp(-i E_n (t - i*im_eps)/hbar), truncated at
/// n_max per axis. Equal to propagator_images for im_eps > 0 once both sums
/// converge (dual theta-series of one kernel).
Complex spectral_kernel(const Vec2& x0, const Vec2& x, double t, const BilliardConfig& cfg,
                        int n_max, double im_eps = 0.0);

/// Per-axis image cutoff that bounds the neglected image terms of
/// propagator_images below `tail` at complex time t - i*im_eps.
int propagator_auto_kmax(double t, double im_eps, const BilliardConfig& cfg, double tail = 1e-16);

/// Basis cutoff bounding the neglected spectral terms below `tail`.
int spectral_auto_nmax(double im_eps, const BilliardConfig& cfg, double tail = 1e-16);

/// Free-packet probability density
///   |psi_ST|^2 = exp[-(2 m^2/(hbar^2 t^2/d^2 + 4 d^2 m^2)) |x0 - x + p0 t/m|^2]
///                / (pi hbar^2 t^2/(2 d^2 m^2) + 2 pi d^2),
/// exact for a free particle and for the boxed packet before wall contact;
/// coincides with classical_density_free when Delta = d/hbar.
double short_time_density(const Vec2& x, double t, const PacketSpec& spec,
                          const BilliardConfig& cfg);

/// Closed-form method-of-images evolution of a packet superposition: each
/// axis evolves the free 1D Gaussian analytically and sums it over signed
/// mirror images. Exact for the boxed state up to the (Gaussian-small)
/// initial tail outside the box; an independent oracle for the spectral path.
Complex packet_evolution_images(const std::vector<PacketSpec>& specs, const Vec2& x, double t,
                                const BilliardConfig& cfg, int k_max = -1);

struct QuantumMoments {
    double mean_x = 0, mean_x2 = 0, mean_y = 0, mean_y2 = 0;
    double mean_px = 0, mean_px2 = 0, mean_py = 0, mean_py2 = 0;
    double mean_E = 0;
};

/// Expectation values of X, X^2, P, P^2 per axis and of H, from the exact
/// sine-basis operator matrix elements (no spatial quadrature involved).
QuantumMoments quantum_moments(const QuantumState& state, double t);

} // namespace billiard
