#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "billiard/quantum.hpp"

using namespace billiard;

namespace {

const BilliardConfig box{10.0, 1.0, 1.0};

PacketSpec preset_packet() {
    PacketSpec s;
    s.params.x0 = {2.5, 2.5};
    s.params.p0 = {4.0, 8.0};
    s.params.d = 0.5;
    s.params.Delta = 0.5;
    s.weight = 1.0;
    return s;
}

PacketSpec deep_packet() {
    PacketSpec s;
    s.params.x0 = {5.0, 5.0};
    s.params.p0 = {4.0, 8.0};
    s.params.d = 0.25;
    s.params.Delta = 0.25;
    s.weight = 1.0;
    return s;
}

QuantumState preset_state() {
    ProjectOptions opt;
    opt.eps_trunc = 1e-6; // wall clearance is 5d; the leak estimate absorbs the rest
    return project({preset_packet()}, box, opt);
}

} // namespace

TEST_CASE("eigen_energy basics") {
    CHECK(eigen_energy({1, 1}, box) ==
          doctest::Approx(std::numbers::pi * std::numbers::pi / 100.0));
    CHECK(eigen_energy({2, 1}, box) == doctest::Approx(eigen_energy({1, 2}, box)));
    BilliardConfig big = box;
    big.L = 20.0;
    CHECK(eigen_energy({3, 4}, big) == doctest::Approx(eigen_energy({3, 4}, box) / 4.0));
}

TEST_CASE("packet_amplitude: peak, normalization, momentum moments") {
    const PacketSpec spec = preset_packet();
    const double d = spec.params.d;
    CHECK(std::abs(packet_amplitude(spec, spec.params.x0, box)) ==
          doctest::Approx(1.0 / (d * std::sqrt(2.0 * std::numbers::pi))));

    // plane quadrature over a 16d window centered on the packet
    const int n = 600;
    const double half = 8.0;
    const double h = 2.0 * half / n;
    double mass = 0.0;
    Complex mom_x{}, mom2_x{};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Vec2 x{spec.params.x0.x - half + (i + 0.5) * h,
                         spec.params.x0.y - half + (j + 0.5) * h};
            const Complex a = packet_amplitude(spec, x, box);
            mass += std::norm(a);
            const double eps = 1e-5;
            const Complex ax_p = packet_amplitude(spec, {x.x + eps, x.y}, box);
            const Complex ax_m = packet_amplitude(spec, {x.x - eps, x.y}, box);
            const Complex dpsi = (ax_p - ax_m) / (2.0 * eps);
            const Complex d2psi = (ax_p - 2.0 * a + ax_m) / (eps * eps);
            mom_x += std::conj(a) * Complex(0.0, -box.hbar) * dpsi;
            mom2_x += std::conj(a) * (-box.hbar * box.hbar) * d2psi;
        }
    mass *= h * h;
    mom_x *= h * h;
    mom2_x *= h * h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::real(mom_x) == doctest::Approx(spec.params.p0.x).epsilon(1e-6));
    const double expect_p2 =
        spec.params.p0.x * spec.params.p0.x + box.hbar * box.hbar / (4.0 * d * d);
    CHECK(std::real(mom2_x) == doctest::Approx(expect_p2).epsilon(1e-6));
}

TEST_CASE("project_function recovers a pure eigenstate") {
    auto psi23 = [&](const Vec2& x) {
        return Complex(2.0 / box.L * std::sin(2.0 * std::numbers::pi * x.x / box.L) *
                           std::sin(3.0 * std::numbers::pi * x.y / box.L),
                       0.0);
    };
    const QuantumState st = project_function(psi23, 8, box);
    for (int nx = 1; nx <= 8; ++nx)
        for (int ny = 1; ny <= 8; ++ny) {
            const double expect = (nx == 2 && ny == 3) ? 1.0 : 0.0;
            CHECK(std::abs(st.coeff(nx, ny) - expect) < 1e-12);
        }
}

TEST_CASE("project: preset packet meets its truncation budget") {
    const QuantumState st = preset_state();
    CHECK(st.diag.norm >= 1.0 - 1e-6 - st.diag.leak_estimate);
    CHECK(st.diag.norm <= 1.0 + 1e-8);
    CHECK(st.diag.leak_estimate > 1e-8); // 5-sigma wall clearance leaks a little
    CHECK(st.diag.leak_estimate < 1e-5);
    CHECK(st.n_max >= 32);
    CHECK(!st.factors.empty());

    // doubling the basis leaves converged coefficients unchanged
    ProjectOptions opt;
    opt.eps_trunc = 1e-6;
    opt.n_max = st.n_max;
    const QuantumState again = project({preset_packet()}, box, opt);
    ProjectOptions opt2 = opt;
    opt2.n_max = 2 * st.n_max;
    const QuantumState doubled = project({preset_packet()}, box, opt2);
    for (int nx = 1; nx <= 8; ++nx)
        for (int ny = 1; ny <= 8; ++ny)
            CHECK(std::abs(again.coeff(nx * 3, ny * 3) - doubled.coeff(nx * 3, ny * 3)) < 1e-12);

    // an impossible budget reports achieved norm and a suggestion
    ProjectOptions bad;
    bad.n_max = 6;
    bad.eps_trunc = 1e-10;
    CHECK_THROWS_AS(project({preset_packet()}, box, bad), TruncationError);
}

TEST_CASE("factor fast path agrees with the dense table") {
    QuantumState st = preset_state();
    QuantumState dense = st;
    dense.factors.clear();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.05, 9.95);
    for (int i = 0; i < 40; ++i) {
        const Vec2 x{u(gen), u(gen)};
        const double t = 0.37 * i;
        const PsiEval a = evaluate_psi(st, x, t);
        const PsiEval b = evaluate_psi(dense, x, t);
        // floor the scale at a fraction of the packet peak: where psi is
        // essentially zero both paths return roundoff-sized junk
        const double scale =
            std::abs(b.psi) + std::abs(b.d_x) + std::abs(b.d_y) + 1e-4;
        CHECK(std::abs(a.psi - b.psi) < 1e-11 * scale);
        CHECK(std::abs(a.d_x - b.d_x) < 1e-10 * scale);
        CHECK(std::abs(a.d_y - b.d_y) < 1e-10 * scale);
        CHECK(std::abs(a.d_t - b.d_t) < 1e-8 * scale);
    }
}

TEST_CASE("evolve: identity, unitarity, group property") {
    const QuantumState st = preset_state();
    const double n0 = st.norm_sq();

    const QuantumState same = evolve(st, 0.0);
    for (int k = 0; k < 5; ++k)
        CHECK(same.coeffs[100 + k] == st.coeffs[100 + k]);

    const QuantumState later = evolve(st, 3.21);
    CHECK(later.norm_sq() == doctest::Approx(n0).epsilon(1e-14));

    const QuantumState two_step = evolve(evolve(st, 1.25), 2.75);
    const QuantumState one_step = evolve(st, 4.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < st.coeffs.size(); ++i)
        worst = std::max(worst, std::abs(two_step.coeffs[i] - one_step.coeffs[i]));
    CHECK(worst < 1e-12);

    // eval at t equals eval of evolved state at its own t_ref
    const Vec2 probe{3.3, 4.4};
    const PsiEval direct = evaluate_psi(st, probe, 4.0);
    const PsiEval stepped = evaluate_psi(one_step, probe, 4.0);
    CHECK(std::abs(direct.psi - stepped.psi) < 1e-12);
}

TEST_CASE("evaluate_psi: Dirichlet walls and eigenstate values") {
    const QuantumState st = preset_state();
    for (double t : {0.0, 5.0, 25.0, 125.0}) {
        for (double s : {0.0, 2.5, 7.7}) {
            CHECK(std::abs(evaluate_psi(st, {0.0, s}, t).psi) < 1e-10);
            CHECK(std::abs(evaluate_psi(st, {box.L, s}, t).psi) < 1e-10);
            CHECK(std::abs(evaluate_psi(st, {s, 0.0}, t).psi) < 1e-10);
            CHECK(std::abs(evaluate_psi(st, {s, box.L}, t).psi) < 1e-10);
        }
    }
    CHECK_THROWS_AS(evaluate_psi(st, {-0.1, 5.0}, 0.0), std::domain_error);

    const QuantumState ground = make_eigenstate(1, 1, box);
    const PsiEval c = evaluate_psi(ground, {5.0, 5.0}, 0.0);
    CHECK(std::real(c.psi) == doctest::Approx(2.0 / box.L));
    CHECK(std::abs(c.d_x) < 1e-14);
    CHECK(std::abs(c.d_y) < 1e-14);
}

TEST_CASE("finite-difference oracle for grad psi and dpsi/dt") {
    const QuantumState st = preset_state();
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.5, 9.5), tt(0.0, 10.0);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
        const Vec2 x{u(gen), u(gen)};
        const double t = tt(gen);
        const PsiEval e = evaluate_psi(st, x, t);
        const Complex fd_x = (evaluate_psi(st, {x.x + h, x.y}, t).psi -
                              evaluate_psi(st, {x.x - h, x.y}, t).psi) /
                             (2.0 * h);
        const Complex fd_y = (evaluate_psi(st, {x.x, x.y + h}, t).psi -
                              evaluate_psi(st, {x.x, x.y - h}, t).psi) /
                             (2.0 * h);
        const Complex fd_t =
            (evaluate_psi(st, x, t + h).psi - evaluate_psi(st, x, t - h).psi) / (2.0 * h);
        const double scale = std::abs(e.d_x) + std::abs(e.d_y) + std::abs(e.d_t) + 1e-12;
        CHECK(std::abs(fd_x - e.d_x) < 1e-6 * scale);
        CHECK(std::abs(fd_y - e.d_y) < 1e-6 * scale);
        CHECK(std::abs(fd_t - e.d_t) < 1e-6 * scale);
    }
}

TEST_CASE("image propagator: free limit, wall zeros, spectral equivalence") {
    const double t_scale =
        box.m * box.L * box.L / (box.hbar * std::numbers::pi * std::numbers::pi);

    SUBCASE("deep interior, short time: the direct term dominates") {
        // image terms carry exp(-m D^2 eps / (2 hbar (t^2+eps^2))) with
        // D ~ L here; these parameters push that below 1e-100
        const double t = 0.002 * t_scale;
        const double eps = 0.2 * t;
        const Vec2 a{4.8, 5.1}, b{5.2, 4.9};
        const Complex boxed = propagator_images(a, b, t, box, -1, eps);
        const Complex tau(t, -eps);
        const Complex free_k = box.m / (2.0 * std::numbers::pi * box.hbar * tau) *
                               std::polar(1.0, -std::numbers::pi / 2.0) *
                               std::exp(Complex(0.0, 1.0) * box.m * (b - a).norm_sq() /
                                        (2.0 * box.hbar * tau));
        CHECK(std::abs(boxed - free_k) < 1e-12 * std::abs(free_k));
    }

    SUBCASE("target on a wall: exact image cancellation") {
        const Complex k_wall = propagator_images({3.0, 4.0}, {0.0, 6.0}, 1.0, box, 3, 0.05);
        CHECK(std::abs(k_wall) == 0.0);
    }

    SUBCASE("image sum equals spectral sum at complex time") {
        std::mt19937_64 gen(23);
        std::uniform_real_distribution<double> u(0.3, 9.7);
        for (double factor : {0.1, 1.0, 5.0}) {
            const double t = factor * t_scale;
            const double eps = 0.02 * t;
            const int kmax = propagator_auto_kmax(t, eps, box, 1e-18);
            const int nmax = spectral_auto_nmax(eps, box, 1e-18);
            for (int i = 0; i < 20; ++i) {
                const Vec2 a{u(gen), u(gen)}, b{u(gen), u(gen)};
                const Complex ki = propagator_images(a, b, t, box, kmax, eps);
                const Complex ks = spectral_kernel(a, b, t, box, nmax, eps);
                CHECK(std::abs(ki - ks) < 1e-6 * std::abs(ks));
            }
        }
    }

    CHECK_THROWS_AS(propagator_images({1, 1}, {2, 2}, 0.0, box, 1, 0.0), std::domain_error);
}

TEST_CASE("short-time density: peak, classical identity, spectral match") {
    const PacketSpec spec = preset_packet();
    CHECK(short_time_density(spec.params.x0, 0.0, spec, box) ==
          doctest::Approx(1.0 / (2.0 * std::numbers::pi * spec.params.d * spec.params.d)));

    // with hbar = 1 and Delta = d the classical free density is identical
    std::mt19937_64 gen(29);
    std::uniform_real_distribution<double> u(0.0, 10.0), tt(0.0, 12.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec2 x{u(gen), u(gen)};
        const double t = tt(gen);
        const double q = short_time_density(x, t, spec, box);
        const double c = classical_density_free(x, t, spec.params, box);
        CHECK(q == doctest::Approx(c).epsilon(1e-14));
    }

    // spectral |psi|^2 equals the free form before any wall contact
    const QuantumState st = preset_state();
    const double t_pre = 0.12; // center at (2.98, 3.46), sigma 0.56: walls untouched
    for (double t : {0.2 * t_pre, 0.4 * t_pre, 0.6 * t_pre, 0.8 * t_pre, t_pre}) {
        double worst = 0.0, peak = 0.0;
        const DensityGrid g = density_grid(st, t, 64, 64);
        for (int iy = 0; iy < 64; ++iy)
            for (int ix = 0; ix < 64; ++ix) {
                const double ref = short_time_density(g.cell_center(ix, iy), t, spec, box);
                peak = std::max(peak, ref);
                worst = std::max(worst, std::fabs(g.at(ix, iy) - ref));
            }
        CHECK(worst < 1e-3 * peak);
    }
}

TEST_CASE("closed-form image evolution matches spectral evolution (deep packet)") {
    ProjectOptions opt;
    opt.eps_trunc = 1e-8;
    const std::vector<PacketSpec> specs{deep_packet()};
    const QuantumState st = project(specs, box, opt);
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.2, 9.8);
    for (double t : {0.05, 0.4, 1.3, 2.7}) { // bounces matter from t ~ 0.6 on
        double worst = 0.0, peak = 0.0;
        for (int i = 0; i < 60; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const Complex spectral = evaluate_psi(st, x, t).psi;
            const Complex images = packet_evolution_images(specs, x, t, box);
            peak = std::max(peak, std::abs(images));
            worst = std::max(worst, std::abs(spectral - images));
        }
        CHECK(worst < 1e-6 * peak);
    }
}

TEST_CASE("hydrodynamic fields") {
    SUBCASE("stationary eigenstate: no current anywhere") {
        const QuantumState st = make_eigenstate(2, 3, box);
        std::mt19937_64 gen(37);
        std::uniform_real_distribution<double> u(0.3, 9.7);
        for (int i = 0; i < 30; ++i) {
            const Vec2 x{u(gen), u(gen)};
            if (std::norm(evaluate_psi(st, x, 0.7).psi) < 100 * st.node_eta) continue;
            const HydroFields f = hydrodynamic_fields(st, x, 0.7);
            CHECK(std::fabs(f.v.x) < 1e-10);
            CHECK(std::fabs(f.v.y) < 1e-10);
            CHECK(std::fabs(f.j.x) < 1e-10);
            CHECK(std::fabs(f.j.y) < 1e-10);
        }
    }

    SUBCASE("pre-bounce packet rides at p0/m") {
        const QuantumState st = preset_state();
        const PacketSpec spec = preset_packet();
        const double t = 0.05;
        const Vec2 center = spec.params.x0 + spec.params.p0 * (t / box.m);
        const HydroFields f = hydrodynamic_fields(st, center, t);
        CHECK(f.v.x == doctest::Approx(spec.params.p0.x / box.m).epsilon(1e-3));
        CHECK(f.v.y == doctest::Approx(spec.params.p0.y / box.m).epsilon(1e-3));
        CHECK(f.j.x == doctest::Approx(f.R * f.v.x));
    }

    SUBCASE("continuity equation residual, all derivatives analytic") {
        const QuantumState st = preset_state();
        const double T = 5.0;
        double max_R = 0.0;
        const DensityGrid g = density_grid(st, 0.0, 64, 64);
        for (double v : g.values) max_R = std::max(max_R, v);

        std::mt19937_64 gen(41);
        std::uniform_real_distribution<double> u(0.4, 9.6), tt(0.0, 5.0 * T);
        for (int i = 0; i < 100; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const double t = tt(gen);
            const PsiEval e = evaluate_psi(st, x, t);
            // dR/dt = 2 Re(conj(psi) psi_t); div(Rv) = (hbar/m) Im(conj(psi) lap psi)
            const double dR_dt = 2.0 * std::real(std::conj(e.psi) * e.d_t);
            const double div_j =
                box.hbar / box.m * std::imag(std::conj(e.psi) * (e.d_xx + e.d_yy));
            CHECK(std::fabs(dR_dt + div_j) < 1e-6 * max_R / T);
        }
    }

    SUBCASE("quantum Hamilton-Jacobi residual away from nodes") {
        const QuantumState st = preset_state();
        const QuantumMoments mom = quantum_moments(st, 0.0);
        const double e_scale = mom.mean_E;
        std::mt19937_64 gen(43);
        std::uniform_real_distribution<double> u(0.4, 9.6), tt(0.0, 25.0);
        int tested = 0;
        for (int i = 0; i < 400 && tested < 100; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const double t = tt(gen);
            const PsiEval e = evaluate_psi(st, x, t);
            const double R = std::norm(e.psi);
            if (R < 10.0 * st.node_eta) continue;
            ++tested;
            const HydroFields f = hydrodynamic_fields(st, x, t);
            const double dS_dt = box.hbar * std::imag(e.d_t / e.psi);
            const Vec2 gradS{box.hbar * std::imag(e.d_x / e.psi),
                             box.hbar * std::imag(e.d_y / e.psi)};
            const double residual = dS_dt + gradS.norm_sq() / (2.0 * box.m) + f.Q;
            CHECK(std::fabs(residual) < 1e-4 * e_scale);
        }
        CHECK(tested == 100);
    }

    SUBCASE("node threshold raises NodeError") {
        QuantumState st = preset_state();
        st.node_eta = 1e9;
        CHECK_THROWS_AS(hydrodynamic_fields(st, {5.0, 5.0}, 1.0), NodeError);
        CHECK_THROWS_AS(hydrodynamic_fields(st, {0.0, 5.0}, 0.0), std::domain_error);
    }
}

TEST_CASE("packet moments reproduce the Gaussian expectation values") {
    const QuantumState st = preset_state();
    const PacketSpec spec = preset_packet();
    const QuantumMoments m = quantum_moments(st, 0.0);
    const double d = spec.params.d;
    CHECK(m.mean_x == doctest::Approx(spec.params.x0.x).epsilon(1e-4));
    CHECK(m.mean_y == doctest::Approx(spec.params.x0.y).epsilon(1e-4));
    CHECK(m.mean_x2 ==
          doctest::Approx(spec.params.x0.x * spec.params.x0.x + d * d).epsilon(1e-4));
    CHECK(m.mean_y2 ==
          doctest::Approx(spec.params.x0.y * spec.params.x0.y + d * d).epsilon(1e-4));
    CHECK(m.mean_px == doctest::Approx(spec.params.p0.x).epsilon(1e-4));
    CHECK(m.mean_py == doctest::Approx(spec.params.p0.y).epsilon(1e-4));
    CHECK(m.mean_px2 ==
          doctest::Approx(spec.params.p0.x * spec.params.p0.x +
                          box.hbar * box.hbar / (4.0 * d * d))
              .epsilon(1e-4));
    CHECK(m.mean_py2 ==
          doctest::Approx(spec.params.p0.y * spec.params.p0.y +
                          box.hbar * box.hbar / (4.0 * d * d))
              .epsilon(1e-4));
}

TEST_CASE("smoothed quantum density tracks the classical folded density") {
    PacketSpec spec;
    spec.params.x0 = {7.5, 2.5};
    spec.params.p0 = {64.0, 128.0};
    spec.params.d = 0.25;
    spec.params.Delta = 0.25;
    const QuantumState st = project({spec}, box, {});
    const double T = return_period(spec.params.p0, box);

    // at T the packet is still localized, so smoothing broadens it; compare
    // like with like by smoothing both sides. At 5T the classical envelope is
    // box-scale and the raw comparison is fair.
    {
        const DensityGrid q = downsample(density_grid(st, T, 2048, 2048), 8);
        const DensityGrid cl = grid_from_field(
            [&](const Vec2& x) { return classical_density_boxed(x, T, spec.params, box); },
            256, 256, box);
        const double l1 = l1_distance(gaussian_smooth(q, spec.params.d),
                                      gaussian_smooth(cl, spec.params.d));
        CHECK(l1 < 0.05);
    }
    {
        const DensityGrid q = downsample(density_grid(st, 5.0 * T, 2048, 2048), 8);
        const DensityGrid cl = grid_from_field(
            [&](const Vec2& x) {
                return classical_density_boxed(x, 5.0 * T, spec.params, box);
            },
            256, 256, box);
        CHECK(l1_distance(gaussian_smooth(q, spec.params.d), cl) < 0.05);
    }
}

TEST_CASE("density_grid agrees with pointwise evaluation") {
    const QuantumState st = preset_state();
    const double t = 3.7;
    const DensityGrid g = density_grid(st, t, 32, 32);
    for (int iy = 0; iy < 32; iy += 5)
        for (int ix = 0; ix < 32; ix += 5) {
            const double ref = std::norm(evaluate_psi(st, g.cell_center(ix, iy), t).psi);
            CHECK(g.at(ix, iy) == doctest::Approx(ref).epsilon(1e-10));
        }

    // two-packet superposition uses the same machinery
    PacketSpec m_packet = preset_packet();
    PacketSpec n_packet = preset_packet();
    n_packet.params.x0 = {2.5, 7.5};
    m_packet.weight = 1.0 / std::numbers::sqrt2;
    n_packet.weight = -1.0 / std::numbers::sqrt2;
    ProjectOptions opt;
    opt.eps_trunc = 1e-5;
    const QuantumState two = project({m_packet, n_packet}, box, opt);
    CHECK(std::fabs(two.norm_sq() - 1.0) < 1e-5);
    const DensityGrid g2 = density_grid(two, 1.0, 24, 24);
    for (int iy = 0; iy < 24; iy += 7)
        for (int ix = 0; ix < 24; ix += 7) {
            const double ref = std::norm(evaluate_psi(two, g2.cell_center(ix, iy), 1.0).psi);
            CHECK(g2.at(ix, iy) == doctest::Approx(ref).epsilon(1e-10));
        }
}
