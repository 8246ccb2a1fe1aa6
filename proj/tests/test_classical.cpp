#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "billiard/classical.hpp"

using namespace billiard;

namespace {

const BilliardConfig box{10.0, 1.0, 1.0};

double phase_distance(const ClassicalState& a, const ClassicalState& b) {
    return (a.x - b.x).norm() + (a.p - b.p).norm();
}

// Brute-force first phase-space return: scan for candidate local minima of
// the phase distance, refine each by ternary search, accept the first that
// reaches ~zero depth.
double measured_return(const ClassicalState& s0, const BilliardConfig& cfg, double t_hint) {
    const int steps = 4000;
    const double t_max = 1.5 * t_hint;
    const double dt = t_max / steps;
    std::vector<double> d(steps + 1);
    for (int i = 0; i <= steps; ++i)
        d[i] = phase_distance(propagate_classical(s0, i * dt, cfg), s0);
    for (int i = 2; i < steps; ++i) {
        if (!(d[i] <= d[i - 1] && d[i] <= d[i + 1] && d[i] < 1.0)) continue;
        double lo = (i - 1) * dt, hi = (i + 1) * dt;
        for (int it = 0; it < 200; ++it) {
            const double m1 = lo + (hi - lo) / 3.0;
            const double m2 = hi - (hi - lo) / 3.0;
            if (phase_distance(propagate_classical(s0, m1, cfg), s0) <
                phase_distance(propagate_classical(s0, m2, cfg), s0))
                hi = m2;
            else
                lo = m1;
        }
        const double t_star = 0.5 * (lo + hi);
        if (phase_distance(propagate_classical(s0, t_star, cfg), s0) < 1e-9) return t_star;
    }
    REQUIRE(false);
    return -1.0;
}

} // namespace

TEST_CASE("free interior motion and single bounce") {
    ClassicalState s{{5.0, 5.0}, {1.0, 0.0}, 0.0};
    auto r = propagate_classical(s, 3.0, box);
    CHECK(r.x.x == doctest::Approx(8.0));
    CHECK(r.x.y == doctest::Approx(5.0));
    CHECK(r.p.x == doctest::Approx(1.0));

    r = propagate_classical(s, 7.0, box);
    CHECK(r.x.x == doctest::Approx(8.0)); // u = 12 folds to 8
    CHECK(r.p.x == doctest::Approx(-1.0));
    CHECK(r.p.y == doctest::Approx(0.0));
    CHECK(r.t == doctest::Approx(7.0));
}

TEST_CASE("energy conservation and reversibility") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> pos(0.0, 10.0), mom(-15.0, 15.0), dt(0.0, 50.0);
    for (int i = 0; i < 500; ++i) {
        ClassicalState s{{pos(gen), pos(gen)}, {mom(gen), mom(gen)}, 0.0};
        const double step = dt(gen);
        const auto r = propagate_classical(s, step, box);
        CHECK(r.p.norm() == doctest::Approx(s.p.norm()).epsilon(1e-15));
        CHECK(r.x.x >= 0.0);
        CHECK(r.x.x <= box.L);
        // run backwards: flip momentum, propagate, flip again
        ClassicalState back{r.x, -r.p, 0.0};
        auto b = propagate_classical(back, step, box);
        CHECK(b.x.x == doctest::Approx(s.x.x).epsilon(1e-10));
        CHECK(b.x.y == doctest::Approx(s.x.y).epsilon(1e-10));
        CHECK((-b.p).x == doctest::Approx(s.p.x).epsilon(1e-12));
        CHECK((-b.p).y == doctest::Approx(s.p.y).epsilon(1e-12));
    }
}

TEST_CASE("detect_periodic on rational and axis-parallel momenta") {
    auto po = detect_periodic({1.0, 2.0}, 1e-12, 1'000'000);
    REQUIRE(po.has_value());
    CHECK(po->n_x == 2);
    CHECK(po->n_y == 1);

    po = detect_periodic({1.0, 1.0}, 1e-12, 1'000'000);
    REQUIRE(po.has_value());
    CHECK(po->n_x == 1);
    CHECK(po->n_y == 1);

    po = detect_periodic({3.0, 0.0}, 1e-12, 1'000'000);
    REQUIRE(po.has_value());
    CHECK(po->n_x == 0);
    CHECK(po->n_y == 1);

    po = detect_periodic({0.0, -2.0}, 1e-12, 1'000'000);
    REQUIRE(po.has_value());
    CHECK(po->n_x == 1);
    CHECK(po->n_y == 0);

    CHECK_THROWS_AS(detect_periodic({0.0, 0.0}, 1e-12, 100), std::domain_error);
}

TEST_CASE("detect_periodic rejects the golden ratio at depth 1e6") {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    const auto po = detect_periodic({1.0, phi}, 1e-12, 1'000'000);
    CHECK_FALSE(po.has_value());
    // ...but a looser tolerance matches a Fibonacci convergent
    const auto loose = detect_periodic({1.0, phi}, 1e-9, 1'000'000);
    CHECK(loose.has_value());
}

TEST_CASE("po_period formula values") {
    CHECK(po_period(1, 1, {1.0, 1.0}, box) == doctest::Approx(10.0));
    CHECK(po_period(2, 1, {1.0, 2.0}, box) == doctest::Approx(10.0));
    // doubling |p| halves the period
    CHECK(po_period(2, 1, {2.0, 4.0}, box) ==
          doctest::Approx(0.5 * po_period(2, 1, {1.0, 2.0}, box)));
    CHECK_THROWS_AS(po_period(1, 1, {0.0, 0.0}, box), std::domain_error);
}

TEST_CASE("return_period is the measured first phase-space return") {
    SUBCASE("preset momentum (4,8)") {
        const Vec2 p{4.0, 8.0};
        const double T = return_period(p, box);
        CHECK(T == doctest::Approx(5.0));
        ClassicalState s{{2.5, 2.5}, p, 0.0};
        const auto r = propagate_classical(s, T, box);
        CHECK(phase_distance(r, s) < 1e-9 * box.L);
        CHECK(measured_return(s, box, T) == doctest::Approx(T).epsilon(1e-6));
    }
    SUBCASE("diagonal momentum") {
        const Vec2 p{3.0, 3.0};
        const double T = return_period(p, box);
        CHECK(T == doctest::Approx(2.0 * 10.0 / 3.0));
        ClassicalState s{{1.234, 6.789}, p, 0.0};
        CHECK(phase_distance(propagate_classical(s, T, box), s) < 1e-9 * box.L);
    }
    SUBCASE("mass enters through the velocity") {
        BilliardConfig heavy = box;
        heavy.m = 3.0;
        const Vec2 p{4.0, 8.0};
        const double T = return_period(p, heavy);
        CHECK(T == doctest::Approx(15.0));
        ClassicalState s{{2.5, 2.5}, p, 0.0};
        CHECK(phase_distance(propagate_classical(s, T, heavy), s) < 1e-9 * heavy.L);
    }
}

TEST_CASE("ensemble sampling reproduces the Gaussian moments") {
    GaussianEnsembleParams params;
    params.x0 = {5.0, 5.0};
    params.p0 = {4.0, 8.0};
    params.d = 0.5;
    params.Delta = 0.5;
    const std::size_t n = 1'000'000;
    const auto e = sample_ensemble(params, n, 1234, box);
    REQUIRE(e.samples.size() == n);

    double mx = 0, mpx = 0, vx = 0, vpx = 0;
    for (const auto& s : e.samples) {
        mx += s.x.x;
        mpx += s.p.x;
    }
    mx /= n;
    mpx /= n;
    for (const auto& s : e.samples) {
        vx += (s.x.x - mx) * (s.x.x - mx);
        vpx += (s.p.x - mpx) * (s.p.x - mpx);
    }
    vx /= n;
    vpx /= n;

    const double sigma_x = params.d;
    const double sigma_p = 1.0 / (2.0 * params.Delta);
    // five standard errors
    CHECK(std::fabs(mx - params.x0.x) < 5.0 * sigma_x / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(mpx - params.p0.x) < 5.0 * sigma_p / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(vx - sigma_x * sigma_x) <
          5.0 * sigma_x * sigma_x * std::sqrt(2.0 / static_cast<double>(n)));
    CHECK(std::fabs(vpx - sigma_p * sigma_p) <
          5.0 * sigma_p * sigma_p * std::sqrt(2.0 / static_cast<double>(n)));

    // determinism
    const auto e2 = sample_ensemble(params, 10, 1234, box);
    CHECK(e2.samples[7].x.x == e.samples[7].x.x);
    CHECK(e2.samples[7].p.y == e.samples[7].p.y);
}

TEST_CASE("variance product is width-independent with Delta = d") {
    for (double d : {0.25, 0.5, 1.0}) {
        const double vx = d * d;
        const double vpx = 1.0 / (4.0 * d * d);
        CHECK(vx * vpx == doctest::Approx(0.25));
    }
}

TEST_CASE("free density: peak, normalization, drift") {
    GaussianEnsembleParams params;
    params.x0 = {5.0, 5.0};
    params.p0 = {4.0, 8.0};
    params.d = 0.5;
    params.Delta = 0.5;

    CHECK(classical_density_free(params.x0, 0.0, params, box) ==
          doctest::Approx(1.0 / (2.0 * std::numbers::pi * params.d * params.d)));

    for (double t : {0.0, 1.0, 2.5}) {
        const Vec2 c = params.x0 + params.p0 * (t / box.m);
        const double sig = classical_sigma(t, params, box);
        const int n = 400;
        const double half = 10.0 * sig;
        const double h = 2.0 * half / n;
        double mass = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const Vec2 x{c.x - half + (i + 0.5) * h, c.y - half + (j + 0.5) * h};
                mass += classical_density_free(x, t, params, box);
            }
        mass *= h * h;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
        // peak rides the classical drift
        const double at_center = classical_density_free(c, t, params, box);
        CHECK(at_center >= classical_density_free(c + Vec2{0.3, 0.0}, t, params, box));
        CHECK(at_center >= classical_density_free(c - Vec2{0.0, 0.3}, t, params, box));
    }
}

TEST_CASE("boxed density: near-free early, normalized, uniform late") {
    GaussianEnsembleParams params;
    params.x0 = {5.0, 5.0};
    params.p0 = {4.0, 8.0};
    params.d = 0.5;
    params.Delta = 0.5;

    // packet far from the walls: folding is a no-op at t = 0
    const Vec2 probe{4.7, 5.2};
    const double free0 = classical_density_free(probe, 0.0, params, box);
    const double boxed0 = classical_density_boxed(probe, 0.0, params, box);
    CHECK(boxed0 == doctest::Approx(free0).epsilon(1e-12));

    const double T = return_period(params.p0, box);
    for (double t : {0.0, T, 5.0 * T}) {
        const int n = 256;
        double mass = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                mass += classical_density_boxed(
                    {(i + 0.5) * box.L / n, (j + 0.5) * box.L / n}, t, params, box);
        mass *= (box.L / n) * (box.L / n);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }

    // late-time flattening toward 1/L^2
    const double uniform = 1.0 / (box.L * box.L);
    double worst = 0.0;
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            const double v = classical_density_boxed(
                {(i + 0.5) * box.L / 64, (j + 0.5) * box.L / 64}, 100.0 * T, params, box);
            worst = std::max(worst, std::fabs(v - uniform) / uniform);
        }
    CHECK(worst < 0.02);
}

TEST_CASE("Monte-Carlo histogram converges to the folded density") {
    GaussianEnsembleParams params;
    params.x0 = {2.5, 2.5};
    params.p0 = {4.0, 8.0};
    params.d = 0.5;
    params.Delta = 0.5;
    const auto e = sample_ensemble(params, 1'000'000, 99, box);

    for (double t : {0.0, 5.0}) {
        const auto hist = ensemble_histogram(e, t, 20, 20, box);
        CHECK(hist.mass == doctest::Approx(1.0).epsilon(1e-12));
        const auto ref = grid_from_field_avg(
            [&](const Vec2& x) { return classical_density_boxed(x, t, params, box); }, 20, 20,
            box, 8);
        CHECK(l1_distance(hist, ref) < 0.02);
    }

    ClassicalEnsemble empty;
    CHECK_THROWS_AS(ensemble_histogram(empty, 0.0, 8, 8, box), std::domain_error);
}
