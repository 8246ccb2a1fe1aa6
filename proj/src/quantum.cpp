#include "billiard/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace billiard {

namespace {

constexpr double kPi = std::numbers::pi;

double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// sin(n pi u / L), cos(n pi u / L) for n = 1..N via angle-addition recurrence.
void build_trig(double u, double L, int n_max, std::vector<double>& s, std::vector<double>& c) {
    s.resize(n_max);
    c.resize(n_max);
    const double th = kPi * u / L;
    const double s1 = std::sin(th);
    const double c1 = std::cos(th);
    double sn = s1, cn = c1;
    for (int n = 0; n < n_max; ++n) {
        s[n] = sn;
        c[n] = cn;
        const double sn1 = sn * c1 + cn * s1;
        const double cn1 = cn * c1 - sn * s1;
        sn = sn1;
        cn = cn1;
    }
}

// exp(-i E1(n) dt / hbar) for n = 1..N; E1(n) ~ n^2, so the phase advances by
// the odd-number ladder: e^{-i th (n+1)^2} = e^{-i th n^2} e^{-i th (2n+1)}.
void build_phase(double dt, const BilliardConfig& cfg, int n_max, std::vector<Complex>& ph) {
    ph.resize(n_max);
    const double theta = cfg.hbar * kPi * kPi * dt / (2.0 * cfg.m * cfg.L * cfg.L);
    Complex cur = std::polar(1.0, -theta);
    Complex rot_odd = std::polar(1.0, -3.0 * theta);
    const Complex rot_step = std::polar(1.0, -2.0 * theta);
    for (int n = 0; n < n_max; ++n) {
        ph[n] = cur;
        cur *= rot_odd;
        rot_odd *= rot_step;
    }
}

struct Workspace {
    std::vector<double> sx, cx, sy, cy;
    std::vector<Complex> ph;
    std::vector<Complex> row_s, row_c, row_s2;
};

Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
}

bool in_closed_box(const Vec2& x, double L) {
    return x.x >= 0.0 && x.x <= L && x.y >= 0.0 && x.y <= L;
}

bool in_open_box(const Vec2& x, double L) {
    return x.x > 0.0 && x.x < L && x.y > 0.0 && x.y < L;
}

struct AxisSums {
    Complex f{};   // sum a ph sin
    Complex fp{};  // d/du
    Complex fpp{}; // d2/du2
};

// Per-axis sums for one separable term; norm sqrt(2/L) folded in.
AxisSums axis_sums(const std::vector<Complex>& a, const std::vector<Complex>& ph,
                   const std::vector<double>& s, const std::vector<double>& c, double L,
                   bool need_second) {
    AxisSums out;
    const int n_max = static_cast<int>(a.size());
    const double k1 = kPi / L;
    for (int n = 0; n < n_max; ++n) {
        const Complex A = a[n] * ph[n];
        const double k = k1 * (n + 1);
        out.f += A * s[n];
        out.fp += A * (k * c[n]);
        if (need_second) out.fpp -= A * (k * k * s[n]);
    }
    const double norm1 = std::sqrt(2.0 / L);
    out.f *= norm1;
    out.fp *= norm1;
    out.fpp *= norm1;
    return out;
}

PsiEval eval_core(const QuantumState& st, const Vec2& x, double t, bool need_second) {
    Workspace& ws = workspace();
    const double L = st.cfg.L;
    build_trig(x.x, L, st.n_max, ws.sx, ws.cx);
    build_trig(x.y, L, st.n_max, ws.sy, ws.cy);
    build_phase(t - st.t_ref, st.cfg, st.n_max, ws.ph);

    PsiEval out{};
    if (!st.factors.empty()) {
        for (const SeparableTerm& term : st.factors) {
            const AxisSums fx = axis_sums(term.ax, ws.ph, ws.sx, ws.cx, L, need_second);
            const AxisSums fy = axis_sums(term.ay, ws.ph, ws.sy, ws.cy, L, need_second);
            out.psi += term.weight * fx.f * fy.f;
            out.d_x += term.weight * fx.fp * fy.f;
            out.d_y += term.weight * fx.f * fy.fp;
            if (need_second) {
                out.d_xx += term.weight * fx.fpp * fy.f;
                out.d_yy += term.weight * fx.f * fy.fpp;
            }
        }
    } else {
        const int N = st.n_max;
        ws.row_s.assign(N, Complex{});
        ws.row_c.assign(N, Complex{});
        if (need_second) ws.row_s2.assign(N, Complex{});
        const double k1 = kPi / L;
        for (int nx = 0; nx < N; ++nx) {
            const Complex* row = st.coeffs.data() + static_cast<std::size_t>(nx) * N;
            Complex rs{}, rc{}, rs2{};
            for (int ny = 0; ny < N; ++ny) {
                const Complex A = row[ny] * ws.ph[ny];
                const double k = k1 * (ny + 1);
                rs += A * ws.sy[ny];
                rc += A * (k * ws.cy[ny]);
                if (need_second) rs2 -= A * (k * k * ws.sy[ny]);
            }
            ws.row_s[nx] = rs;
            ws.row_c[nx] = rc;
            if (need_second) ws.row_s2[nx] = rs2;
        }
        for (int nx = 0; nx < N; ++nx) {
            const Complex B = ws.ph[nx];
            const double k = k1 * (nx + 1);
            out.psi += B * ws.sx[nx] * ws.row_s[nx];
            out.d_x += B * (k * ws.cx[nx]) * ws.row_s[nx];
            out.d_y += B * ws.sx[nx] * ws.row_c[nx];
            if (need_second) {
                out.d_xx -= B * (k * k * ws.sx[nx]) * ws.row_s[nx];
                out.d_yy += B * ws.sx[nx] * ws.row_s2[nx];
            }
        }
        const double norm2 = 2.0 / L;
        out.psi *= norm2;
        out.d_x *= norm2;
        out.d_y *= norm2;
        out.d_xx *= norm2;
        out.d_yy *= norm2;
    }
    if (need_second) {
        // Free evolution inside the box: i hbar psi_t = -(hbar^2/2m) lap psi.
        out.d_t = Complex(0.0, st.cfg.hbar / (2.0 * st.cfg.m)) * (out.d_xx + out.d_yy);
    }
    return out;
}

} // namespace

double eigen_energy(const EigenIndex& idx, const BilliardConfig& cfg) {
    cfg.validate();
    if (idx.n_x < 1 || idx.n_y < 1)
        throw std::domain_error("eigen_energy: quantum numbers start at 1");
    const double nx = idx.n_x, ny = idx.n_y;
    return cfg.hbar * cfg.hbar * kPi * kPi * (nx * nx + ny * ny) / (2.0 * cfg.m * cfg.L * cfg.L);
}

Complex packet_amplitude(const PacketSpec& spec, const Vec2& x, const BilliardConfig& cfg) {
    const auto& p = spec.params;
    const double d = p.d;
    const double norm = 1.0 / (d * std::sqrt(2.0 * kPi));
    const double dx = x.x - p.x0.x;
    const double dy = x.y - p.x0.y;
    const double envelope = std::exp(-(dx * dx + dy * dy) / (4.0 * d * d));
    return norm * envelope * std::polar(1.0, (x.x * p.p0.x + x.y * p.p0.y) / cfg.hbar);
}

Complex superposition_amplitude(const std::vector<PacketSpec>& specs, const Vec2& x,
                                const BilliardConfig& cfg) {
    Complex acc{};
    for (const auto& s : specs) acc += s.weight * packet_amplitude(s, x, cfg);
    return acc;
}

double QuantumState::norm_sq() const {
    double acc = 0.0;
    for (const Complex& c : coeffs) acc += std::norm(c);
    return acc;
}

namespace {

void gauss_legendre(int n, std::vector<double>& xs, std::vector<double>& ws) {
    xs.resize(n);
    ws.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 64; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            const double step = p1 / dp;
            t -= step;
            if (std::fabs(step) < 1e-15) break;
        }
        {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
        }
        xs[i] = -t;
        xs[n - 1 - i] = t;
        ws[i] = ws[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

// Per-axis projection <chi_n | g> of the 1D Gaussian factor
// g(u) = (2 pi d^2)^{-1/4} exp(-(u-u0)^2/4d^2) exp(i p0 u / hbar).
std::vector<Complex> axis_packet_coeffs(double u0, double p0, double d, int n_max,
                                        const BilliardConfig& cfg, int oversampling) {
    const double L = cfg.L;
    const double lo = std::max(0.0, u0 - 13.0 * d);
    const double hi = std::min(L, u0 + 13.0 * d);
    const int panels = std::max({16, (oversampling * n_max + 15) / 16,
                                 static_cast<int>(std::ceil((hi - lo) / (0.5 * d)))});
    static thread_local std::vector<double> gl_x, gl_w;
    if (gl_x.size() != 16) gauss_legendre(16, gl_x, gl_w);

    const double amp = std::pow(2.0 * kPi * d * d, -0.25);
    std::vector<double> nodes, weights;
    nodes.reserve(static_cast<std::size_t>(panels) * 16);
    weights.reserve(nodes.capacity());
    const double h = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * h;
        for (int q = 0; q < 16; ++q) {
            nodes.push_back(a + 0.5 * h * (1.0 + gl_x[q]));
            weights.push_back(0.5 * h * gl_w[q]);
        }
    }
    std::vector<Complex> coeff(n_max, Complex{});
    const double norm1 = std::sqrt(2.0 / L);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double u = nodes[i];
        const double z = (u - u0) / (2.0 * d);
        const Complex g = amp * std::exp(-z * z) * std::polar(1.0, p0 * u / cfg.hbar);
        const Complex wg = weights[i] * g;
        const double th = kPi * u / L;
        const double s1 = std::sin(th), c1 = std::cos(th);
        double sn = s1, cn = c1;
        for (int n = 0; n < n_max; ++n) {
            coeff[n] += wg * sn;
            const double sn1 = sn * c1 + cn * s1;
            const double cn1 = cn * c1 - sn * s1;
            sn = sn1;
            cn = cn1;
        }
    }
    for (Complex& c : coeff) c *= norm1;
    return coeff;
}

// Mass of the packet superposition outside the box, from per-axis Gaussian
// tails of each |packet|^2 (interference between packets neglected).
double leak_estimate(const std::vector<PacketSpec>& specs, const BilliardConfig& cfg) {
    double acc = 0.0;
    for (const auto& s : specs) {
        const double w2 = std::norm(s.weight);
        const double d = s.params.d;
        acc += w2 * (upper_tail(s.params.x0.x / d) + upper_tail((cfg.L - s.params.x0.x) / d) +
                     upper_tail(s.params.x0.y / d) + upper_tail((cfg.L - s.params.x0.y) / d));
    }
    return acc;
}

// Exact continuum norm of the packet superposition (Gaussian overlaps in
// closed form; all packets share their own d).
double continuum_norm(const std::vector<PacketSpec>& specs, const BilliardConfig& cfg) {
    auto axis_overlap = [&](double u1, double p1, double u2, double p2, double d) {
        const double du = u2 - u1;
        const double dp = p2 - p1;
        const double mag = std::exp(-du * du / (8.0 * d * d)) *
                           std::exp(-dp * dp * d * d / (2.0 * cfg.hbar * cfg.hbar));
        return mag * std::polar(1.0, dp * 0.5 * (u1 + u2) / cfg.hbar);
    };
    double acc = 0.0;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        acc += std::norm(specs[k].weight);
        for (std::size_t l = k + 1; l < specs.size(); ++l) {
            const auto& a = specs[k].params;
            const auto& b = specs[l].params;
            const double d = 0.5 * (a.d + b.d);
            const Complex ov = axis_overlap(a.x0.x, a.p0.x, b.x0.x, b.p0.x, d) *
                               axis_overlap(a.x0.y, a.p0.y, b.x0.y, b.p0.y, d);
            acc += 2.0 * std::real(std::conj(specs[k].weight) * specs[l].weight * ov);
        }
    }
    return acc;
}

double estimate_node_eta(const QuantumState& st) {
    const DensityGrid g = density_grid(st, st.t_ref, 128, 128);
    double peak = 0.0;
    for (double v : g.values) peak = std::max(peak, v);
    return 1e-12 * peak;
}

QuantumState project_at(const std::vector<PacketSpec>& specs, const BilliardConfig& cfg,
                        int n_max, const ProjectOptions& opt) {
    QuantumState st;
    st.cfg = cfg;
    st.n_max = n_max;
    st.t_ref = 0.0;
    st.eps_trunc = opt.eps_trunc;
    st.coeffs.assign(static_cast<std::size_t>(n_max) * n_max, Complex{});
    for (const auto& spec : specs) {
        SeparableTerm term;
        term.weight = spec.weight;
        term.ax = axis_packet_coeffs(spec.params.x0.x, spec.params.p0.x, spec.params.d, n_max,
                                     cfg, opt.quad_oversampling);
        term.ay = axis_packet_coeffs(spec.params.x0.y, spec.params.p0.y, spec.params.d, n_max,
                                     cfg, opt.quad_oversampling);
        for (int nx = 0; nx < n_max; ++nx)
            for (int ny = 0; ny < n_max; ++ny)
                st.coeffs[static_cast<std::size_t>(nx) * n_max + ny] +=
                    term.weight * term.ax[nx] * term.ay[ny];
        st.factors.push_back(std::move(term));
    }
    return st;
}

} // namespace

QuantumState project(const std::vector<PacketSpec>& specs, const BilliardConfig& cfg,
                     const ProjectOptions& opt) {
    cfg.validate();
    if (specs.empty())
        throw std::domain_error("project: need at least one packet");
    for (const auto& s : specs) s.params.validate();
    if (opt.quad_oversampling < 4)
        throw std::domain_error("project: quad_oversampling must be >= 4");

    const double leak = leak_estimate(specs, cfg);
    const double target = continuum_norm(specs, cfg);

    const int candidates[] = {24, 32, 48, 64, 96, 128, 192, 256, 320, 384, 448, 512};
    std::vector<int> plan;
    if (opt.n_max > 0)
        plan.push_back(opt.n_max);
    else
        plan.assign(std::begin(candidates), std::end(candidates));

    double achieved = 0.0;
    for (int n : plan) {
        QuantumState st = project_at(specs, cfg, n, opt);
        const double norm = st.norm_sq();
        achieved = norm;
        const double basis_deficit = target - leak - norm;
        if (basis_deficit > opt.eps_trunc || norm > target + opt.eps_trunc) continue;

        // Outer-band energy weight: both the velocity field and dpsi/dt carry
        // extra powers of n, so the tail must be converged in energy, not
        // just in probability.
        const int band = std::max(2, n / 8);
        double tail_energy = 0.0, mean_energy = 0.0;
        for (int nx = 1; nx <= n; ++nx)
            for (int ny = 1; ny <= n; ++ny) {
                const double w = std::norm(st.coeff(nx, ny));
                const double e = eigen_energy({nx, ny}, cfg);
                mean_energy += w * e;
                if (nx > n - band || ny > n - band) tail_energy += w * e;
            }
        mean_energy /= norm;
        if (tail_energy > opt.energy_tail_budget * mean_energy) continue;

        st.diag.norm = norm;
        st.diag.leak_estimate = leak;
        st.diag.leak_warning = leak > 0.1 * opt.eps_trunc;
        st.diag.n_max = n;
        st.node_eta = estimate_node_eta(st);
        return st;
    }
    throw TruncationError(
        "project: truncation budget not reached (achieved sum|c|^2 = " + std::to_string(achieved) +
            ", target " + std::to_string(target - leak) + "); try a larger basis",
        achieved, plan.back() * 2);
}

QuantumState project_function(const std::function<Complex(const Vec2&)>& psi0, int n_max,
                              const BilliardConfig& cfg, int quad_oversampling) {
    cfg.validate();
    if (n_max < 1)
        throw std::domain_error("project_function: n_max must be >= 1");
    std::vector<double> gl_x, gl_w;
    gauss_legendre(16, gl_x, gl_w);
    const int panels = std::max(16, (quad_oversampling * n_max + 15) / 16);
    const double h = cfg.L / panels;
    std::vector<double> nodes, weights;
    for (int p = 0; p < panels; ++p)
        for (int q = 0; q < 16; ++q) {
            nodes.push_back(p * h + 0.5 * h * (1.0 + gl_x[q]));
            weights.push_back(0.5 * h * gl_w[q]);
        }
    const int M = static_cast<int>(nodes.size());
    const double norm1 = std::sqrt(2.0 / cfg.L);

    // T[a][j] = sum_i w_i chi_a(u_i) psi0(u_i, u_j); then contract over j.
    std::vector<std::vector<double>> chi(M, std::vector<double>(n_max));
    for (int i = 0; i < M; ++i) {
        std::vector<double> s, c;
        build_trig(nodes[i], cfg.L, n_max, s, c);
        for (int n = 0; n < n_max; ++n) chi[i][n] = norm1 * s[n];
    }
    std::vector<Complex> t_mat(static_cast<std::size_t>(n_max) * M, Complex{});
    for (int j = 0; j < M; ++j) {
        for (int i = 0; i < M; ++i) {
            const Complex f = weights[i] * psi0({nodes[i], nodes[j]});
            if (f == Complex{}) continue;
            for (int a = 0; a < n_max; ++a)
                t_mat[static_cast<std::size_t>(a) * M + j] += chi[i][a] * f;
        }
    }
    QuantumState st;
    st.cfg = cfg;
    st.n_max = n_max;
    st.coeffs.assign(static_cast<std::size_t>(n_max) * n_max, Complex{});
    for (int a = 0; a < n_max; ++a)
        for (int j = 0; j < M; ++j) {
            const Complex tv = weights[j] * t_mat[static_cast<std::size_t>(a) * M + j];
            for (int b = 0; b < n_max; ++b)
                st.coeffs[static_cast<std::size_t>(a) * n_max + b] += tv * chi[j][b];
        }
    st.diag.norm = st.norm_sq();
    st.diag.n_max = n_max;
    st.node_eta = estimate_node_eta(st);
    return st;
}

QuantumState make_eigenstate(int n_x, int n_y, const BilliardConfig& cfg) {
    cfg.validate();
    if (n_x < 1 || n_y < 1)
        throw std::domain_error("make_eigenstate: quantum numbers start at 1");
    QuantumState st;
    st.cfg = cfg;
    st.n_max = std::max(n_x, n_y);
    st.coeffs.assign(static_cast<std::size_t>(st.n_max) * st.n_max, Complex{});
    st.coeffs[static_cast<std::size_t>(n_x - 1) * st.n_max + (n_y - 1)] = 1.0;
    SeparableTerm term;
    term.weight = 1.0;
    term.ax.assign(st.n_max, Complex{});
    term.ay.assign(st.n_max, Complex{});
    term.ax[n_x - 1] = 1.0;
    term.ay[n_y - 1] = 1.0;
    st.factors.push_back(std::move(term));
    st.diag.norm = 1.0;
    st.diag.n_max = st.n_max;
    st.node_eta = estimate_node_eta(st);
    return st;
}

QuantumState evolve(const QuantumState& state, double dt) {
    QuantumState out = state;
    out.t_ref = state.t_ref + dt;
    const double scale = state.cfg.hbar * kPi * kPi / (2.0 * state.cfg.m * state.cfg.L * state.cfg.L);
    for (int nx = 1; nx <= state.n_max; ++nx)
        for (int ny = 1; ny <= state.n_max; ++ny)
            out.coeffs[static_cast<std::size_t>(nx - 1) * state.n_max + (ny - 1)] *=
                std::polar(1.0, -scale * (static_cast<double>(nx) * nx + static_cast<double>(ny) * ny) * dt);
    for (SeparableTerm& term : out.factors) {
        for (int n = 1; n <= state.n_max; ++n) {
            const Complex ph = std::polar(1.0, -scale * static_cast<double>(n) * n * dt);
            term.ax[n - 1] *= ph;
            term.ay[n - 1] *= ph;
        }
    }
    return out;
}

PsiEval evaluate_psi(const QuantumState& state, const Vec2& x, double t) {
    if (!in_closed_box(x, state.cfg.L))
        throw std::domain_error("evaluate_psi: point outside the closed box");
    return eval_core(state, x, t, true);
}

namespace {

HydroFields assemble_fields(const QuantumState& state, const PsiEval& e, double R) {
    HydroFields out;
    out.R = R;
    const double hbar_m = state.cfg.hbar / state.cfg.m;
    out.v = {hbar_m * std::imag(std::conj(e.psi) * e.d_x) / R,
             hbar_m * std::imag(std::conj(e.psi) * e.d_y) / R};
    out.j = out.v * R;

    // Q from |psi| = sqrt(R): compose analytic derivatives of Re/Im psi.
    const double A = std::sqrt(R);
    const double Ax = std::real(std::conj(e.psi) * e.d_x) / A;
    const double Ay = std::real(std::conj(e.psi) * e.d_y) / A;
    const double Axx = (std::norm(e.d_x) + std::real(std::conj(e.psi) * e.d_xx) - Ax * Ax) / A;
    const double Ayy = (std::norm(e.d_y) + std::real(std::conj(e.psi) * e.d_yy) - Ay * Ay) / A;
    out.Q = -state.cfg.hbar * state.cfg.hbar / (2.0 * state.cfg.m) * (Axx + Ayy) / A;
    return out;
}

} // namespace

HydroFields hydrodynamic_fields(const QuantumState& state, const Vec2& x, double t) {
    if (!in_open_box(x, state.cfg.L))
        throw std::domain_error("hydrodynamic_fields: point must be strictly interior");
    const PsiEval e = eval_core(state, x, t, true);
    const double R = std::norm(e.psi);
    if (R < state.node_eta)
        throw NodeError("hydrodynamic_fields: |psi|^2 below node threshold", R);
    return assemble_fields(state, e, R);
}

bool try_hydrodynamic_fields(const QuantumState& state, const Vec2& x, double t,
                             HydroFields& out) {
    if (!in_open_box(x, state.cfg.L)) return false;
    const PsiEval e = eval_core(state, x, t, true);
    const double R = std::norm(e.psi);
    if (!(R > 0.0)) return false;
    out = assemble_fields(state, e, R);
    return true;
}

bool try_velocity(const QuantumState& state, const Vec2& x, double t, double eta,
                  Vec2& v_out, double& density_out) {
    if (!in_open_box(x, state.cfg.L)) return false;
    const PsiEval e = eval_core(state, x, t, false);
    const double R = std::norm(e.psi);
    density_out = R;
    if (R < eta) return false;
    const double hbar_m = state.cfg.hbar / state.cfg.m;
    v_out = {hbar_m * std::imag(std::conj(e.psi) * e.d_x) / R,
             hbar_m * std::imag(std::conj(e.psi) * e.d_y) / R};
    return true;
}

DensityGrid density_grid(const QuantumState& state, double t, int nx, int ny) {
    if (nx < 2 || ny < 2)
        throw std::domain_error("density_grid: need nx, ny >= 2");
    DensityGrid g;
    g.nx = nx;
    g.ny = ny;
    g.x0 = 0.0;
    g.y0 = 0.0;
    g.x1 = state.cfg.L;
    g.y1 = state.cfg.L;
    g.values.assign(static_cast<std::size_t>(nx) * ny, 0.0);

    const int N = state.n_max;
    const double L = state.cfg.L;
    std::vector<Complex> ph;
    build_phase(t - state.t_ref, state.cfg, N, ph);
    const double norm1 = std::sqrt(2.0 / L);

    auto axis_profiles = [&](const std::vector<Complex>& a, int cells, double cell_size) {
        std::vector<Complex> prof(cells, Complex{});
        std::vector<double> s, c;
        for (int i = 0; i < cells; ++i) {
            const double u = (i + 0.5) * cell_size;
            build_trig(u, L, N, s, c);
            Complex acc{};
            for (int n = 0; n < N; ++n) acc += a[n] * ph[n] * s[n];
            prof[i] = acc * norm1;
        }
        return prof;
    };

    if (!state.factors.empty()) {
        std::vector<std::vector<Complex>> fx, fy;
        for (const SeparableTerm& term : state.factors) {
            fx.push_back(axis_profiles(term.ax, nx, g.cell_w()));
            fy.push_back(axis_profiles(term.ay, ny, g.cell_h()));
        }
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                Complex psi{};
                for (std::size_t k = 0; k < state.factors.size(); ++k)
                    psi += state.factors[k].weight * fx[k][ix] * fy[k][iy];
                g.at(ix, iy) = std::norm(psi);
            }
    } else {
        // Dense path: psi(grid) = Sx * C * Sy^T with phases folded into C.
        std::vector<Complex> cph(state.coeffs);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b)
                cph[static_cast<std::size_t>(a) * N + b] *= ph[a] * ph[b];
        std::vector<double> s, c;
        std::vector<std::vector<double>> sx(nx), sy(ny);
        for (int i = 0; i < nx; ++i) {
            build_trig((i + 0.5) * g.cell_w(), L, N, s, c);
            sx[i] = s;
        }
        for (int j = 0; j < ny; ++j) {
            build_trig((j + 0.5) * g.cell_h(), L, N, s, c);
            sy[j] = s;
        }
        std::vector<Complex> row(N);
        for (int i = 0; i < nx; ++i) {
            std::fill(row.begin(), row.end(), Complex{});
            for (int a = 0; a < N; ++a) {
                const double sxa = sx[i][a];
                const Complex* crow = cph.data() + static_cast<std::size_t>(a) * N;
                for (int b = 0; b < N; ++b) row[b] += sxa * crow[b];
            }
            for (int j = 0; j < ny; ++j) {
                Complex acc{};
                for (int b = 0; b < N; ++b) acc += row[b] * sy[j][b];
                g.at(i, j) = std::norm(acc * (2.0 / L));
            }
        }
    }
    g.recompute_mass();
    return g;
}

int propagator_auto_kmax(double t, double im_eps, const BilliardConfig& cfg, double tail) {
    if (!(im_eps > 0.0))
        throw std::domain_error("propagator_auto_kmax: needs im_eps > 0");
    const double lg = std::log(1.0 / tail);
    const double reach =
        std::sqrt(2.0 * cfg.hbar * (t * t + im_eps * im_eps) * lg / (cfg.m * im_eps));
    return static_cast<int>(std::ceil((reach + 2.0 * cfg.L) / (2.0 * cfg.L)));
}

int spectral_auto_nmax(double im_eps, const BilliardConfig& cfg, double tail) {
    if (!(im_eps > 0.0))
        throw std::domain_error("spectral_auto_nmax: needs im_eps > 0");
    const double lg = std::log(1.0 / tail);
    return static_cast<int>(
        std::ceil(std::sqrt(2.0 * cfg.m * cfg.L * cfg.L * lg / (cfg.hbar * kPi * kPi * im_eps))));
}

Complex propagator_images(const Vec2& x0, const Vec2& x, double t, const BilliardConfig& cfg,
                          int k_max, double im_eps) {
    cfg.validate();
    if (!(t > 0.0))
        throw std::domain_error("propagator_images: t must be positive");
    if (!in_closed_box(x0, cfg.L) || !in_closed_box(x, cfg.L))
        throw std::domain_error("propagator_images: points must lie in the closed box");
    if (k_max < 0) k_max = propagator_auto_kmax(t, im_eps, cfg);

    const Complex tau(t, -im_eps);
    const Complex gauss = Complex(0.0, 1.0) * cfg.m / (2.0 * cfg.hbar * tau);
    auto axis = [&](double a, double b) {
        Complex acc{};
        for (int j = -k_max; j <= k_max; ++j) {
            const double be = 2.0 * j * cfg.L + b - a;
            const double bo = 2.0 * j * cfg.L - b - a;
            acc += std::exp(gauss * (be * be)) - std::exp(gauss * (bo * bo));
        }
        return acc;
    };
    const Complex prefactor =
        cfg.m / (2.0 * kPi * cfg.hbar * tau) * std::polar(1.0, -kPi / 2.0);
    return prefactor * axis(x0.x, x.x) * axis(x0.y, x.y);
}

Complex spectral_kernel(const Vec2& x0, const Vec2& x, double t, const BilliardConfig& cfg,
                        int n_max, double im_eps) {
    cfg.validate();
    if (n_max < 1)
        throw std::domain_error("spectral_kernel: n_max must be >= 1");
    const Complex mitau = Complex(0.0, -1.0) * Complex(t, -im_eps) / cfg.hbar;
    auto axis = [&](double a, double b) {
        Complex acc{};
        for (int n = 1; n <= n_max; ++n) {
            const double e1 = cfg.hbar * cfg.hbar * kPi * kPi * n * n /
                              (2.0 * cfg.m * cfg.L * cfg.L);
            acc += std::sin(n * kPi * a / cfg.L) * std::sin(n * kPi * b / cfg.L) *
                   std::exp(mitau * e1);
        }
        return acc * (2.0 / cfg.L);
    };
    return axis(x0.x, x.x) * axis(x0.y, x.y);
}

double short_time_density(const Vec2& x, double t, const PacketSpec& spec,
                          const BilliardConfig& cfg) {
    const auto& p = spec.params;
    const double m = cfg.m;
    const double d2 = p.d * p.d;
    const double h2 = cfg.hbar * cfg.hbar;
    const double denom = kPi * h2 * t * t / (2.0 * d2 * m * m) + 2.0 * kPi * d2;
    const double ax = p.x0.x - x.x + p.p0.x * t / m;
    const double ay = p.x0.y - x.y + p.p0.y * t / m;
    const double coeff = 2.0 * m * m / (h2 * t * t / d2 + 4.0 * d2 * m * m);
    return std::exp(-coeff * (ax * ax + ay * ay)) / denom;
}

Complex packet_evolution_images(const std::vector<PacketSpec>& specs, const Vec2& x, double t,
                                const BilliardConfig& cfg, int k_max) {
    cfg.validate();
    if (!in_closed_box(x, cfg.L))
        throw std::domain_error("packet_evolution_images: point outside the closed box");
    Complex acc{};
    for (const auto& spec : specs) {
        const auto& p = spec.params;
        const double d = p.d;
        const Complex beta(1.0, cfg.hbar * t / (2.0 * cfg.m * d * d));
        const double sigma_t = d * std::abs(beta);
        const Complex amp = std::pow(2.0 * kPi * d * d, -0.25) / std::sqrt(beta);
        auto axis = [&](double u, double u0, double p0) {
            const double center = u0 + p0 * t / cfg.m;
            int K = k_max;
            if (K < 0)
                K = static_cast<int>(
                    std::ceil((std::fabs(center) + 10.0 * sigma_t + cfg.L) / (2.0 * cfg.L)));
            const Complex spread = 1.0 / (4.0 * d * d * beta);
            const double phase_v = p0 / cfg.hbar;
            const double phase_t = -p0 * p0 * t / (2.0 * cfg.m * cfg.hbar);
            auto g = [&](double uu) {
                const double dev = uu - center;
                return amp * std::exp(-spread * (dev * dev)) *
                       std::polar(1.0, phase_v * uu + phase_t);
            };
            Complex s{};
            for (int j = -K; j <= K; ++j)
                s += g(2.0 * j * cfg.L + u) - g(2.0 * j * cfg.L - u);
            return s;
        };
        acc += spec.weight * axis(x.x, p.x0.x, p.p0.x) * axis(x.y, p.x0.y, p.p0.y);
    }
    return acc;
}

QuantumMoments quantum_moments(const QuantumState& state, double t) {
    const int N = state.n_max;
    const double L = state.cfg.L;
    const double hbar = state.cfg.hbar;

    std::vector<Complex> cph(state.coeffs);
    {
        std::vector<Complex> ph;
        build_phase(t - state.t_ref, state.cfg, N, ph);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b)
                cph[static_cast<std::size_t>(a) * N + b] *= ph[a] * ph[b];
    }

    // 1D operator matrix elements in the sine basis (indices are quantum
    // numbers a, b >= 1):
    //   <a|x|b>  : L/2 on the diagonal; (2L/pi^2)[1/(a+b)^2 - 1/(a-b)^2] for odd a+b
    //   <a|x^2|b>: L^2(1/3 - 1/(2 pi^2 a^2)) diagonal;
    //              (2L^2/pi^2)(-1)^{a+b}[1/(a-b)^2 - 1/(a+b)^2] off-diagonal
    //   <a|p|b>  : -i hbar (4ab/L)/(a^2-b^2) for odd a+b, else 0
    //   <a|p^2|b>: (hbar pi a / L)^2 diagonal
    auto x_el = [&](int a, int b) -> double {
        if (a == b) return 0.5 * L;
        if (((a + b) & 1) == 0) return 0.0;
        const double ap = a + b, am = a - b;
        return 2.0 * L / (kPi * kPi) * (1.0 / (ap * ap) - 1.0 / (am * am));
    };
    auto x2_el = [&](int a, int b) -> double {
        if (a == b) return L * L * (1.0 / 3.0 - 1.0 / (2.0 * kPi * kPi * a * a));
        const double ap = a + b, am = a - b;
        const double sign = ((a + b) & 1) ? -1.0 : 1.0;
        return 2.0 * L * L / (kPi * kPi) * sign * (1.0 / (am * am) - 1.0 / (ap * ap));
    };
    auto p_el = [&](int a, int b) -> Complex {
        if (((a + b) & 1) == 0) return {};
        return Complex(0.0, -hbar * 4.0 * a * b / (L * (static_cast<double>(a) * a - static_cast<double>(b) * b)));
    };

    // Reduced one-axis Gram matrices G[a][b] = sum_c conj(C[a,c]) C[b,c] (x axis)
    // and the transposed version for the y axis.
    std::vector<Complex> gx(static_cast<std::size_t>(N) * N), gy(gx.size());
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            Complex sx{}, sy{};
            for (int k = 0; k < N; ++k) {
                sx += std::conj(cph[static_cast<std::size_t>(a) * N + k]) *
                      cph[static_cast<std::size_t>(b) * N + k];
                sy += std::conj(cph[static_cast<std::size_t>(k) * N + a]) *
                      cph[static_cast<std::size_t>(k) * N + b];
            }
            gx[static_cast<std::size_t>(a) * N + b] = sx;
            gy[static_cast<std::size_t>(a) * N + b] = sy;
        }

    QuantumMoments out;
    double norm = 0.0;
    for (int a = 0; a < N; ++a) norm += std::real(gx[static_cast<std::size_t>(a) * N + a]);

    double e_acc = 0.0;
    for (int a = 1; a <= N; ++a) {
        const double kx = hbar * kPi * a / L;
        out.mean_px2 += std::real(gx[static_cast<std::size_t>(a - 1) * N + (a - 1)]) * kx * kx;
        out.mean_py2 += std::real(gy[static_cast<std::size_t>(a - 1) * N + (a - 1)]) * kx * kx;
    }
    for (int a = 1; a <= N; ++a)
        for (int b = 1; b <= N; ++b) {
            const Complex gxa = gx[static_cast<std::size_t>(a - 1) * N + (b - 1)];
            const Complex gya = gy[static_cast<std::size_t>(a - 1) * N + (b - 1)];
            const double xe = x_el(a, b);
            const double x2e = x2_el(a, b);
            if (xe != 0.0) {
                out.mean_x += std::real(gxa) * xe;
                out.mean_y += std::real(gya) * xe;
            }
            if (x2e != 0.0) {
                out.mean_x2 += std::real(gxa) * x2e;
                out.mean_y2 += std::real(gya) * x2e;
            }
            const Complex pe = p_el(a, b);
            if (pe != Complex{}) {
                out.mean_px += std::real(gxa * pe);
                out.mean_py += std::real(gya * pe);
            }
        }
    e_acc = (out.mean_px2 + out.mean_py2) / (2.0 * state.cfg.m);
    out.mean_E = e_acc;
    const double inv = 1.0 / norm;
    out.mean_x *= inv;
    out.mean_x2 *= inv;
    out.mean_y *= inv;
    out.mean_y2 *= inv;
    out.mean_px *= inv;
    out.mean_px2 *= inv;
    out.mean_py *= inv;
    out.mean_py2 *= inv;
    out.mean_E *= inv;
    return out;
}

} // namespace billiard
