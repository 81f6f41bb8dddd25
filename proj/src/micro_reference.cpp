#include "dpflow/micro_reference.hpp"

#include "dpflow/error.hpp"
#include "dpflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace dpflow {

MicroGrid build_micro_grid(const CellGeometry& cell, double epsilon, double theta,
                           double fracture_porosity, MicroLayout layout)
{
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw ConfigError("epsilon must lie in (0, 1]");
    const double inv = 1.0 / epsilon;
    const auto count = static_cast<std::size_t>(std::llround(inv));
    if (std::abs(inv - static_cast<double>(count)) > 1e-9 * inv)
        throw ConfigError("1/epsilon must be an integer so that epsilon-cells tile Omega");
    if (cell.n < 8)
        throw ConfigError("micro resolution per epsilon-cell must be >= 8");
    if (!(theta >= 0.0))
        throw ConfigError("A.2: theta must be nonnegative");
    if (!(fracture_porosity > 0.0 && fracture_porosity < 1.0))
        throw ConfigError("A.1: fracture porosity out of (0,1)");
    if (layout == MicroLayout::strip && cell.dim != 2)
        throw ConfigError("strip layout needs a 2D cell");

    MicroGrid g;
    g.epsilon = 1.0 / static_cast<double>(count);
    g.theta = theta;
    g.per_cell = cell.n;
    g.layout = layout;
    g.matrix_scale = std::pow(g.epsilon, theta);
    const std::size_t r = cell.n;
    if (cell.dim == 1)
        g.grid = StructuredGrid::line(count * r, 1.0);
    else if (layout == MicroLayout::strip)
        g.grid = StructuredGrid::rect(count * r, r, 1.0, g.epsilon);
    else
        g.grid = StructuredGrid::rect(count * r, count * r, 1.0, 1.0);

    const std::size_t n = g.grid.cells();
    g.medium.resize(n);
    g.porosity.resize(n);
    g.perm_x.resize(n);
    g.perm_y.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        const auto [i, j] = g.grid.ij(c);
        const std::size_t local = cell.dim == 1 ? i % r : (i % r) + r * (j % r);
        const bool matrix = cell.matrix_mask[local] != 0;
        g.medium[c] = matrix ? Medium::matrix : Medium::fracture;
        const double scale = matrix ? g.matrix_scale : 1.0;
        g.porosity[c] = matrix ? cell.porosity_m[local] : fracture_porosity;
        g.perm_x[c] = cell.perm[local].xx * scale;
        g.perm_y[c] = cell.perm[local].yy * scale;
    }
    for (const auto& bf : g.grid.boundary_faces()) {
        const bool outer = layout != MicroLayout::strip || bf.side == Side::left || bf.side == Side::right;
        if (outer && g.medium[bf.cell] == Medium::matrix)
            throw ConfigError("matrix blocks touch the outer boundary; the cell's matrix part must stay "
                              "away from the cell edges");
    }
    return g;
}

std::vector<double> MicroState::p_w(const MicroGrid& grid, const CurvePair& pair) const
{
    std::vector<double> out(S.size());
    for (std::size_t c = 0; c < S.size(); ++c)
        out[c] = pair.curves(grid.medium[c]).phase_pressures(P[c], S[c]).first;
    return out;
}

std::vector<double> MicroState::p_n(const MicroGrid& grid, const CurvePair& pair) const
{
    std::vector<double> out(S.size());
    for (std::size_t c = 0; c < S.size(); ++c)
        out[c] = pair.curves(grid.medium[c]).phase_pressures(P[c], S[c]).second;
    return out;
}

InterfaceTrace interface_trace(const CurvePair& pair, double s_f, double s_m, double t_f, double t_m)
{
    const MediumCurves& fr = pair.fracture();
    const MediumCurves& mx = pair.matrix();
    const double bf = fr.beta(s_f);
    const double bm = mx.beta(s_m);
    auto phi = [&](double sigma) {
        return t_f * (bf - fr.beta(sigma)) - t_m * (mx.beta(pair.coupling_P(sigma)) - bm);
    };

    // phi is strictly decreasing; safeguarded Newton on the bracket [0, 1].
    double lo = 0.0, hi = 1.0;
    double sigma = std::clamp(0.5 * (s_f + pair.coupling_P_inverse(s_m)), 0.0, 1.0);
    double f = phi(sigma);
    for (int it = 0; it < 200 && f != 0.0; ++it) {
        if (f > 0.0)
            lo = sigma;
        else
            hi = sigma;
        const double sm = pair.coupling_P(sigma);
        const double df = -t_f * fr.alpha(sigma) - t_m * mx.alpha(sm) * pair.coupling_P_prime(sigma);
        double next = df < 0.0 ? sigma - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (next == sigma || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon())
            break;
        sigma = next;
        f = phi(sigma);
    }

    InterfaceTrace tr;
    tr.sigma_f = sigma;
    tr.sigma_m = pair.coupling_P(sigma);
    tr.flux = t_f * (bf - fr.beta(sigma));
    tr.mismatch = std::abs(phi(sigma));
    const double a = t_f * fr.alpha(sigma);
    const double b = t_m * mx.alpha(tr.sigma_m) * pair.coupling_P_prime(sigma);
    const double wa = a + b > 0.0 ? a / (a + b) : 0.5;
    tr.d_sf = t_f * fr.alpha(s_f) * (1.0 - wa);
    tr.d_sm = -t_m * mx.alpha(s_m) * wa;
    return tr;
}

namespace {

double outward(Side s)
{
    return (s == Side::right || s == Side::top) ? 1.0 : -1.0;
}

int side_axis(Side s)
{
    return (s == Side::left || s == Side::right) ? 0 : 1;
}

double harmonic(double a, double b)
{
    if (a <= 0.0 || b <= 0.0)
        return 0.0;
    return 1.0 / (1.0 / a + 1.0 / b);
}

bool is_gamma1(const MicroProblem& p, Side side)
{
    if (p.grid.layout == MicroLayout::strip && (side == Side::bottom || side == Side::top))
        return false;
    return p.boundary.tags.is_dirichlet(side);
}

struct FaceGeometry {
    std::vector<double> t_a, t_b;   // half transmissibilities (no mobility)
    std::vector<double> bt;         // boundary half transmissibility on Gamma_1 faces, else 0
};

FaceGeometry face_geometry(const MicroProblem& p)
{
    const MicroGrid& g = p.grid;
    FaceGeometry fg;
    const auto& faces = g.grid.interior_faces();
    fg.t_a.resize(faces.size());
    fg.t_b.resize(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& fc = faces[f];
        const auto& k = fc.axis == 0 ? g.perm_x : g.perm_y;
        fg.t_a[f] = fc.area * k[fc.a] / fc.half_a;
        fg.t_b[f] = fc.area * k[fc.b] / fc.half_b;
    }
    const auto& bfaces = g.grid.boundary_faces();
    fg.bt.assign(bfaces.size(), 0.0);
    for (std::size_t f = 0; f < bfaces.size(); ++f) {
        const auto& bf = bfaces[f];
        if (!is_gamma1(p, bf.side) || g.medium[bf.cell] != Medium::fracture)
            continue;
        const auto& k = side_axis(bf.side) == 0 ? g.perm_x : g.perm_y;
        fg.bt[f] = bf.area * k[bf.cell] / bf.half;
    }
    return fg;
}

struct FaceTraceResult {
    InterfaceTrace tr;
    bool a_is_fracture = true;
};

FaceTraceResult trace_on_face(const MicroProblem& p, const FaceGeometry& fg, std::size_t f,
                              const std::vector<double>& S)
{
    const auto& fc = p.grid.grid.interior_faces()[f];
    FaceTraceResult r;
    r.a_is_fracture = p.grid.medium[fc.a] == Medium::fracture;
    if (r.a_is_fracture)
        r.tr = interface_trace(*p.curves, S[fc.a], S[fc.b], fg.t_a[f], fg.t_b[f]);
    else
        r.tr = interface_trace(*p.curves, S[fc.b], S[fc.a], fg.t_b[f], fg.t_a[f]);
    return r;
}

std::vector<double> source_w(const MicroProblem& p, const std::vector<double>& S, double t)
{
    std::vector<double> out(S.size(), 0.0);
    if (t > p.sources.t_stop || p.sources.f_inj.empty())
        return out;
    for (std::size_t c = 0; c < S.size(); ++c)
        out[c] = p.sources.s_inj_w * p.sources.f_inj[c] - S[c] * p.sources.f_prod[c];
    return out;
}

std::vector<double> source_total(const MicroProblem& p, std::size_t n, double t)
{
    std::vector<double> out(n, 0.0);
    if (t > p.sources.t_stop || p.sources.f_inj.empty())
        return out;
    for (std::size_t c = 0; c < n; ++c)
        out[c] = p.sources.f_inj[c] - p.sources.f_prod[c];
    return out;
}

void check_problem(const MicroProblem& p)
{
    if (!p.curves)
        throw ConfigError("micro problem has no curves");
    const std::size_t n = p.grid.cells();
    if (!p.sources.f_inj.empty() && (p.sources.f_inj.size() != n || p.sources.f_prod.size() != n))
        throw ConfigError("micro source fields must have one value per cell");
    for (std::size_t c = 0; c < n && !p.sources.f_inj.empty(); ++c)
        if (p.grid.is_matrix(c) && (p.sources.f_inj[c] != 0.0 || p.sources.f_prod[c] != 0.0))
            throw ConfigError("A.9: sources must vanish on the matrix part");
}

} // namespace

MicroPressure micro_pressure_step(const std::vector<double>& S, const MicroProblem& problem, double t)
{
    check_problem(problem);
    const MicroGrid& g = problem.grid;
    const StructuredGrid& grid = g.grid;
    const std::size_t n = grid.cells();
    if (S.size() != n)
        throw DomainError("saturation field does not match the micro grid");
    const CurvePair& pair = *problem.curves;
    const FaceGeometry fg = face_geometry(problem);
    bool any = false;
    for (double v : fg.bt)
        any = any || v > 0.0;
    if (!any)
        throw ConfigError("pressure system is singular: no Dirichlet boundary (Gamma_1 empty)");

    std::vector<double> lam(n);
    for (std::size_t c = 0; c < n; ++c)
        lam[c] = pair.curves(g.medium[c]).total_mobility(S[c]);

    linalg::BandedMatrix a(n, grid.bandwidth(), grid.bandwidth());
    std::vector<double> rhs = source_total(problem, n, t);
    for (double& v : rhs)
        v *= grid.cell_volume();
    const std::vector<double> b0 = rhs;

    const auto& faces = grid.interior_faces();
    std::vector<double> tl(faces.size()), jump(faces.size(), 0.0);
    MicroPressure out;
    std::vector<FaceTraceResult> traces(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& fc = faces[f];
        tl[f] = harmonic(fg.t_a[f] * lam[fc.a], fg.t_b[f] * lam[fc.b]);
        if (g.medium[fc.a] != g.medium[fc.b]) {
            traces[f] = trace_on_face(problem, fg, f, S);
            const auto& tr = traces[f].tr;
            const double jf = pair.fracture().g_w(tr.sigma_f) - pair.matrix().g_w(tr.sigma_m);
            jump[f] = traces[f].a_is_fracture ? jf : -jf;
            out.pc_mismatch = std::max(out.pc_mismatch,
                                       std::abs(pair.fracture().pc(tr.sigma_f) - pair.matrix().pc(tr.sigma_m)));
        }
        const double drive = tl[f] * (jump[f] + problem.gravity[fc.axis] * (fc.half_a + fc.half_b));
        a.add(fc.a, fc.a, tl[f]);
        a.add(fc.a, fc.b, -tl[f]);
        a.add(fc.b, fc.b, tl[f]);
        a.add(fc.b, fc.a, -tl[f]);
        rhs[fc.a] -= drive;
        rhs[fc.b] += drive;
    }
    const auto& bfaces = grid.boundary_faces();
    std::vector<double> btl(bfaces.size(), 0.0);
    for (std::size_t f = 0; f < bfaces.size(); ++f) {
        if (fg.bt[f] <= 0.0)
            continue;
        const auto& bf = bfaces[f];
        btl[f] = fg.bt[f] * lam[bf.cell];
        a.add(bf.cell, bf.cell, btl[f]);
        rhs[bf.cell] += btl[f] * problem.boundary.pressure -
                        btl[f] * problem.gravity[side_axis(bf.side)] * outward(bf.side) * bf.half;
    }

    out.P = rhs;
    a.solve_in_place(out.P);

    out.interior_flux.resize(faces.size());
    std::vector<double> r(n, 0.0);
    for (std::size_t c = 0; c < n; ++c)
        r[c] = -b0[c];
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& fc = faces[f];
        const double u = tl[f] * (out.P[fc.a] - out.P[fc.b] + jump[f] +
                                  problem.gravity[fc.axis] * (fc.half_a + fc.half_b));
        out.interior_flux[f] = u;
        r[fc.a] += u;
        r[fc.b] -= u;
        if (g.medium[fc.a] != g.medium[fc.b]) {
            // Face global pressures from each side, then phase pressures.
            const double pa = out.P[fc.a] - u / (fg.t_a[f] * lam[fc.a]) +
                              problem.gravity[fc.axis] * fc.half_a;
            const double pb = out.P[fc.b] + u / (fg.t_b[f] * lam[fc.b]) -
                              problem.gravity[fc.axis] * fc.half_b;
            const auto& tr = traces[f].tr;
            const double sa = traces[f].a_is_fracture ? tr.sigma_f : tr.sigma_m;
            const double sb = traces[f].a_is_fracture ? tr.sigma_m : tr.sigma_f;
            const auto [pwa, pna] = pair.curves(g.medium[fc.a]).phase_pressures(pa, sa);
            const auto [pwb, pnb] = pair.curves(g.medium[fc.b]).phase_pressures(pb, sb);
            out.pw_mismatch = std::max(out.pw_mismatch, std::abs(pwa - pwb));
            out.pn_mismatch = std::max(out.pn_mismatch, std::abs(pna - pnb));
        }
    }
    out.boundary_flux.assign(bfaces.size(), 0.0);
    for (std::size_t f = 0; f < bfaces.size(); ++f) {
        if (btl[f] <= 0.0)
            continue;
        const auto& bf = bfaces[f];
        out.boundary_flux[f] = btl[f] * (out.P[bf.cell] - problem.boundary.pressure +
                                         problem.gravity[side_axis(bf.side)] * outward(bf.side) * bf.half);
        r[bf.cell] += out.boundary_flux[f];
    }
    double rn = 0.0, bn = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        rn += r[c] * r[c];
        bn += b0[c] * b0[c];
    }
    out.relative_residual = bn > 0.0 ? std::sqrt(rn / bn) : std::sqrt(rn);
    return out;
}

namespace {

struct MicroResidual {
    std::vector<double> r;
    double scaled = 0.0;
};

class MicroSaturationSystem {
public:
    MicroSaturationSystem(const std::vector<double>& s_old, const MicroProblem& p,
                          const MicroPressure& pr, double t_new, double dt)
        : s_old_(s_old), p_(p), pr_(pr), t_(t_new), dt_(dt), fg_(face_geometry(p))
    {
        const std::size_t n = p.grid.cells();
        acc_.resize(n);
        for (std::size_t c = 0; c < n; ++c)
            acc_[c] = p.grid.porosity[c] * p.grid.grid.cell_volume() / dt;
        const auto& faces = p.grid.grid.interior_faces();
        diff_.resize(faces.size());
        for (std::size_t f = 0; f < faces.size(); ++f)
            diff_[f] = harmonic(fg_.t_a[f], fg_.t_b[f]);
    }

    const MediumCurves& curves(std::size_t c) const { return p_.curves->curves(p_.grid.medium[c]); }

    // Wetting flux a -> b and its derivatives.
    void face_flux(std::size_t f, const std::vector<double>& s, double& flux, double& da, double& db) const
    {
        const auto& fc = p_.grid.grid.interior_faces()[f];
        const double u = pr_.interior_flux[f];
        const MediumCurves& ca = curves(fc.a);
        const MediumCurves& cb = curves(fc.b);
        if (u >= 0.0) {
            flux = ca.frac_w(s[fc.a]) * u;
            da = ca.frac_w_prime(s[fc.a]) * u;
            db = 0.0;
        } else {
            flux = cb.frac_w(s[fc.b]) * u;
            da = 0.0;
            db = cb.frac_w_prime(s[fc.b]) * u;
        }
        if (p_.grid.medium[fc.a] == p_.grid.medium[fc.b]) {
            flux -= diff_[f] * (ca.beta(s[fc.b]) - ca.beta(s[fc.a]));
            da += diff_[f] * ca.alpha(s[fc.a]);
            db -= diff_[f] * ca.alpha(s[fc.b]);
        } else {
            const auto ft = trace_on_face(p_, fg_, f, s);
            if (ft.a_is_fracture) {
                flux += ft.tr.flux;
                da += ft.tr.d_sf;
                db += ft.tr.d_sm;
            } else {
                flux -= ft.tr.flux;
                da -= ft.tr.d_sm;
                db -= ft.tr.d_sf;
            }
        }
    }

    void boundary_flux(std::size_t f, const std::vector<double>& s, double& flux, double& d) const
    {
        const auto& bf = p_.grid.grid.boundary_faces()[f];
        const double u = pr_.boundary_flux[f];
        const MediumCurves& c = curves(bf.cell);
        const double sd = p_.boundary.saturation;
        if (u >= 0.0) {
            flux = c.frac_w(s[bf.cell]) * u;
            d = c.frac_w_prime(s[bf.cell]) * u;
        } else {
            flux = c.frac_w(sd) * u;
            d = 0.0;
        }
        flux -= fg_.bt[f] * (c.beta(sd) - c.beta(s[bf.cell]));
        d += fg_.bt[f] * c.alpha(s[bf.cell]);
    }

    MicroResidual residual(const std::vector<double>& s, linalg::BandedMatrix* jac) const
    {
        const std::size_t n = s.size();
        const double v = p_.grid.grid.cell_volume();
        MicroResidual res;
        res.r.assign(n, 0.0);
        if (jac)
            jac->set_zero();
        const auto src = source_w(p_, s, t_);
        const bool src_on = !(t_ > p_.sources.t_stop) && !p_.sources.f_prod.empty();
        for (std::size_t c = 0; c < n; ++c) {
            res.r[c] = acc_[c] * (s[c] - s_old_[c]) - v * src[c];
            if (jac)
                jac->add(c, c, acc_[c] + (src_on ? v * p_.sources.f_prod[c] : 0.0));
        }
        const auto& faces = p_.grid.grid.interior_faces();
        for (std::size_t f = 0; f < faces.size(); ++f) {
            double flux = 0.0, da = 0.0, db = 0.0;
            face_flux(f, s, flux, da, db);
            const auto& fc = faces[f];
            res.r[fc.a] += flux;
            res.r[fc.b] -= flux;
            if (jac) {
                jac->add(fc.a, fc.a, da);
                jac->add(fc.a, fc.b, db);
                jac->add(fc.b, fc.a, -da);
                jac->add(fc.b, fc.b, -db);
            }
        }
        const auto& bfaces = p_.grid.grid.boundary_faces();
        for (std::size_t f = 0; f < bfaces.size(); ++f) {
            if (fg_.bt[f] <= 0.0)
                continue;
            double flux = 0.0, d = 0.0;
            boundary_flux(f, s, flux, d);
            res.r[bfaces[f].cell] += flux;
            if (jac)
                jac->add(bfaces[f].cell, bfaces[f].cell, d);
        }
        for (std::size_t c = 0; c < n; ++c)
            res.scaled = std::max(res.scaled, std::abs(res.r[c]) / acc_[c]);
        return res;
    }

    double boundary_inflow(const std::vector<double>& s) const
    {
        double in = 0.0;
        for (std::size_t f = 0; f < fg_.bt.size(); ++f) {
            if (fg_.bt[f] <= 0.0)
                continue;
            double flux = 0.0, d = 0.0;
            boundary_flux(f, s, flux, d);
            in -= flux;
        }
        return in;
    }

private:
    const std::vector<double>& s_old_;
    const MicroProblem& p_;
    const MicroPressure& pr_;
    double t_, dt_;
    FaceGeometry fg_;
    std::vector<double> acc_;
    std::vector<double> diff_;
};

} // namespace

MicroState micro_step(const MicroState& state, const MicroProblem& problem, double dt, MicroStepInfo* info)
{
    check_problem(problem);
    const std::size_t n = problem.grid.cells();
    if (state.S.size() != n)
        throw DomainError("micro state does not match its grid");
    if (!(dt > 0.0))
        throw DomainError("time step must be positive");
    const double t_new = state.t + dt;

    MicroPressure pr = micro_pressure_step(state.S, problem, t_new);
    MicroSaturationSystem sys(state.S, problem, pr, t_new, dt);
    const std::size_t bw = problem.grid.grid.bandwidth();
    linalg::BandedMatrix jac(n, bw, bw);

    std::vector<double> s = state.S;
    MicroResidual res = sys.residual(s, &jac);
    constexpr double newton_tol = 1e-13;
    constexpr double accept_tol = 1e-9;
    int it = 0;
    for (; it < 40 && res.scaled > newton_tol; ++it) {
        std::vector<double> delta(n);
        for (std::size_t c = 0; c < n; ++c)
            delta[c] = -res.r[c];
        jac.solve_in_place(delta);
        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k <= 8; ++k, lambda *= 0.5) {
            std::vector<double> trial(n);
            for (std::size_t c = 0; c < n; ++c)
                trial[c] = std::clamp(s[c] + lambda * delta[c], 0.0, 1.0);
            MicroResidual tr = sys.residual(trial, nullptr);
            if (tr.scaled < res.scaled) {
                s = std::move(trial);
                const double before = res.scaled;
                res = sys.residual(s, &jac);
                accepted = res.scaled > accept_tol || res.scaled < 0.1 * before;
                break;
            }
        }
        // Stop on a failed line search or on stagnation at roundoff.
        if (!accepted)
            break;
    }
    if (!(res.scaled <= accept_tol))
        throw SolverError("micro saturation Newton did not converge (residual " +
                          std::to_string(res.scaled) + ")");

    if (info) {
        info->iterations = it;
        info->residual = res.scaled;
        info->boundary_in = sys.boundary_inflow(s) * dt;
        const auto src = source_w(problem, s, t_new);
        double sum = 0.0;
        for (double v : src)
            sum += v;
        info->source_in = sum * problem.grid.grid.cell_volume() * dt;
        info->pressure = pr;
    }
    return MicroState{std::move(s), std::move(pr.P), t_new};
}

double micro_wetting_mass(const MicroState& state, const MicroGrid& grid)
{
    double sum = 0.0;
    for (std::size_t c = 0; c < grid.cells(); ++c)
        sum += grid.porosity[c] * state.S[c];
    return sum * grid.grid.cell_volume();
}

MicroState equilibrium_initial_state(const MicroProblem& problem,
                                     const std::function<double(double, double)>& s_fracture)
{
    const MicroGrid& g = problem.grid;
    MicroState st;
    st.S.resize(g.cells());
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const auto x = g.grid.center(c);
        const double sf = s_fracture(x[0], x[1]);
        if (!(sf >= 0.0 && sf <= 1.0))
            throw ConfigError("A.8: initial saturation outside [0, 1]");
        st.S[c] = g.is_matrix(c) ? problem.curves->coupling_P(sf) : sf;
    }
    st.P = micro_pressure_step(st.S, problem, 0.0).P;
    return st;
}

MicroSolver::MicroSolver(MicroProblem problem, MicroState initial, MicroRunOptions options)
    : problem_(std::move(problem)), options_(options), state_(std::move(initial))
{
    check_problem(problem_);
    if (state_.S.size() != problem_.grid.cells())
        throw ConfigError("initial micro state does not match the grid");
    if (!(options_.dt_init > 0.0) || !(options_.dt_max >= options_.dt_init))
        throw ConfigError("time step settings need 0 < dt_init <= dt_max");
    if (state_.P.size() != state_.S.size())
        state_.P = micro_pressure_step(state_.S, problem_, state_.t).P;
    initial_mass_ = micro_wetting_mass(state_, problem_.grid);
}

std::vector<MicroRecord> MicroSolver::run(const std::function<void(const MicroRecord&)>& on_step)
{
    std::vector<MicroRecord> records;
    double dt = options_.dt_init;
    int successes = 0;
    const double t_end = options_.t_end;
    const MicroGrid& g = problem_.grid;
    while (state_.t < t_end) {
        double h = std::min(dt, t_end - state_.t);
        if (t_end - (state_.t + h) < 1e-9 * h)
            h = t_end - state_.t;
        int halvings = 0;
        MicroStepInfo info;
        MicroState next;
        for (;;) {
            try {
                next = micro_step(state_, problem_, h, &info);
                break;
            } catch (const SolverError&) {
            } catch (const DomainError&) {
            }
            if (++halvings > options_.max_halvings) {
                std::ostringstream msg;
                msg << "micro step " << step_count_ + 1 << " at t=" << state_.t << " failed after "
                    << options_.max_halvings << " time step halvings";
                throw SolverError(msg.str());
            }
            h *= 0.5;
            dt = h;
            successes = 0;
        }
        state_ = std::move(next);
        ++step_count_;
        cumulative_in_ += info.boundary_in + info.source_in;
        flow_scale_ += std::abs(info.boundary_in) + std::abs(info.source_in);

        MicroRecord rec;
        rec.step = step_count_;
        rec.t = state_.t;
        rec.dt = h;
        rec.min_s_f = rec.min_s_m = 1.0;
        rec.max_s_f = rec.max_s_m = 0.0;
        double sum_f = 0.0, sum_m = 0.0;
        std::size_t nf = 0, nm = 0;
        for (std::size_t c = 0; c < g.cells(); ++c) {
            const double s = state_.S[c];
            if (g.is_matrix(c)) {
                rec.min_s_m = std::min(rec.min_s_m, s);
                rec.max_s_m = std::max(rec.max_s_m, s);
                sum_m += s;
                ++nm;
            } else {
                rec.min_s_f = std::min(rec.min_s_f, s);
                rec.max_s_f = std::max(rec.max_s_f, s);
                sum_f += s;
                ++nf;
            }
        }
        rec.mean_s_f = nf ? sum_f / static_cast<double>(nf) : 0.0;
        rec.mean_s_m = nm ? sum_m / static_cast<double>(nm) : 0.0;
        rec.mass = micro_wetting_mass(state_, g);
        const double scale = std::max({std::abs(initial_mass_), std::abs(rec.mass), flow_scale_, 1e-300});
        rec.ledger_error = std::abs(rec.mass - initial_mass_ - cumulative_in_) / scale;
        rec.pw_mismatch = std::max(info.pressure.pw_mismatch, info.pressure.pn_mismatch);
        rec.pc_mismatch = info.pressure.pc_mismatch;
        records.push_back(rec);
        if (on_step)
            on_step(rec);
        if (++successes >= options_.grow_after) {
            dt = std::min(dt * options_.grow_factor, options_.dt_max);
            successes = 0;
        }
    }
    return records;
}

namespace {

// Overlap-weighted mean of a piecewise-constant macro field over a box.
double macro_window_mean(const StructuredGrid& macro, const std::vector<double>& field, double x0,
                         double x1, double y0, double y1)
{
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < macro.cells(); ++c) {
        const auto ctr = macro.center(c);
        const double ox = std::min(x1, ctr[0] + 0.5 * macro.hx()) - std::max(x0, ctr[0] - 0.5 * macro.hx());
        if (ox <= 0.0)
            continue;
        double oy = 1.0;
        if (macro.dim() == 2) {
            oy = std::min(y1, ctr[1] + 0.5 * macro.hy()) - std::max(y0, ctr[1] - 0.5 * macro.hy());
            if (oy <= 0.0)
                continue;
        }
        num += field[c] * ox * oy;
        den += ox * oy;
    }
    if (den <= 0.0)
        throw DomainError("macro grid does not cover the comparison window");
    return num / den;
}

} // namespace

ComparisonNorms restrict_compare(const MicroGrid& micro, const MicroState& micro_state,
                                 const StructuredGrid& macro, const std::vector<double>& macro_s,
                                 const std::vector<double>& macro_matrix_s)
{
    if (micro_state.S.size() != micro.cells())
        throw DomainError("micro state does not match its grid");
    if (macro_s.size() != macro.cells() || macro_matrix_s.size() != macro.cells())
        throw DomainError("macro fields do not match the macro grid");
    if (std::abs(macro.lx() - micro.grid.lx()) > 1e-12)
        throw DomainError("micro and macro domains differ along x");
    const bool two_d_macro = macro.dim() == 2;
    if (two_d_macro && (micro.layout != MicroLayout::full || std::abs(macro.ly() - micro.grid.ly()) > 1e-12))
        throw DomainError("micro and macro domains differ along y");

    const std::size_t r = micro.per_cell;
    const std::size_t wx = micro.grid.nx() / r;
    const std::size_t wy = micro.grid.dim() == 1 ? 1 : micro.grid.ny() / r;
    const std::size_t windows = wx * wy;
    std::vector<double> sf(windows, 0.0), vf(windows, 0.0), sm(windows, 0.0), vm(windows, 0.0);
    for (std::size_t c = 0; c < micro.cells(); ++c) {
        const auto [i, j] = micro.grid.ij(c);
        const std::size_t w = i / r + wx * (micro.grid.dim() == 1 ? 0 : j / r);
        if (micro.is_matrix(c)) {
            sm[w] += micro_state.S[c];
            vm[w] += 1.0;
        } else {
            sf[w] += micro_state.S[c];
            vf[w] += 1.0;
        }
    }
    ComparisonNorms out;
    double wm = 0.0;
    const double eps = micro.epsilon;
    for (std::size_t w = 0; w < windows; ++w) {
        const double x0 = static_cast<double>(w % wx) * eps;
        const double y0 = static_cast<double>(w / wx) * eps;
        const double y1 = two_d_macro ? y0 + eps : 1.0;
        const double yy0 = two_d_macro ? y0 : 0.0;
        if (vf[w] > 0.0) {
            const double d = sf[w] / vf[w] - macro_window_mean(macro, macro_s, x0, x0 + eps, yy0, y1);
            out.fracture += d * d;
        }
        if (vm[w] > 0.0) {
            const double d = sm[w] / vm[w] - macro_window_mean(macro, macro_matrix_s, x0, x0 + eps, yy0, y1);
            out.matrix += d * d;
            wm += 1.0;
        }
    }
    out.fracture = std::sqrt(out.fracture / static_cast<double>(windows));
    out.matrix = wm > 0.0 ? std::sqrt(out.matrix / wm) : 0.0;
    return out;
}

} // namespace dpflow
