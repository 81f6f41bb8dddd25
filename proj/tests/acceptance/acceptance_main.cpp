// Acceptance run: one PASS/FAIL line per criterion with the measured values,
// the pinned tolerances and the wall time against its limit.

#include "dpflow/block_solver.hpp"
#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/convergence.hpp"
#include "dpflow/macro_solver.hpp"
#include "dpflow/micro_reference.hpp"
#include "dpflow/petrophysics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

using namespace dpflow;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string sci(double v)
{
    return fmt("%.3e", v);
}

CurveParams matrix_params()
{
    CurveParams p;
    p.shape = 0.5;
    return p;
}

const CurvePair& reference_pair()
{
    static const CurvePair pair(CurveParams{}, matrix_params());
    return pair;
}

// 1. Energy identity and derivative relations of the global pressure split.
Outcome petrophysics_identities()
{
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> expo(1.5, 4.0);
    std::uniform_real_distribution<double> visc(1.0, 3.0);
    std::uniform_real_distribution<double> entry(0.5, 2.0);
    std::uniform_real_distribution<double> shape(0.0, 0.9);
    std::uniform_real_distribution<double> sat(0.01, 0.99);
    std::uniform_real_distribution<double> vec(-3.0, 3.0);

    double alg = 0.0, fd = 0.0;
    int samples = 0;
    const double h = 1e-6;
    for (int set = 0; set < 10; ++set) {
        CurveParams p;
        p.exp_w = expo(rng);
        p.exp_n = expo(rng);
        p.visc_w = visc(rng);
        p.visc_n = visc(rng);
        p.entry_pressure = entry(rng);
        p.shape = shape(rng);
        const MediumCurves m(set % 2 ? Medium::matrix : Medium::fracture, p);
        for (int k = 0; k < 100; ++k, ++samples) {
            const double s = sat(rng);
            const double gP[2] = {vec(rng), vec(rng)};
            const double gs[2] = {vec(rng), vec(rng)};
            double lhs = 0.0, rhs = 0.0;
            for (int d = 0; d < 2; ++d) {
                const double dpw = gP[d] + m.g_w_prime(s) * gs[d];
                const double dpn = gP[d] + m.g_n_prime(s) * gs[d];
                lhs += m.mob_w(s) * dpw * dpw + m.mob_n(s) * dpn * dpn;
                const double db = m.kirchhoff_energy_prime(s) * gs[d];
                rhs += m.total_mobility(s) * gP[d] * gP[d] + db * db;
            }
            alg = std::max(alg, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));

            const double dgw = (m.g_w(s + h) - m.g_w(s - h)) / (2.0 * h);
            const double dgn = (m.g_n(s + h) - m.g_n(s - h)) / (2.0 * h);
            fd = std::max(fd, std::abs(m.mob_w(s) * dgw - m.alpha(s)));
            fd = std::max(fd, std::abs(m.mob_n(s) * dgn + m.alpha(s)));
        }
    }
    return {alg <= 1e-10 && fd <= 1e-5 && samples == 1000,
            std::to_string(samples) + " samples, energy identity " + sci(alg) +
                " (tol 1e-10), mob*G' vs alpha " + sci(fd) + " (tol 1e-5)"};
}

// 2. Coupling map against the quadratic inversion.
Outcome coupling_closed_form()
{
    CurveParams f;
    f.entry_pressure = 1.0;
    const CurvePair pair(f, matrix_params());
    double err = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double s = i / 100.0;
        const double exact = (-1.0 + std::sqrt(1.0 + 8.0 * s)) / 2.0;
        err = std::max(err, std::abs(pair.coupling_P(s) - exact));
    }
    return {err <= 1e-12, "101 samples, max error " + sci(err) + " (tol 1e-12)"};
}

// 3. Layered cell: K* = diag(|Y_f|/|Y_m|, 0).
Outcome layered_tensor()
{
    const auto props = homogenize(build_geometry(HorizontalSlab{0.5}, 128), 0.2);
    const auto& k = props.k_star;
    const double e11 = std::abs(k[0][0] - 1.0);
    const double e22 = std::abs(k[1][1]);
    const double sym = std::abs(k[0][1] - k[1][0]);
    return {e11 <= 0.02 && e22 <= 1e-8 && sym <= 1e-10,
            "n=128 |K11-1| " + sci(e11) + " (tol 2e-2), |K22| " + sci(e22) + " (tol 1e-8), |K12-K21| " +
                sci(sym) + " (tol 1e-10)"};
}

double richardson(double a1, double a2, double a3)
{
    const double p = std::log2((a1 - a2) / (a2 - a3));
    return a3 + (a3 - a2) / (std::pow(2.0, p) - 1.0);
}

// 4. Centered box: isotropy at n=64 and self-convergent diagonal.
Outcome box_tensor()
{
    std::vector<std::array<std::array<double, 2>, 2>> k;
    for (std::size_t n : {16u, 32u, 64u, 128u})
        k.push_back(homogenize(build_geometry(CenteredBox{0.5}, n), 0.2).k_star);
    const auto& k64 = k[2];
    const double iso = std::abs(k64[0][0] - k64[1][1]);
    const double off = std::max(std::abs(k64[0][1]), std::abs(k64[1][0]));
    double drift = 0.0;
    double r_fine = 0.0;
    for (int d = 0; d < 2; ++d) {
        const double r_coarse = richardson(k[0][d][d], k[1][d][d], k[2][d][d]);
        const double r = richardson(k[1][d][d], k[2][d][d], k[3][d][d]);
        drift = std::max(drift, std::abs(r - r_coarse) / std::abs(r));
        r_fine = r;
    }
    return {iso <= 1e-8 && off <= 1e-8 && drift <= 5e-4,
            "n=64 |K11-K22| " + sci(iso) + ", |K12| " + sci(off) + " (tol 1e-8); extrapolated K " +
                fmt("%.5f", r_fine) + " from {32,64,128}, relative shift vs {16,32,64} " + sci(drift) +
                " (tol 5e-4)"};
}

MacroProblem line_problem(std::size_t n, double theta)
{
    MacroProblem p;
    p.grid = StructuredGrid::line(n, 1.0);
    p.curves = &reference_pair();
    p.coeff.k_star = {{{1.0, 0.0}, {0.0, 0.0}}};
    p.coeff.phi_star = 0.2;
    p.coeff.phi_hat_m = 0.3;
    p.coeff.volume_ratio = 1.0;
    p.sources.f_inj.assign(n, 0.0);
    p.sources.f_prod.assign(n, 0.0);
    p.regime.theta = theta;
    return p;
}

MacroProblem sourced_problem(std::size_t n, double theta)
{
    auto p = line_problem(n, theta);
    p.boundary.tags.dirichlet = {true, true, false, false};
    p.boundary.saturation = 1.0;
    p.gravity = {1.0, 0.0};
    p.sources.f_inj[0] = 4.0;
    p.sources.f_prod[n - 1] = 1.0;
    p.sources.s_inj_w = 1.0;
    return p;
}

MacroRunOptions fixed_steps(double dt, int steps)
{
    MacroRunOptions o;
    o.dt_init = o.dt_max = dt;
    o.t_end = dt * steps;
    o.max_halvings = 0;
    return o;
}

BlockGrid box_block(std::size_t n, int dim)
{
    return block_grid_from_cell(build_geometry(CenteredBox{0.5}, n, dim));
}

// 5. Ledger and bounds in all three regimes.
Outcome macro_conservation()
{
    double ledger = 0.0, lo = 1.0, hi = 0.0;
    int steps = 0;
    for (double theta : {1.0, 2.0, 3.0}) {
        auto o = fixed_steps(0.005, 200);
        if (theta == 2.0)
            o.block_grid = box_block(16, 2);
        MacroSolver solver(sourced_problem(64, theta), std::vector<double>(64, 0.1), o);
        int k = 0;
        solver.run([&](const StepRecord& r) {
            ledger = std::max(ledger, r.ledger.relative_error);
            lo = std::min(lo, r.min_s);
            hi = std::max(hi, r.max_s);
            ++k;
        });
        if (k != 200)
            return {false, "theta " + fmt("%g", theta) + " took " + std::to_string(k) + " steps, expected 200"};
        steps += k;
    }
    return {ledger <= 1e-8 && lo >= -1e-12 && hi <= 1.0 + 1e-12,
            "theta 1,2,3 x 200 steps, ledger " + sci(ledger) + " (tol 1e-8), S in [" + fmt("%.6g", lo) +
                ", " + fmt("%.17g", hi) + "] (tol 1e-12)"};
}

// 6. Block solver properties.
Outcome block_properties()
{
    const MediumCurves& m = reference_pair().matrix();
    const BlockGrid grids[2] = {box_block(16, 2), box_block(32, 1)};

    double fixed = 0.0;
    for (const auto& g : grids)
        for (double c : {0.0, 0.3, 0.7, 1.0}) {
            const auto eq = equilibrium_state(g, c);
            BlockState s = eq;
            for (int k = 0; k < 5; ++k) {
                const auto next = block_step(s, g, m, c, 0.05);
                fixed = std::max(fixed, std::abs(transfer_source(s, next, g, 0.05)));
                s = next;
            }
            for (std::size_t i = 0; i < g.cells; ++i)
                fixed = std::max(fixed, std::abs(s.s[i] - eq.s[i]));
        }

    double balance = 0.0;
    for (const auto& g : grids) {
        BlockState s = equilibrium_state(g, 0.2);
        for (int k = 0; k < 20; ++k) {
            const double b = k < 10 ? 0.9 : 0.4;
            const auto next = block_step(s, g, m, b, 0.01);
            const double q = transfer_source(s, next, g, 0.01);
            const double flux = interface_flux(next, g, m, b);
            balance = std::max(balance, std::abs(q + flux / g.measure) / std::max(1.0, std::abs(q)));
            s = next;
        }
    }

    const auto& g = grids[0];
    BlockState a = equilibrium_state(g, 0.1);
    BlockState b = equilibrium_state(g, 0.1);
    for (std::size_t i = 0; i < g.cells; i += 3)
        b.s[i] = 0.3;
    double order = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 50; ++k) {
        a = block_step(a, g, m, k < 25 ? 0.4 : 0.2, 0.01);
        b = block_step(b, g, m, k < 25 ? 0.6 : 0.5, 0.01);
        for (std::size_t i = 0; i < g.cells; ++i)
            order = std::min(order, b.s[i] - a.s[i]);
    }

    bool identical = true;
    BlockState r1 = equilibrium_state(grids[1], 0.1), r2 = r1;
    for (int k = 0; k < 30; ++k) {
        r1 = block_step(r1, grids[1], m, 0.8, 0.01);
        r2 = block_step(r2, grids[1], m, 0.8, 0.01);
        identical = identical && r1.s == r2.s;
    }

    return {fixed <= std::numeric_limits<double>::epsilon() && balance <= 1e-10 && order >= -1e-12 &&
                identical,
            "fixed point drift " + sci(fixed) + " (tol 2.2e-16), Q_w vs flux sum " + sci(balance) +
                " (tol 1e-10), min(s_upper - s_lower) over 50 steps " + sci(order) +
                " (tol -1e-12), identical runs bitwise " + (identical ? "equal" : "DIFFERENT")};
}

// 7. Memory effect: a step in the fracture saturation seen by a block.
Outcome memory_effect()
{
    const CurvePair& pair = reference_pair();
    const MediumCurves& m = pair.matrix();
    bool single_signed = true, decaying = true;
    double ratio = 0.0;
    int steps = 0;
    for (const auto& g : {box_block(32, 2), box_block(64, 1)}) {
        BlockState s = equilibrium_state(g, pair.coupling_P(0.3));
        const double b = pair.coupling_P(0.8);
        double q0 = 0.0, prev = 0.0;
        for (int k = 0; k < 100; ++k, ++steps) {
            const auto next = block_step(s, g, m, b, 0.002);
            const double q = transfer_source(s, next, g, 0.002);
            single_signed = single_signed && q < 0.0;
            if (k == 0)
                q0 = q;
            else
                decaying = decaying && std::abs(q) < std::abs(prev);
            prev = q;
            s = next;
        }
        ratio = std::max(ratio, std::abs(prev / q0));
    }
    return {single_signed && decaying,
            "S_f 0.3 -> 0.8, " + std::to_string(steps) + " steps on 2D and 1D blocks, Q_w " +
                (single_signed ? "< 0 throughout" : "changes sign") + ", |Q_w| " +
                (decaying ? "strictly decreasing" : "not monotone") + ", final/first " + sci(ratio)};
}

std::vector<std::vector<double>> uncoupled_run(const MacroProblem& p, std::vector<double> S, double dt,
                                               int steps)
{
    const CouplingFn zero = [](const std::vector<double>&, std::vector<double>& q, std::vector<double>& dq) {
        std::fill(q.begin(), q.end(), 0.0);
        std::fill(dq.begin(), dq.end(), 0.0);
    };
    std::vector<std::vector<double>> out;
    double t = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double t_new = t + dt;
        const auto pr = pressure_step(S, p, t_new);
        S = saturation_step(S, p, pr, zero, t_new, dt).S;
        out.push_back(S);
        t = t_new;
    }
    return out;
}

std::vector<std::vector<double>> solver_run(const MacroProblem& p, const std::vector<double>& S0,
                                            MacroRunOptions o, double dt, int steps)
{
    MacroSolver solver(p, S0, std::move(o));
    std::vector<std::vector<double>> out;
    for (int k = 0; k < steps; ++k) {
        if (!solver.try_step(dt))
            break;
        out.push_back(solver.state().S);
    }
    return out;
}

double series_gap(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b)
{
    if (a.size() != b.size())
        return std::numeric_limits<double>::infinity();
    double gap = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size(); ++i)
            gap = std::max(gap, std::abs(a[k][i] - b[k][i]));
    return gap;
}

// 8. Very high contrast equals the uncoupled model; critical with blocks in
// equilibrium and a stationary fracture equals both.
Outcome regime_consistency()
{
    const double dt = 0.005;
    const int steps = 100;
    const auto p3 = sourced_problem(64, 3.0);
    const std::vector<double> S0(64, 0.1);
    const double gap_a = series_gap(solver_run(p3, S0, fixed_steps(dt, steps), dt, steps),
                                    uncoupled_run(p3, S0, dt, steps));

    auto still = line_problem(32, 3.0);
    still.boundary.tags.dirichlet = {true, true, false, false};
    still.boundary.saturation = 0.6;
    const std::vector<double> S_still(32, 0.6);
    auto crit = still;
    crit.regime.theta = 2.0;
    auto o2 = fixed_steps(dt, 40);
    o2.block_grid = box_block(16, 2);
    const auto r2 = solver_run(crit, S_still, o2, dt, 40);
    const auto r3 = solver_run(still, S_still, fixed_steps(dt, 40), dt, 40);
    const auto r0 = uncoupled_run(still, S_still, dt, 40);
    const double gap_b = std::max(series_gap(r2, r3), series_gap(r2, r0));

    return {gap_a <= 1e-10 && gap_b <= 1e-10,
            "theta 3 vs uncoupled, 100 steps: " + sci(gap_a) + "; theta 2 static blocks vs both, 40 steps: " +
                sci(gap_b) + " (tol 1e-10)"};
}

ConvergenceSetup study_setup(double theta)
{
    ConvergenceSetup s;
    s.curves = &reference_pair();
    s.cell = build_geometry(CenteredBox{0.5}, 16, 2);
    s.theta = theta;
    return s;
}

bool decreasing(const std::vector<double>& v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1]))
            return false;
    return true;
}

std::string list(const std::vector<double>& v)
{
    std::string out;
    for (double x : v)
        out += (out.empty() ? "" : ", ") + sci(x);
    return out;
}

const std::vector<double> study_eps{1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0};

// 9. theta = 1: fracture saturation error decays with epsilon.
Outcome convergence_moderate()
{
    const auto rows = convergence_study(study_setup(1.0), study_eps);
    std::vector<double> ef;
    for (const auto& r : rows)
        ef.push_back(r.err_fracture);
    return {decreasing(ef), "eps 1/8,1/16,1/32 fracture L2 errors " + list(ef) + " (strictly decreasing)"};
}

// 10. theta = 2: fracture and block errors decay with epsilon.
Outcome convergence_critical()
{
    const auto rows = convergence_study(study_setup(2.0), study_eps);
    std::vector<double> ef, em;
    for (const auto& r : rows) {
        ef.push_back(r.err_fracture);
        em.push_back(r.err_matrix);
    }
    return {decreasing(ef) && decreasing(em),
            "eps 1/8,1/16,1/32 fracture " + list(ef) + ", matrix " + list(em) + " (strictly decreasing)"};
}

// 11. Identical curves, unscaled matrix permeability.
Outcome transparent_interface()
{
    static const CurvePair pair(CurveParams{}, CurveParams{});
    auto cell = build_geometry(CenteredBox{0.5}, 8, 2);
    cell.set_matrix_porosity([](double, double) { return 0.2; });
    MicroProblem mp;
    mp.grid = build_micro_grid(cell, 0.25, 0.0, 0.2, MicroLayout::strip);
    mp.curves = &pair;
    mp.boundary.tags.dirichlet = {true, true, false, false};
    mp.boundary.saturation = 0.9;
    mp.gravity = {0.5, 0.0};
    const auto init = equilibrium_initial_state(mp, [](double x, double) { return x < 0.5 ? 0.6 : 0.1; });
    MicroRunOptions mo;
    mo.dt_init = mo.dt_max = 0.002;
    mo.t_end = 0.05;
    MicroSolver micro(mp, init, mo);
    micro.run();

    MacroProblem sp;
    sp.grid = mp.grid.grid;
    sp.curves = &pair;
    sp.boundary.tags.dirichlet = {true, true, false, false};
    sp.boundary.saturation = 0.9;
    sp.coeff.k_star = {{{1.0, 0.0}, {0.0, 1.0}}};
    sp.coeff.phi_star = 0.2;
    sp.coeff.phi_hat_m = 0.2;
    sp.coeff.volume_ratio = 1.0;
    sp.sources.f_inj.assign(sp.grid.cells(), 0.0);
    sp.sources.f_prod.assign(sp.grid.cells(), 0.0);
    sp.gravity = {0.5, 0.0};
    sp.regime.theta = 3.0;
    MacroSolver single(sp, init.S, fixed_steps(0.002, 25));
    single.run();

    double diff = 0.0;
    for (std::size_t c = 0; c < init.S.size(); ++c)
        diff = std::max(diff, std::abs(micro.state().S[c] - single.state().S[c]));
    return {diff <= 1e-12 && micro.state().t == single.state().t,
            std::to_string(init.S.size()) + " shared cells, 25 steps, max |S_micro - S_single| " + sci(diff) +
                " (tol 1e-12)"};
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {1, "petrophysics identities", 1.0, petrophysics_identities},
        {2, "coupling map closed form", 1.0, coupling_closed_form},
        {3, "effective tensor, layered cell", 30.0, layered_tensor},
        {4, "effective tensor, centered box", 60.0, box_tensor},
        {5, "macro conservation and bounds", 30.0, macro_conservation},
        {6, "block solver properties", 30.0, block_properties},
        {7, "dual-porosity memory effect", 60.0, memory_effect},
        {8, "regime consistency", 60.0, regime_consistency},
        {9, "convergence study, theta=1", 300.0, convergence_moderate},
        {10, "convergence study, theta=2", 600.0, convergence_critical},
        {11, "transparent interface", 30.0, transparent_interface},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs <= c.limit_s;
        failed += pass ? 0 : 1;
        std::printf("[%s] %2d %s: %s; %.2f s (limit %g s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs, c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
