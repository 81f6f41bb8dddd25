#include "dpflow/macro_solver.hpp"

#include "dpflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace dpflow {

const char* to_string(Regime r)
{
    switch (r) {
    case Regime::moderate:
        return "moderate";
    case Regime::critical:
        return "critical";
    case Regime::very_high:
        return "very_high";
    }
    return "unknown";
}

Regime RegimeConfig::regime() const
{
    if (!(theta > 0.0))
        throw ConfigError("A.2: theta must be positive");
    if (std::abs(theta - 2.0) <= 1e-12)
        return Regime::critical;
    return theta < 2.0 ? Regime::moderate : Regime::very_high;
}

MacroCoefficients MacroCoefficients::from(const EffectiveProps& props)
{
    MacroCoefficients c;
    c.k_star = props.k_star;
    if (props.dim == 1) {
        c.k_star[1][1] = 0.0;
        c.k_star[0][1] = c.k_star[1][0] = 0.0;
    }
    c.phi_star = props.phi_star;
    c.phi_hat_m = props.phi_hat_m;
    c.volume_ratio = props.volume_ratio();
    return c;
}

std::vector<double> MacroState::p_w(const MediumCurves& fracture) const
{
    std::vector<double> out(S.size());
    for (std::size_t i = 0; i < S.size(); ++i)
        out[i] = fracture.phase_pressures(P[i], S[i]).first;
    return out;
}

std::vector<double> MacroState::p_n(const MediumCurves& fracture) const
{
    std::vector<double> out(S.size());
    for (std::size_t i = 0; i < S.size(); ++i)
        out[i] = fracture.phase_pressures(P[i], S[i]).second;
    return out;
}

namespace {

double axis_perm(const MacroCoefficients& c, int axis)
{
    return c.k_star[axis][axis];
}

// Outward unit direction sign of a boundary side along its axis.
double outward(Side s)
{
    return (s == Side::right || s == Side::top) ? 1.0 : -1.0;
}

int side_axis(Side s)
{
    return (s == Side::left || s == Side::right) ? 0 : 1;
}

double half_trans(double area, double k, double half)
{
    return area * k / half;
}

double harmonic(double a, double b)
{
    if (a <= 0.0 || b <= 0.0)
        return 0.0;
    return 1.0 / (1.0 / a + 1.0 / b);
}

void check_problem(const MacroProblem& p, std::size_t cells)
{
    if (!p.curves)
        throw ConfigError("macro problem has no curves");
    if (p.sources.f_inj.size() != cells || p.sources.f_prod.size() != cells)
        throw ConfigError("source fields must have one value per macro cell");
}

} // namespace

EffectiveSources effective_sources(const std::vector<double>& S, const SourceSpec& sources,
                                   double volume_ratio, double t)
{
    EffectiveSources out;
    out.w.assign(S.size(), 0.0);
    out.n.assign(S.size(), 0.0);
    if (!sources.active(t))
        return out;
    for (std::size_t i = 0; i < S.size(); ++i) {
        const double fi = sources.f_inj.empty() ? 0.0 : sources.f_inj[i];
        const double fp = sources.f_prod.empty() ? 0.0 : sources.f_prod[i];
        out.w[i] = (sources.s_inj_w * fi - S[i] * fp) * volume_ratio;
        out.n[i] = (sources.s_inj_n() * fi - (1.0 - S[i]) * fp) * volume_ratio;
    }
    return out;
}

Accumulation regime_accumulation(Regime regime, const CurvePair& curves, double phi_star,
                                 double phi_hat_m, double S)
{
    Accumulation a;
    a.fracture = phi_star * S;
    if (regime == Regime::moderate)
        a.matrix = phi_hat_m * curves.coupling_P(S);
    return a;
}

PressureSolution pressure_step(const std::vector<double>& S, const MacroProblem& problem, double t)
{
    const StructuredGrid& grid = problem.grid;
    const std::size_t n = grid.cells();
    check_problem(problem, n);
    if (S.size() != n)
        throw DomainError("saturation field does not match the macro grid");
    if (!problem.boundary.tags.any_dirichlet(grid.dim()))
        throw ConfigError("pressure system is singular: no Dirichlet boundary (Gamma_1 empty)");

    const MediumCurves& fr = problem.curves->fracture();
    std::vector<double> lam(n);
    for (std::size_t i = 0; i < n; ++i)
        lam[i] = fr.total_mobility(S[i]);
    const auto src = effective_sources(S, problem.sources, problem.coeff.volume_ratio, t);

    linalg::BandedMatrix a(n, grid.bandwidth(), grid.bandwidth());
    std::vector<double> rhs(n), b(n);
    for (std::size_t i = 0; i < n; ++i)
        rhs[i] = grid.cell_volume() * (src.w[i] + src.n[i]);

    const auto& faces = grid.interior_faces();
    std::vector<double> face_t(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& fc = faces[f];
        const double k = axis_perm(problem.coeff, fc.axis);
        const double t_ab = harmonic(half_trans(fc.area, k, fc.half_a) * lam[fc.a],
                                     half_trans(fc.area, k, fc.half_b) * lam[fc.b]);
        face_t[f] = t_ab;
        const double grav = t_ab * problem.gravity[fc.axis] * (fc.half_a + fc.half_b);
        a.add(fc.a, fc.a, t_ab);
        a.add(fc.a, fc.b, -t_ab);
        a.add(fc.b, fc.b, t_ab);
        a.add(fc.b, fc.a, -t_ab);
        rhs[fc.a] -= grav;
        rhs[fc.b] += grav;
    }
    const auto& bfaces = grid.boundary_faces();
    std::vector<double> bface_t(bfaces.size(), 0.0);
    for (std::size_t f = 0; f < bfaces.size(); ++f) {
        const auto& bf = bfaces[f];
        if (!problem.boundary.tags.is_dirichlet(bf.side))
            continue;
        const int axis = side_axis(bf.side);
        const double t_b = half_trans(bf.area, axis_perm(problem.coeff, axis), bf.half) * lam[bf.cell];
        bface_t[f] = t_b;
        a.add(bf.cell, bf.cell, t_b);
        rhs[bf.cell] += t_b * problem.boundary.pressure -
                        t_b * problem.gravity[axis] * outward(bf.side) * bf.half;
    }

    PressureSolution sol;
    sol.P = rhs;
    b = rhs;
    a.solve_in_place(sol.P);

    sol.interior_flux.resize(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& fc = faces[f];
        sol.interior_flux[f] = face_t[f] * (sol.P[fc.a] - sol.P[fc.b] +
                                            problem.gravity[fc.axis] * (fc.half_a + fc.half_b));
    }
    sol.boundary_flux.assign(bfaces.size(), 0.0);
    for (std::size_t f = 0; f < bfaces.size(); ++f) {
        const auto& bf = bfaces[f];
        if (bface_t[f] == 0.0)
            continue;
        const int axis = side_axis(bf.side);
        sol.boundary_flux[f] = bface_t[f] * (sol.P[bf.cell] - problem.boundary.pressure +
                                             problem.gravity[axis] * outward(bf.side) * bf.half);
    }

    // Residual of the discrete balance: outflow - source per cell.
    std::vector<double> r(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = -grid.cell_volume() * (src.w[i] + src.n[i]);
    for (std::size_t f = 0; f < faces.size(); ++f) {
        r[faces[f].a] += sol.interior_flux[f];
        r[faces[f].b] -= sol.interior_flux[f];
    }
    for (std::size_t f = 0; f < bfaces.size(); ++f)
        r[bfaces[f].cell] += sol.boundary_flux[f];
    double rn = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rn += r[i] * r[i];
        bn += b[i] * b[i];
    }
    sol.relative_residual = bn > 0.0 ? std::sqrt(rn / bn) : std::sqrt(rn);
    return sol;
}

namespace {

struct SatResidual {
    std::vector<double> r;
    std::vector<double> q;
    std::vector<double> dq;
    double scaled = 0.0;
};

class SaturationSystem {
public:
    SaturationSystem(const std::vector<double>& s_old, const MacroProblem& p,
                     const PressureSolution& pr, const CouplingFn& coupling, double t_new, double dt)
        : s_old_(s_old), p_(p), pr_(pr), coupling_(coupling), t_(t_new), dt_(dt),
          fr_(p.curves->fracture()), grid_(p.grid)
    {
        const auto& faces = grid_.interior_faces();
        diff_t_.resize(faces.size());
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const auto& fc = faces[f];
            const double k = axis_perm(p_.coeff, fc.axis);
            diff_t_[f] = harmonic(half_trans(fc.area, k, fc.half_a), half_trans(fc.area, k, fc.half_b));
        }
        const auto& bfaces = grid_.boundary_faces();
        bdiff_t_.assign(bfaces.size(), 0.0);
        for (std::size_t f = 0; f < bfaces.size(); ++f) {
            const auto& bf = bfaces[f];
            if (p_.boundary.tags.is_dirichlet(bf.side))
                bdiff_t_[f] = half_trans(bf.area, axis_perm(p_.coeff, side_axis(bf.side)), bf.half);
        }
        acc_ = p_.coeff.phi_star * grid_.cell_volume() / dt_;
    }

    SatResidual residual(const std::vector<double>& s) const
    {
        const std::size_t n = s.size();
        SatResidual res;
        res.r.assign(n, 0.0);
        res.q.assign(n, 0.0);
        res.dq.assign(n, 0.0);
        if (coupling_)
            coupling_(s, res.q, res.dq);
        const auto src = effective_sources(s, p_.sources, p_.coeff.volume_ratio, t_);
        std::vector<double> beta(n);
        for (std::size_t i = 0; i < n; ++i) {
            beta[i] = fr_.beta(s[i]);
            res.r[i] = acc_ * (s[i] - s_old_[i]) - grid_.cell_volume() * (src.w[i] + res.q[i]);
        }
        const auto& faces = grid_.interior_faces();
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const double flux = face_flux(f, s, beta);
            res.r[faces[f].a] += flux;
            res.r[faces[f].b] -= flux;
        }
        const auto& bfaces = grid_.boundary_faces();
        for (std::size_t f = 0; f < bfaces.size(); ++f)
            if (bdiff_t_[f] > 0.0)
                res.r[bfaces[f].cell] += boundary_flux(f, s, beta);
        for (std::size_t i = 0; i < n; ++i)
            res.scaled = std::max(res.scaled, std::abs(res.r[i]) / acc_);
        return res;
    }

    void jacobian(const std::vector<double>& s, const SatResidual& res, linalg::BandedMatrix& j) const
    {
        j.set_zero();
        const std::size_t n = s.size();
        const double fp_scale = p_.sources.active(t_) ? p_.coeff.volume_ratio : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fp = p_.sources.f_prod.empty() ? 0.0 : p_.sources.f_prod[i];
            j.add(i, i, acc_ + grid_.cell_volume() * (fp * fp_scale - res.dq[i]));
        }
        const auto& faces = grid_.interior_faces();
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const auto& fc = faces[f];
            const double u = pr_.interior_flux[f];
            const double da = (u >= 0.0 ? fr_.frac_w_prime(s[fc.a]) * u : 0.0) +
                              diff_t_[f] * fr_.alpha(s[fc.a]);
            const double db = (u < 0.0 ? fr_.frac_w_prime(s[fc.b]) * u : 0.0) -
                              diff_t_[f] * fr_.alpha(s[fc.b]);
            j.add(fc.a, fc.a, da);
            j.add(fc.a, fc.b, db);
            j.add(fc.b, fc.a, -da);
            j.add(fc.b, fc.b, -db);
        }
        const auto& bfaces = grid_.boundary_faces();
        for (std::size_t f = 0; f < bfaces.size(); ++f) {
            if (bdiff_t_[f] <= 0.0)
                continue;
            const auto& bf = bfaces[f];
            const double u = pr_.boundary_flux[f];
            const double d = (u >= 0.0 ? fr_.frac_w_prime(s[bf.cell]) * u : 0.0) +
                             bdiff_t_[f] * fr_.alpha(s[bf.cell]);
            j.add(bf.cell, bf.cell, d);
        }
    }

    // Wetting flux a -> b.
    double face_flux(std::size_t f, const std::vector<double>& s, const std::vector<double>& beta) const
    {
        const auto& fc = grid_.interior_faces()[f];
        const double u = pr_.interior_flux[f];
        const double up = u >= 0.0 ? s[fc.a] : s[fc.b];
        return fr_.frac_w(up) * u - diff_t_[f] * (beta[fc.b] - beta[fc.a]);
    }

    // Outward wetting flux through a Dirichlet face.
    double boundary_flux(std::size_t f, const std::vector<double>& s, const std::vector<double>& beta) const
    {
        const auto& bf = grid_.boundary_faces()[f];
        const double u = pr_.boundary_flux[f];
        const double sd = p_.boundary.saturation;
        const double up = u >= 0.0 ? s[bf.cell] : sd;
        return fr_.frac_w(up) * u - bdiff_t_[f] * (fr_.beta(sd) - beta[bf.cell]);
    }

    double boundary_inflow(const std::vector<double>& s) const
    {
        std::vector<double> beta(s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            beta[i] = fr_.beta(s[i]);
        double in = 0.0;
        for (std::size_t f = 0; f < bdiff_t_.size(); ++f)
            if (bdiff_t_[f] > 0.0)
                in -= boundary_flux(f, s, beta);
        return in;
    }

private:
    const std::vector<double>& s_old_;
    const MacroProblem& p_;
    const PressureSolution& pr_;
    const CouplingFn& coupling_;
    double t_, dt_;
    const MediumCurves& fr_;
    const StructuredGrid& grid_;
    std::vector<double> diff_t_, bdiff_t_;
    double acc_ = 0.0;
};

} // namespace

SaturationResult saturation_step(const std::vector<double>& S_old, const MacroProblem& problem,
                                 const PressureSolution& pressure, const CouplingFn& coupling,
                                 double t_new, double dt, const SaturationOptions& options)
{
    const std::size_t n = problem.grid.cells();
    check_problem(problem, n);
    if (S_old.size() != n)
        throw DomainError("saturation field does not match the macro grid");
    if (!(dt > 0.0))
        throw DomainError("time step must be positive");

    SaturationSystem sys(S_old, problem, pressure, coupling, t_new, dt);
    std::vector<double> s = S_old;
    SatResidual res = sys.residual(s);
    linalg::BandedMatrix jac(n, problem.grid.bandwidth(), problem.grid.bandwidth());

    int it = 0;
    for (; it < options.max_iter && res.scaled > options.newton_tol; ++it) {
        sys.jacobian(s, res, jac);
        std::vector<double> delta(n);
        for (std::size_t i = 0; i < n; ++i)
            delta[i] = -res.r[i];
        jac.solve_in_place(delta);

        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k <= options.max_halvings; ++k, lambda *= 0.5) {
            std::vector<double> trial(n);
            for (std::size_t i = 0; i < n; ++i)
                trial[i] = std::clamp(s[i] + lambda * delta[i], 0.0, 1.0);
            SatResidual tr = sys.residual(trial);
            if (tr.scaled < res.scaled) {
                s = std::move(trial);
                res = std::move(tr);
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break;
    }
    if (!(res.scaled <= options.accept_tol))
        throw SolverError("saturation Newton did not converge (residual " +
                          std::to_string(res.scaled) + " after " + std::to_string(it) +
                          " iterations)");
    SaturationResult out;
    out.S = std::move(s);
    out.q_w = std::move(res.q);
    out.iterations = it;
    out.residual = res.scaled;
    return out;
}

MacroSolver::MacroSolver(MacroProblem problem, std::vector<double> initial_s, MacroRunOptions options)
    : problem_(std::move(problem)), options_(std::move(options))
{
    const std::size_t n = problem_.grid.cells();
    check_problem(problem_, n);
    if (initial_s.size() != n)
        throw ConfigError("initial saturation does not match the macro grid");
    for (double v : initial_s)
        if (!(v >= 0.0 && v <= 1.0))
            throw ConfigError("A.8: initial saturation outside [0, 1]");
    if (!(options_.dt_init > 0.0) || !(options_.dt_max >= options_.dt_init))
        throw ConfigError("time step settings need 0 < dt_init <= dt_max");

    state_.S = std::move(initial_s);
    state_.t = 0.0;
    state_.P = pressure_step(state_.S, problem_, 0.0).P;

    const CurvePair& pair = *problem_.curves;
    initial_matrix_s_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        initial_matrix_s_[i] = options_.block_initial_s ? *options_.block_initial_s
                                                        : pair.coupling_P(state_.S[i]);

    if (problem_.regime.regime() == Regime::critical) {
        if (!options_.block_grid)
            throw ConfigError("critical regime needs a block grid");
        std::vector<BlockState> init;
        init.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            init.push_back(BlockState{std::vector<double>(options_.block_grid->cells, initial_matrix_s_[i]), 0.0});
        blocks_ = std::make_unique<BlockEnsemble>(*options_.block_grid, pair.matrix(), std::move(init),
                                                  options_.block_substeps);
    }

    for (double v : state_.S)
        ledger_.fracture_mass += problem_.coeff.phi_star * v * problem_.grid.cell_volume();
    ledger_.matrix_mass = matrix_mass();
    initial_mass_ = ledger_.fracture_mass + ledger_.matrix_mass;
}

double MacroSolver::matrix_mass() const
{
    const double v = problem_.grid.cell_volume();
    double sum = 0.0;
    switch (problem_.regime.regime()) {
    case Regime::critical:
        for (const auto& st : blocks_->states())
            sum += block_mass(st, blocks_->grid()) * v;
        break;
    case Regime::moderate:
        for (double s : state_.S)
            sum += problem_.coeff.phi_hat_m * problem_.curves->coupling_P(s) * v;
        break;
    case Regime::very_high:
        for (double s : initial_matrix_s_)
            sum += problem_.coeff.phi_hat_m * s * v;
        break;
    }
    return sum;
}

std::vector<double> MacroSolver::matrix_saturation() const
{
    std::vector<double> out(state_.S.size());
    switch (problem_.regime.regime()) {
    case Regime::critical: {
        const BlockGrid& g = blocks_->grid();
        for (std::size_t c = 0; c < out.size(); ++c) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < g.cells; ++i) {
                num += blocks_->states()[c].s[i] * g.volume[i];
                den += g.volume[i];
            }
            out[c] = num / den;
        }
        break;
    }
    case Regime::moderate:
        for (std::size_t c = 0; c < out.size(); ++c)
            out[c] = problem_.curves->coupling_P(state_.S[c]);
        break;
    case Regime::very_high:
        out = initial_matrix_s_;
        break;
    }
    return out;
}

void MacroSolver::refresh_ledger_error()
{
    const double now = ledger_.fracture_mass + ledger_.matrix_mass;
    const double change = now - initial_mass_;
    const double inflow = ledger_.boundary_in + ledger_.source_in;
    const double scale = std::max({std::abs(initial_mass_), std::abs(now), flow_scale_, 1e-300});
    ledger_.relative_error = std::abs(change - inflow) / scale;
}

bool MacroSolver::try_step(double dt, StepRecord* record)
{
    const double t_new = state_.t + dt;
    const std::size_t n = state_.S.size();
    const CurvePair& pair = *problem_.curves;
    const Regime regime = problem_.regime.regime();
    try {
        const PressureSolution pr = pressure_step(state_.S, problem_, t_new);

        CouplingFn coupling;
        if (regime == Regime::moderate) {
            const double phm = problem_.coeff.phi_hat_m;
            const std::vector<double>& s_old = state_.S;
            coupling = [&pair, phm, dt, &s_old](const std::vector<double>& s, std::vector<double>& q,
                                                std::vector<double>& dq) {
                for (std::size_t i = 0; i < s.size(); ++i) {
                    q[i] = -phm * (pair.coupling_P(s[i]) - pair.coupling_P(s_old[i])) / dt;
                    dq[i] = -phm * pair.coupling_P_prime(s[i]) / dt;
                }
            };
        } else if (regime == Regime::critical) {
            coupling = [this, &pair, dt](const std::vector<double>& s, std::vector<double>& q,
                                         std::vector<double>& dq) {
                std::vector<double> b(s.size());
                for (std::size_t i = 0; i < s.size(); ++i)
                    b[i] = pair.coupling_P(s[i]);
                const auto trial = blocks_->advance(b, dt);
                for (std::size_t i = 0; i < s.size(); ++i) {
                    q[i] = trial.q_w[i];
                    dq[i] = trial.dq_db[i] * pair.coupling_P_prime(s[i]);
                }
            };
        }

        SaturationResult sat = saturation_step(state_.S, problem_, pr, coupling, t_new, dt);

        std::vector<double> q_w = sat.q_w;
        if (regime == Regime::critical) {
            std::vector<double> b(n);
            for (std::size_t i = 0; i < n; ++i)
                b[i] = pair.coupling_P(sat.S[i]);
            auto trial = blocks_->advance(b, dt);
            q_w = trial.q_w;
            blocks_->commit(std::move(trial));
        }

        // Ledger bookkeeping with the accepted saturation.
        SaturationSystem sys(state_.S, problem_, pr, coupling, t_new, dt);
        const double v = problem_.grid.cell_volume();
        const double b_in = sys.boundary_inflow(sat.S) * dt;
        const auto src = effective_sources(sat.S, problem_.sources, problem_.coeff.volume_ratio, t_new);
        double s_in = 0.0, q_in = 0.0, src_abs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s_in += src.w[i] * v * dt;
            src_abs += std::abs(src.w[i]) * v * dt;
            q_in += q_w[i] * v * dt;
        }
        ledger_.boundary_in += b_in;
        ledger_.source_in += s_in;
        ledger_.transfer_in += q_in;
        flow_scale_ += std::abs(b_in) + src_abs;

        state_.S = std::move(sat.S);
        state_.P = pr.P;
        state_.t = t_new;
        ledger_.fracture_mass = 0.0;
        for (double s : state_.S)
            ledger_.fracture_mass += problem_.coeff.phi_star * s * v;
        ledger_.matrix_mass = matrix_mass();
        refresh_ledger_error();

        ++step_count_;
        if (record) {
            record->step = step_count_;
            record->t = state_.t;
            record->dt = dt;
            record->min_s = *std::min_element(state_.S.begin(), state_.S.end());
            record->max_s = *std::max_element(state_.S.begin(), state_.S.end());
            double sum = 0.0;
            for (double s : state_.S)
                sum += s;
            record->mean_s = sum / static_cast<double>(n);
            record->newton_iterations = sat.iterations;
            record->ledger = ledger_;
        }
        return true;
    } catch (const SolverError&) {
        return false;
    } catch (const DomainError&) {
        return false;
    }
}

std::vector<StepRecord> MacroSolver::run(const std::function<void(const StepRecord&)>& on_step)
{
    std::vector<StepRecord> records;
    double dt = options_.dt_init;
    int successes = 0;
    const double t_end = options_.t_end;
    while (state_.t < t_end && static_cast<int>(records.size()) < options_.max_steps) {
        double h = std::min(dt, t_end - state_.t);
        if (t_end - (state_.t + h) < 1e-9 * h)
            h = t_end - state_.t;
        int halvings = 0;
        StepRecord rec;
        while (!try_step(h, &rec)) {
            if (++halvings > options_.max_halvings) {
                std::ostringstream msg;
                msg << "step " << step_count_ + 1 << " at t=" << state_.t << " failed after "
                    << options_.max_halvings << " time step halvings";
                throw StepFailure(msg.str(), state_);
            }
            h *= 0.5;
            dt = h;
            successes = 0;
        }
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

} // namespace dpflow
