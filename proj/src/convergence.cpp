#include "dpflow/convergence.hpp"

#include "dpflow/block_solver.hpp"
#include "dpflow/error.hpp"
#include "dpflow/macro_solver.hpp"

#include <algorithm>
#include <chrono>

namespace dpflow {

namespace {

void check_setup(const ConvergenceSetup& s)
{
    if (!s.curves)
        throw ConfigError("convergence setup has no curves");
    if (s.cell.dim != 2)
        throw ConfigError("convergence study needs a 2D cell");
    if (!(s.t_end > 0.0) || !(s.dt > 0.0))
        throw ConfigError("convergence study needs positive t_end and dt");
    if (s.macro_cells < 2)
        throw ConfigError("convergence study needs at least 2 macro cells");
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

HomogenizedReference homogenized_reference(const ConvergenceSetup& setup)
{
    check_setup(setup);
    const auto t0 = std::chrono::steady_clock::now();
    const EffectiveProps props = homogenize(setup.cell, setup.fracture_porosity);

    MacroProblem p;
    p.grid = StructuredGrid::line(setup.macro_cells, 1.0);
    p.curves = setup.curves;
    p.coeff = MacroCoefficients::from(props);
    if (setup.k_star == KStarSource::two_point)
        p.coeff.k_star = tpfa_effective_tensor(setup.cell);
    p.boundary.tags.dirichlet = {true, true, false, false};
    p.boundary.pressure = setup.boundary_p;
    p.boundary.saturation = setup.boundary_s;
    p.sources.f_inj.assign(setup.macro_cells, 0.0);
    p.sources.f_prod.assign(setup.macro_cells, 0.0);
    p.gravity = {setup.gravity, 0.0};
    p.regime.theta = setup.theta;

    MacroRunOptions o;
    o.t_end = setup.t_end;
    o.dt_init = o.dt_max = setup.dt;
    if (p.regime.regime() == Regime::critical)
        o.block_grid = block_grid_from_cell(setup.cell);

    MacroSolver solver(p, std::vector<double>(setup.macro_cells, setup.initial_s), o);
    double ledger = 0.0;
    solver.run([&](const StepRecord& r) { ledger = std::max(ledger, r.ledger.relative_error); });

    HomogenizedReference ref;
    ref.grid = p.grid;
    ref.S = solver.state().S;
    ref.matrix_s = solver.matrix_saturation();
    ref.ledger_error = ledger;
    ref.runtime_s = seconds_since(t0);
    return ref;
}

ConvergenceRow convergence_point(const ConvergenceSetup& setup, const HomogenizedReference& ref,
                                 double epsilon)
{
    check_setup(setup);
    const auto t0 = std::chrono::steady_clock::now();
    MicroProblem p;
    p.grid = build_micro_grid(setup.cell, epsilon, setup.theta, setup.fracture_porosity,
                              MicroLayout::strip);
    p.curves = setup.curves;
    p.boundary.tags.dirichlet = {true, true, false, false};
    p.boundary.pressure = setup.boundary_p;
    p.boundary.saturation = setup.boundary_s;
    p.gravity = {setup.gravity, 0.0};
    const double s0 = setup.initial_s;
    MicroState init = equilibrium_initial_state(p, [s0](double, double) { return s0; });

    MicroRunOptions o;
    o.t_end = setup.t_end;
    o.dt_init = o.dt_max = setup.dt;
    MicroSolver solver(p, std::move(init), o);
    double ledger = 0.0;
    solver.run([&](const MicroRecord& r) { ledger = std::max(ledger, r.ledger_error); });

    const ComparisonNorms e = restrict_compare(solver.problem().grid, solver.state(), ref.grid, ref.S,
                                               ref.matrix_s);
    ConvergenceRow row;
    row.epsilon = solver.problem().grid.epsilon;
    row.err_fracture = e.fracture;
    row.err_matrix = e.matrix;
    row.micro_cells = solver.problem().grid.cells();
    row.ledger_error = ledger;
    row.runtime_s = seconds_since(t0);
    return row;
}

std::vector<ConvergenceRow> convergence_study(const ConvergenceSetup& setup,
                                              const std::vector<double>& epsilons)
{
    const HomogenizedReference ref = homogenized_reference(setup);
    std::vector<ConvergenceRow> rows;
    for (double eps : epsilons)
        rows.push_back(convergence_point(setup, ref, eps));
    return rows;
}

} // namespace dpflow
