#include "dpflow/runner.hpp"

#include "dpflow/block_solver.hpp"
#include "dpflow/convergence.hpp"
#include "dpflow/error.hpp"
#include "dpflow/output.hpp"
#include "dpflow/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <ostream>

#ifndef DPFLOW_VERSION
#define DPFLOW_VERSION "0.0.0-unknown"
#endif

namespace dpflow {

namespace fs = std::filesystem;

namespace {

struct Context {
    ScenarioConfig config;
    ConfigDocument doc;
    fs::path out;
    RunManifest manifest;
    std::ostream& log;

    std::string file(const std::string& name)
    {
        manifest.files.push_back(name);
        return (out / name).string();
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool snapshot_due(const ScenarioConfig& c, int step, bool last)
{
    if (step == 0 || last)
        return true;
    return c.snapshot_every > 0 && step % c.snapshot_every == 0;
}

void run_curves(Context& ctx)
{
    const CurvePair pair = make_curve_pair(ctx.config);
    const auto& f = pair.fracture();
    const auto& m = pair.matrix();
    CsvWriter csv(ctx.file("curves.csv"),
                  {"s", "pc_f", "pc_m", "mobw_f", "mobn_f", "mobw_m", "mobn_m", "alpha_f", "beta_f", "alpha_m",
                   "beta_m", "Gw_f", "Gn_f", "Gw_m", "Gn_m", "P_of_S"});
    for (int i = 0; i <= 1000; ++i) {
        const double s = i / 1000.0;
        csv.row({s, f.pc(s), m.pc(s), f.mob_w(s), f.mob_n(s), m.mob_w(s), m.mob_n(s), f.alpha(s), f.beta(s),
                 m.alpha(s), m.beta(s), f.g_w(s), f.g_n(s), m.g_w(s), m.g_n(s), pair.coupling_P(s)});
    }
}

void write_correctors(Context& ctx, const CellGeometry& cell, const EffectiveProps& props)
{
    const std::size_t n = cell.n;
    const std::size_t ny = cell.dim == 1 ? 1 : n;
    for (std::size_t j = 0; j < props.xi.size(); ++j) {
        const std::string name = "xi_" + std::to_string(j + 1) + ".vtk";
        write_vtk_points(ctx.file(name), "cell corrector " + std::to_string(j + 1), n, ny, cell.h(),
                         cell.dim == 1 ? 1.0 : cell.h(), {{"xi", &props.xi[j].values}});
    }
}

void run_homogenize(Context& ctx)
{
    const CellGeometry cell = make_cell_geometry(ctx.config);
    for (const auto& w : cell.warnings)
        ctx.log << "warning: " << w << "\n";
    const EffectiveProps props = homogenize(cell, ctx.config.porosity_fracture);
    CsvWriter csv(ctx.file("effective.csv"), {"quantity", "value"});
    csv.row("K11", {props.k_star[0][0]});
    csv.row("K12", {props.k_star[0][1]});
    csv.row("K21", {props.k_star[1][0]});
    csv.row("K22", {props.k_star[1][1]});
    csv.row("phi_star", {props.phi_star});
    csv.row("phi_hat_m", {props.phi_hat_m});
    csv.row("measure_m", {props.measure_m});
    csv.row("measure_f", {props.measure_f});
    if (ctx.config.write_correctors)
        write_correctors(ctx, cell, props);
    ctx.log << "K* = [" << format_number(props.k_star[0][0]) << ", " << format_number(props.k_star[0][1])
            << "; " << format_number(props.k_star[1][0]) << ", " << format_number(props.k_star[1][1]) << "]\n";
}

void run_macro(Context& ctx)
{
    const ScenarioConfig& c = ctx.config;
    const CurvePair pair = make_curve_pair(c);
    const CellGeometry cell = make_cell_geometry(c);
    for (const auto& w : cell.warnings)
        ctx.log << "warning: " << w << "\n";
    const EffectiveProps props = homogenize(cell, c.porosity_fracture);
    MacroProblem problem = make_macro_problem(c, props, pair);
    const StructuredGrid grid = problem.grid;
    MacroSolver solver(problem, std::vector<double>(grid.cells(), c.initial_saturation),
                       make_macro_options(c, cell));

    CsvWriter csv(ctx.file("macro_series.csv"),
                  {"step", "t", "dt", "min_S", "max_S", "mean_S", "newton_iterations", "fracture_mass",
                   "matrix_mass", "boundary_in", "source_in", "transfer_in", "ledger_rel_error"});
    int snap = 0;
    auto snapshot = [&](const MacroState& st, const std::vector<double>& sm) {
        const double hy = grid.dim() == 1 ? 1.0 : grid.hy();
        write_vtk_cells(ctx.file(snapshot_name("S", snap)), "S t=" + format_number(st.t), grid.nx(), grid.ny(),
                        grid.hx(), hy, {{"S", &st.S}, {"S_matrix", &sm}});
        write_vtk_cells(ctx.file(snapshot_name("P", snap)), "P t=" + format_number(st.t), grid.nx(), grid.ny(),
                        grid.hx(), hy, {{"P", &st.P}});
        ++snap;
    };
    snapshot(solver.state(), solver.matrix_saturation());
    const double t_end = c.t_end;
    try {
        solver.run([&](const StepRecord& r) {
            const auto& l = r.ledger;
            csv.row({static_cast<double>(r.step), r.t, r.dt, r.min_s, r.max_s, r.mean_s,
                     static_cast<double>(r.newton_iterations), l.fracture_mass, l.matrix_mass, l.boundary_in,
                     l.source_in, l.transfer_in, l.relative_error});
            const bool last = r.t >= t_end;
            if (snapshot_due(c, r.step, last))
                snapshot(solver.state(), solver.matrix_saturation());
        });
    } catch (const StepFailure& e) {
        snapshot(e.state(), solver.matrix_saturation());
        throw;
    }
    if (solver.state().t < t_end)
        throw SolverError("macro run stopped after time.max_steps = " + std::to_string(c.max_steps) +
                          " steps at t=" + format_number(solver.state().t) + " < t_end");
    ctx.manifest.notes.push_back({"regime", to_string(problem.regime.regime())});
    ctx.manifest.notes.push_back({"final_ledger_rel_error", format_number(solver.ledger().relative_error)});
}

void run_micro(Context& ctx, double epsilon)
{
    const ScenarioConfig& c = ctx.config;
    const CurvePair pair = make_curve_pair(c);
    const CellGeometry cell = make_cell_geometry(c, c.micro_resolution);
    MicroProblem problem = make_micro_problem(c, cell, epsilon, pair);
    const double s0 = c.initial_saturation;
    MicroState init = equilibrium_initial_state(problem, [s0](double, double) { return s0; });
    MicroSolver solver(problem, std::move(init), make_micro_options(c));
    const MicroGrid& g = solver.problem().grid;
    std::vector<double> medium(g.cells());
    for (std::size_t i = 0; i < g.cells(); ++i)
        medium[i] = g.is_matrix(i) ? 1.0 : 0.0;

    CsvWriter csv(ctx.file("micro_series.csv"),
                  {"step", "t", "dt", "min_S_f", "max_S_f", "mean_S_f", "min_S_m", "max_S_m", "mean_S_m", "mass",
                   "ledger_rel_error", "phase_pressure_mismatch", "pc_mismatch"});
    int snap = 0;
    auto snapshot = [&](const MicroState& st) {
        const auto& gr = g.grid;
        const double hy = gr.dim() == 1 ? 1.0 : gr.hy();
        write_vtk_cells(ctx.file(snapshot_name("S", snap)), "micro S t=" + format_number(st.t), gr.nx(), gr.ny(),
                        gr.hx(), hy, {{"S", &st.S}, {"medium", &medium}});
        const auto pw = st.p_w(g, pair);
        const auto pn = st.p_n(g, pair);
        write_vtk_cells(ctx.file(snapshot_name("P", snap)), "micro P t=" + format_number(st.t), gr.nx(), gr.ny(),
                        gr.hx(), hy, {{"P", &st.P}, {"p_w", &pw}, {"p_n", &pn}});
        ++snap;
    };
    snapshot(solver.state());
    const double t_end = c.t_end;
    solver.run([&](const MicroRecord& r) {
        csv.row({static_cast<double>(r.step), r.t, r.dt, r.min_s_f, r.max_s_f, r.mean_s_f, r.min_s_m, r.max_s_m,
                 r.mean_s_m, r.mass, r.ledger_error, r.pw_mismatch, r.pc_mismatch});
        if (snapshot_due(c, r.step, r.t >= t_end))
            snapshot(solver.state());
    });
    ctx.manifest.notes.push_back({"epsilon", format_number(g.epsilon)});
    ctx.manifest.notes.push_back({"micro_cells", std::to_string(g.cells())});
}

void run_block_demo(Context& ctx)
{
    const ScenarioConfig& c = ctx.config;
    const CurvePair pair = make_curve_pair(c);
    const CellGeometry cell = make_cell_geometry(c);
    const BlockGrid grid = block_grid_from_cell(cell);
    BlockState state{std::vector<double>(grid.cells, c.demo_initial_s), 0.0};
    double pv = 0.0;
    for (std::size_t i = 0; i < grid.cells; ++i)
        pv += grid.porosity[i] * grid.volume[i];
    const double mass_scale = grid.measure / pv;

    CsvWriter csv(ctx.file("block_series.csv"), {"t", "boundary_s", "mean_s", "Q_w"});
    csv.row({0.0, demo_boundary_value(c, 0.0), block_mass(state, grid) * mass_scale, 0.0});
    while (state.t < c.demo_t_end) {
        double dt = std::min(c.demo_dt, c.demo_t_end - state.t);
        if (c.demo_t_end - (state.t + dt) < 1e-9 * dt)
            dt = c.demo_t_end - state.t;
        const double b = demo_boundary_value(c, state.t + dt);
        BlockState next = block_step(state, grid, pair.matrix(), b, dt);
        const double q = transfer_source(state, next, grid, dt);
        state = std::move(next);
        csv.row({state.t, b, block_mass(state, grid) * mass_scale, q});
    }
    ctx.manifest.notes.push_back({"block_cells", std::to_string(grid.cells)});
}

void run_convergence(Context& ctx, const std::vector<double>& epsilons)
{
    const CurvePair pair = make_curve_pair(ctx.config);
    const ConvergenceSetup setup = make_convergence_setup(ctx.config, pair);
    const HomogenizedReference ref = homogenized_reference(setup);
    ctx.log << "homogenized reference: " << setup.macro_cells << " cells, " << format_number(ref.runtime_s)
            << " s\n";
    CsvWriter csv(ctx.file("convergence.csv"), {"epsilon", "errL2_fracture", "errL2_matrix", "runtime_s"});
    for (double eps : epsilons) {
        const ConvergenceRow row = convergence_point(setup, ref, eps);
        csv.row({row.epsilon, row.err_fracture, row.err_matrix, row.runtime_s});
        ctx.log << "epsilon " << format_number(row.epsilon) << ": fracture " << format_number(row.err_fracture)
                << ", matrix " << format_number(row.err_matrix) << "\n";
    }
    ctx.manifest.timings.push_back({"homogenized_reference", ref.runtime_s});
    ctx.manifest.notes.push_back({"theta", format_number(setup.theta)});
}

} // namespace

const std::vector<std::string>& known_actions()
{
    static const std::vector<std::string> actions{"curves", "homogenize", "macro", "micro", "block-demo",
                                                  "convergence"};
    return actions;
}

std::string usage(const std::string& program)
{
    std::string s = "usage: " + program +
                    " <action> --config PATH [--out-dir PATH] [--theta X] [--epsilon E1,E2,...]\nactions:";
    for (const auto& a : known_actions())
        s += " " + a;
    s += "\nworkers: DPFLOW_WORKERS (default 1)\n";
    return s;
}

std::string version_string()
{
    return DPFLOW_VERSION;
}

int dispatch(const std::string& action, const std::string& config_path, const RunOverrides& overrides,
             std::ostream& log, std::ostream& err)
{
    const auto& actions = known_actions();
    if (std::find(actions.begin(), actions.end(), action) == actions.end()) {
        err << "unknown action '" << action << "'\n" << usage("dpflow");
        return exit_usage;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ConfigDocument doc = ConfigDocument::load(config_path);
        ScenarioConfig config = ScenarioConfig::from_document(doc);
        if (overrides.theta)
            config.theta = *overrides.theta;
        if (overrides.epsilons)
            config.epsilons = *overrides.epsilons;
        if (overrides.epsilons && !overrides.epsilons->empty())
            config.micro_epsilon = overrides.epsilons->front();
        require_valid(config);

        Context ctx{config, doc, fs::path(overrides.out_dir.value_or(config.output_directory)), {}, log};
        fs::create_directories(ctx.out);
        ctx.manifest.action = action;
        ctx.manifest.config_path = config_path;
        ctx.manifest.config_hash = content_hash(doc.text());
        ctx.manifest.version = version_string();

        if (action == "curves")
            run_curves(ctx);
        else if (action == "homogenize")
            run_homogenize(ctx);
        else if (action == "macro")
            run_macro(ctx);
        else if (action == "micro")
            run_micro(ctx, config.micro_epsilon);
        else if (action == "block-demo")
            run_block_demo(ctx);
        else
            run_convergence(ctx, config.epsilons);

        ctx.manifest.timings.push_back({"total", seconds_since(t0)});
        ctx.manifest.write((ctx.out / "manifest.txt").string());
        log << action << ": wrote " << ctx.manifest.files.size() << " files to " << ctx.out.string() << "\n";
        return exit_ok;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const fs::filesystem_error& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    }
}

} // namespace dpflow
