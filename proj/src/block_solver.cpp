#include "dpflow/block_solver.hpp"

#include "dpflow/error.hpp"
#include "dpflow/linalg.hpp"
#include "dpflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dpflow {

BlockGrid block_grid_from_cell(const CellGeometry& geom)
{
    BlockGrid grid;
    grid.dim = geom.dim;
    const std::size_t n = geom.n;
    const double h = geom.h();
    const double area = geom.dim == 1 ? 1.0 : h;

    std::vector<std::int64_t> compact(geom.cells(), -1);
    for (std::size_t c = 0; c < geom.cells(); ++c)
        if (geom.matrix_mask[c]) {
            compact[c] = static_cast<std::int64_t>(grid.cells++);
            grid.volume.push_back(std::pow(h, geom.dim));
            grid.porosity.push_back(geom.porosity_m[c]);
        }
    if (grid.cells == 0)
        throw ConfigError("measure_m must be positive");

    auto perm_along = [&](std::size_t c, int axis) {
        return axis == 0 ? geom.perm[c].xx : geom.perm[c].yy;
    };
    auto neighbour = [&](std::size_t c, int axis, int dir) {
        if (geom.dim == 1)
            return (c + n + static_cast<std::size_t>(dir + 1) - 1) % n;
        std::size_t i = c % n, j = c / n;
        if (axis == 0)
            i = (i + n + static_cast<std::size_t>(dir + 1) - 1) % n;
        else
            j = (j + n + static_cast<std::size_t>(dir + 1) - 1) % n;
        return i + n * j;
    };

    for (std::size_t c = 0; c < geom.cells(); ++c) {
        if (compact[c] < 0)
            continue;
        const auto a = static_cast<std::size_t>(compact[c]);
        for (int axis = 0; axis < geom.dim; ++axis) {
            const double ka = perm_along(c, axis);
            for (int dir : {-1, 1}) {
                const std::size_t nb = neighbour(c, axis, dir);
                if (compact[nb] >= 0) {
                    if (dir < 0)
                        continue;
                    const double kb = perm_along(nb, axis);
                    const double t = area / (0.5 * h / ka + 0.5 * h / kb);
                    const auto b = static_cast<std::size_t>(compact[nb]);
                    grid.links.push_back({a, b, t});
                    grid.bandwidth = std::max(grid.bandwidth, a > b ? a - b : b - a);
                } else {
                    grid.interface.push_back({a, area * ka / (0.5 * h)});
                }
            }
        }
    }
    if (grid.interface.empty())
        throw ConfigError("matrix block has no interface with the fracture part");
    for (double v : grid.volume)
        grid.measure += v;
    return grid;
}

namespace {

struct Residual {
    std::vector<double> r;
    double scaled = 0.0;
};

Residual block_residual(const std::vector<double>& s, const std::vector<double>& s_old,
                        const BlockGrid& grid, const MediumCurves& m, double w_bdry, double dt)
{
    Residual res;
    res.r.assign(grid.cells, 0.0);
    std::vector<double> w(grid.cells);
    for (std::size_t i = 0; i < grid.cells; ++i) {
        w[i] = m.beta(s[i]);
        res.r[i] = grid.porosity[i] * grid.volume[i] * (s[i] - s_old[i]) / dt;
    }
    for (const auto& l : grid.links) {
        const double f = l.trans * (w[l.b] - w[l.a]);
        res.r[l.a] -= f;
        res.r[l.b] += f;
    }
    for (const auto& f : grid.interface)
        res.r[f.cell] -= f.trans * (w_bdry - w[f.cell]);
    for (std::size_t i = 0; i < grid.cells; ++i)
        res.scaled = std::max(res.scaled,
                              std::abs(res.r[i]) * dt / (grid.porosity[i] * grid.volume[i]));
    return res;
}

void assemble_jacobian(linalg::BandedMatrix& jac, const std::vector<double>& s,
                       const BlockGrid& grid, const MediumCurves& m, double dt)
{
    jac.set_zero();
    std::vector<double> a(grid.cells);
    for (std::size_t i = 0; i < grid.cells; ++i) {
        a[i] = m.alpha(s[i]);
        jac.add(i, i, grid.porosity[i] * grid.volume[i] / dt);
    }
    for (const auto& l : grid.links) {
        jac.add(l.a, l.a, l.trans * a[l.a]);
        jac.add(l.a, l.b, -l.trans * a[l.b]);
        jac.add(l.b, l.b, l.trans * a[l.b]);
        jac.add(l.b, l.a, -l.trans * a[l.a]);
    }
    for (const auto& f : grid.interface)
        jac.add(f.cell, f.cell, f.trans * a[f.cell]);
}

double clamp01(double v)
{
    return std::clamp(v, 0.0, 1.0);
}

} // namespace

BlockState block_step(const BlockState& state, const BlockGrid& grid, const MediumCurves& matrix,
                      double boundary_s, double dt, const BlockOptions& options,
                      BlockStepInfo* info, std::vector<double>* ds_db)
{
    if (!(boundary_s >= 0.0 && boundary_s <= 1.0))
        throw DomainError("block boundary saturation outside [0, 1]");
    if (!(dt > 0.0))
        throw DomainError("block time step must be positive");
    if (state.s.size() != grid.cells)
        throw DomainError("block state does not match its grid");

    const double w_bdry = matrix.beta(boundary_s);
    std::vector<double> s = state.s;
    Residual res = block_residual(s, state.s, grid, matrix, w_bdry, dt);
    linalg::BandedMatrix jac(grid.cells, grid.bandwidth, grid.bandwidth);

    int it = 0;
    for (; it < options.max_iter && res.scaled > options.newton_tol; ++it) {
        assemble_jacobian(jac, s, grid, matrix, dt);
        std::vector<double> delta(res.r.size());
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] = -res.r[i];
        jac.solve_in_place(delta);

        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k <= options.max_halvings; ++k, lambda *= 0.5) {
            std::vector<double> trial(s.size());
            for (std::size_t i = 0; i < s.size(); ++i)
                trial[i] = clamp01(s[i] + lambda * delta[i]);
            Residual tr = block_residual(trial, state.s, grid, matrix, w_bdry, dt);
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
    if (info) {
        info->iterations = it;
        info->residual = res.scaled;
    }
    if (!(res.scaled <= options.accept_tol))
        throw SolverError("block Newton did not converge (residual " + std::to_string(res.scaled) +
                          " after " + std::to_string(it) + " iterations)");

    if (ds_db) {
        // J ds_new/db = (Phi V / dt) ds_old/db + sum_interface T alpha(b) e_i
        assemble_jacobian(jac, s, grid, matrix, dt);
        std::vector<double> rhs(grid.cells, 0.0);
        if (ds_db->size() == grid.cells)
            for (std::size_t i = 0; i < grid.cells; ++i)
                rhs[i] = grid.porosity[i] * grid.volume[i] / dt * (*ds_db)[i];
        const double a_b = matrix.alpha(boundary_s);
        for (const auto& f : grid.interface)
            rhs[f.cell] += f.trans * a_b;
        jac.solve_in_place(rhs);
        *ds_db = std::move(rhs);
    }
    return BlockState{std::move(s), state.t + dt};
}

double block_mass(const BlockState& state, const BlockGrid& grid)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.cells; ++i)
        sum += grid.porosity[i] * state.s[i] * grid.volume[i];
    return sum / grid.measure;
}

double transfer_source(const BlockState& old_state, const BlockState& new_state,
                       const BlockGrid& grid, double dt)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.cells; ++i)
        sum += grid.porosity[i] * (new_state.s[i] - old_state.s[i]) * grid.volume[i];
    return -sum / (grid.measure * dt);
}

double interface_flux(const BlockState& state, const BlockGrid& grid, const MediumCurves& matrix,
                      double boundary_s)
{
    const double w_bdry = matrix.beta(boundary_s);
    double sum = 0.0;
    for (const auto& f : grid.interface)
        sum += f.trans * (w_bdry - matrix.beta(state.s[f.cell]));
    return sum;
}

BlockState equilibrium_state(const BlockGrid& grid, double boundary_s)
{
    if (!(boundary_s >= 0.0 && boundary_s <= 1.0))
        throw DomainError("block boundary saturation outside [0, 1]");
    return BlockState{std::vector<double>(grid.cells, boundary_s), 0.0};
}

double uniqueness_energy_check(const std::vector<BlockState>& run_a,
                               const std::vector<BlockState>& run_b, const BlockGrid& grid,
                               const MediumCurves& matrix)
{
    if (run_a.size() != run_b.size())
        throw DomainError("uniqueness check needs runs of equal length");
    double sum = 0.0;
    for (std::size_t k = 0; k < run_a.size(); ++k) {
        if (run_a[k].s.size() != grid.cells || run_b[k].s.size() != grid.cells)
            throw DomainError("uniqueness check: state does not match the grid");
        for (std::size_t i = 0; i < grid.cells; ++i) {
            const double sa = run_a[k].s[i], sb = run_b[k].s[i];
            sum += (sa - sb) * (matrix.beta(sa) - matrix.beta(sb)) * grid.volume[i];
        }
    }
    return sum;
}

BlockEnsemble::BlockEnsemble(BlockGrid grid, const MediumCurves& matrix,
                             std::vector<BlockState> initial, int substeps, BlockOptions options)
    : grid_(std::move(grid)), matrix_(&matrix), states_(std::move(initial)),
      q_w_(states_.size(), 0.0), substeps_(substeps), options_(options)
{
    if (substeps_ < 1)
        throw ConfigError("block sub-cycling factor must be >= 1");
    for (const auto& st : states_)
        if (st.s.size() != grid_.cells)
            throw ConfigError("initial block state does not match the block grid");
}

std::vector<double> BlockEnsemble::q_n() const
{
    std::vector<double> out(q_w_.size());
    for (std::size_t i = 0; i < q_w_.size(); ++i)
        out[i] = -q_w_[i];
    return out;
}

BlockEnsemble::Trial BlockEnsemble::advance(const std::vector<double>& boundary_s, double dt) const
{
    if (boundary_s.size() != states_.size())
        throw DomainError("one boundary saturation per block expected");
    Trial trial;
    trial.states.resize(states_.size());
    trial.q_w.assign(states_.size(), 0.0);
    trial.dq_db.assign(states_.size(), 0.0);
    const double sub = dt / substeps_;
    parallel_for(states_.size(), [&](std::size_t c) {
        BlockState st = states_[c];
        std::vector<double> ds_db;
        for (int k = 0; k < substeps_; ++k)
            st = block_step(st, grid_, *matrix_, boundary_s[c], sub, options_, nullptr, &ds_db);
        double dmass = 0.0;
        for (std::size_t i = 0; i < grid_.cells; ++i)
            dmass += grid_.porosity[i] * ds_db[i] * grid_.volume[i];
        trial.q_w[c] = transfer_source(states_[c], st, grid_, dt);
        trial.dq_db[c] = -dmass / (grid_.measure * dt);
        trial.states[c] = std::move(st);
    });
    return trial;
}

void BlockEnsemble::commit(Trial trial)
{
    states_ = std::move(trial.states);
    q_w_ = std::move(trial.q_w);
}

} // namespace dpflow
