#pragma once
// Matrix-block imbibition problem: Phi_m ds/dt = div_y(K grad_y beta_m(s)) on
// Y_m with s = boundary_s on the matrix-fracture interface. One block per
// macro cell; blocks never talk to each other and carry no pressure unknown.

#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/petrophysics.hpp"

#include <cstddef>
#include <vector>

namespace dpflow {

struct BlockGrid {
    struct Link {
        std::size_t a;
        std::size_t b;
        double trans;
    };
    struct InterfaceFace {
        std::size_t cell;
        double trans;
    };

    int dim = 1;
    std::size_t cells = 0;
    std::vector<double> volume;
    std::vector<double> porosity;
    std::vector<Link> links;
    std::vector<InterfaceFace> interface;
    std::size_t bandwidth = 0;
    double measure = 0.0; // |Y_m|
};

// Finite volume grid on the matrix cells of a cell geometry, periodic
// neighbours included; faces shared with fracture cells become Dirichlet faces.
BlockGrid block_grid_from_cell(const CellGeometry& geom);

struct BlockState {
    std::vector<double> s;
    double t = 0.0;
};

struct BlockOptions {
    double newton_tol = 1e-14;  // max nodal residual in saturation units
    double accept_tol = 1e-11;  // accepted when Newton stagnates below this
    int max_iter = 40;
    int max_halvings = 8;
};

struct BlockStepInfo {
    int iterations = 0;
    double residual = 0.0;
};

// Backward Euler step. When ds_db is non-null it holds d s_old / d boundary_s
// on entry (empty means zero) and d s_new / d boundary_s on exit.
BlockState block_step(const BlockState& state, const BlockGrid& grid, const MediumCurves& matrix,
                      double boundary_s, double dt, const BlockOptions& options = {},
                      BlockStepInfo* info = nullptr, std::vector<double>* ds_db = nullptr);

// Q_w = -(1/|Y_m|) sum Phi_m (s_new - s_old) / dt dV.
double transfer_source(const BlockState& old_state, const BlockState& new_state,
                       const BlockGrid& grid, double dt);

// Discrete flux of K grad beta_m(s) into the block through the interface.
double interface_flux(const BlockState& state, const BlockGrid& grid, const MediumCurves& matrix,
                      double boundary_s);

// (1/|Y_m|) sum Phi_m s dV.
double block_mass(const BlockState& state, const BlockGrid& grid);

BlockState equilibrium_state(const BlockGrid& grid, double boundary_s);

// sum over steps and cells of (s_a - s_b)(beta(s_a) - beta(s_b)) dV.
double uniqueness_energy_check(const std::vector<BlockState>& run_a,
                               const std::vector<BlockState>& run_b, const BlockGrid& grid,
                               const MediumCurves& matrix);

// One block per macro cell sharing a grid. advance() is a pure function of
// the committed states, so a rejected macro step simply discards the trial.
class BlockEnsemble {
public:
    struct Trial {
        std::vector<BlockState> states;
        std::vector<double> q_w;
        std::vector<double> dq_db; // d Q_w / d boundary_s per block
    };

    BlockEnsemble(BlockGrid grid, const MediumCurves& matrix, std::vector<BlockState> initial,
                  int substeps = 1, BlockOptions options = {});

    std::size_t size() const { return states_.size(); }
    const BlockGrid& grid() const { return grid_; }
    const std::vector<BlockState>& states() const { return states_; }
    const std::vector<double>& q_w() const { return q_w_; }
    std::vector<double> q_n() const;

    Trial advance(const std::vector<double>& boundary_s, double dt) const;
    void commit(Trial trial);

private:
    BlockGrid grid_;
    const MediumCurves* matrix_;
    std::vector<BlockState> states_;
    std::vector<double> q_w_;
    int substeps_;
    BlockOptions options_;
};

} // namespace dpflow
