#pragma once
// Fine-scale two-medium reference: the unit cell repeated with period
// epsilon, matrix permeability scaled by epsilon^theta, and the interface
// conditions (continuous phase pressures and phase fluxes, capillary
// equilibrium of the one-sided saturation traces) resolved face by face.

#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/macro_solver.hpp"
#include "dpflow/petrophysics.hpp"
#include "dpflow/structured_grid.hpp"

#include <array>
#include <functional>
#include <vector>

namespace dpflow {

// full: Omega = (0,1)^d tiled by 1/epsilon cells per axis.
// strip: 2D only, Omega = (0,1) x (0,epsilon), one row of cells; it stands
//        in for a 1D macro problem with no-flow top and bottom.
enum class MicroLayout { full, strip };

struct MicroGrid {
    StructuredGrid grid = StructuredGrid::line(1, 1.0);
    double epsilon = 1.0;
    double theta = 2.0;
    std::size_t per_cell = 0;
    MicroLayout layout = MicroLayout::full;
    std::vector<Medium> medium;
    std::vector<double> porosity;
    std::vector<double> perm_x; // scaled on matrix cells
    std::vector<double> perm_y;
    double matrix_scale = 1.0;  // epsilon^theta

    std::size_t cells() const { return grid.cells(); }
    bool is_matrix(std::size_t c) const { return medium[c] == Medium::matrix; }
};

// The cell geometry's resolution is the number of fine cells per epsilon-cell
// and axis; fracture porosity is uniform.
MicroGrid build_micro_grid(const CellGeometry& cell, double epsilon, double theta,
                           double fracture_porosity, MicroLayout layout = MicroLayout::full);

struct MicroSources {
    // Rates per micro cell; zero on matrix cells.
    std::vector<double> f_inj;
    std::vector<double> f_prod;
    double s_inj_w = 1.0;
    double t_stop = std::numeric_limits<double>::infinity();
};

struct MicroProblem {
    MicroGrid grid;
    const CurvePair* curves = nullptr;
    MacroBoundary boundary; // Gamma_1 data apply to fracture cells on the outer boundary
    MicroSources sources;
    std::array<double, 2> gravity{0.0, 0.0};
};

struct MicroState {
    std::vector<double> S; // own-medium saturation per cell
    std::vector<double> P; // own-medium global pressure per cell
    double t = 0.0;

    std::vector<double> p_w(const MicroGrid& grid, const CurvePair& pair) const;
    std::vector<double> p_n(const MicroGrid& grid, const CurvePair& pair) const;
};

// Capillary-equilibrium trace on an interface face: sigma_f on the fracture
// side, sigma_m = P(sigma_f) on the matrix side, with the Kirchhoff flux
// continuous: t_f (beta_f(S_f) - beta_f(sigma_f)) = t_m (beta_m(sigma_m) - beta_m(S_m)).
struct InterfaceTrace {
    double sigma_f = 0.0;
    double sigma_m = 0.0;
    double flux = 0.0;   // capillary wetting flux fracture -> matrix
    double d_sf = 0.0;   // d flux / d S_f
    double d_sm = 0.0;   // d flux / d S_m
    double mismatch = 0.0; // |t_f(...) - t_m(...)| at the returned trace
};
InterfaceTrace interface_trace(const CurvePair& pair, double s_f, double s_m, double t_f, double t_m);

struct MicroPressure {
    std::vector<double> P;
    std::vector<double> interior_flux;
    std::vector<double> boundary_flux;
    double relative_residual = 0.0;
    // Largest interface-face disagreement of the phase pressures seen from
    // the two sides, and of the capillary pressures of the two traces.
    double pw_mismatch = 0.0;
    double pn_mismatch = 0.0;
    double pc_mismatch = 0.0;
};

MicroPressure micro_pressure_step(const std::vector<double>& S, const MicroProblem& problem, double t);

struct MicroStepInfo {
    int iterations = 0;
    double residual = 0.0;
    double boundary_in = 0.0; // wetting inflow over the step
    double source_in = 0.0;
    MicroPressure pressure;
};

// One sequential implicit step. Throws SolverError on Newton failure.
MicroState micro_step(const MicroState& state, const MicroProblem& problem, double dt,
                      MicroStepInfo* info = nullptr);

double micro_wetting_mass(const MicroState& state, const MicroGrid& grid);

struct MicroRunOptions {
    double t_end = 1.0;
    double dt_init = 0.01;
    double dt_max = 0.01;
    int max_halvings = 10;
    int grow_after = 5;
    double grow_factor = 1.2;
};

struct MicroRecord {
    int step = 0;
    double t = 0.0;
    double dt = 0.0;
    double min_s_f = 0.0, max_s_f = 0.0, mean_s_f = 0.0;
    double min_s_m = 0.0, max_s_m = 0.0, mean_s_m = 0.0;
    double mass = 0.0;
    double ledger_error = 0.0;
    double pw_mismatch = 0.0;
    double pc_mismatch = 0.0;
};

class MicroSolver {
public:
    // Matrix cells start at capillary equilibrium P(S0_f) unless given.
    MicroSolver(MicroProblem problem, MicroState initial, MicroRunOptions options);

    const MicroProblem& problem() const { return problem_; }
    const MicroState& state() const { return state_; }

    std::vector<MicroRecord> run(const std::function<void(const MicroRecord&)>& on_step = {});

private:
    MicroProblem problem_;
    MicroRunOptions options_;
    MicroState state_;
    double initial_mass_ = 0.0;
    double cumulative_in_ = 0.0;
    double flow_scale_ = 0.0;
    int step_count_ = 0;
};

// Initial state from fracture saturation values per cell centre; matrix
// cells get P(S_f) (capillary equilibrium).
MicroState equilibrium_initial_state(const MicroProblem& problem,
                                     const std::function<double(double, double)>& s_fracture);

struct ComparisonNorms {
    double fracture = 0.0; // RMS over epsilon-cell windows of (micro fracture mean - macro S)
    double matrix = 0.0;   // same for matrix mean vs macro matrix saturation
};

// Averages both sides over every epsilon-cell window. The macro grid must
// cover the same extent along x (and y for full layouts).
ComparisonNorms restrict_compare(const MicroGrid& micro, const MicroState& micro_state,
                                 const StructuredGrid& macro, const std::vector<double>& macro_s,
                                 const std::vector<double>& macro_matrix_s);

} // namespace dpflow
