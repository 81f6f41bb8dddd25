#pragma once
// Homogenized fracture-continuum solver for the three contrast regimes.
//
// Sequential implicit: a total-flux pressure solve with S frozen, then a
// backward Euler saturation solve with the total fluxes frozen. The wetting
// flux is written in fractional-flow form  q_w = f_w(S) u - K* grad beta_f(S);
// with equal phase densities gravity only enters through u.

#include "dpflow/block_solver.hpp"
#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/error.hpp"
#include "dpflow/petrophysics.hpp"
#include "dpflow/structured_grid.hpp"

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace dpflow {

enum class Regime { moderate, critical, very_high };
const char* to_string(Regime r);

struct RegimeConfig {
    double theta = 2.0;
    Regime regime() const;
};

struct SourceSpec {
    std::vector<double> f_inj;  // per cell, 1/s
    std::vector<double> f_prod; // per cell, 1/s
    double s_inj_w = 1.0;
    double t_stop = std::numeric_limits<double>::infinity();

    double s_inj_n() const { return 1.0 - s_inj_w; }
    bool active(double t) const { return t <= t_stop; }
};

struct MacroBoundary {
    BoundaryTags tags;
    double pressure = 0.0;   // P on Gamma_1, Pa
    double saturation = 1.0; // S on Gamma_1
};

struct MacroCoefficients {
    std::array<std::array<double, 2>, 2> k_star{{{1.0, 0.0}, {0.0, 1.0}}};
    double phi_star = 0.2;
    double phi_hat_m = 0.3;
    double volume_ratio = 1.0; // |Y_f| / |Y_m|

    static MacroCoefficients from(const EffectiveProps& props);
};

struct MacroProblem {
    StructuredGrid grid = StructuredGrid::line(1, 1.0);
    MacroBoundary boundary;
    MacroCoefficients coeff;
    const CurvePair* curves = nullptr;
    SourceSpec sources;
    std::array<double, 2> gravity{0.0, 0.0};
    RegimeConfig regime;
};

struct MacroState {
    std::vector<double> S;
    std::vector<double> P;
    double t = 0.0;

    std::vector<double> p_w(const MediumCurves& fracture) const;
    std::vector<double> p_n(const MediumCurves& fracture) const;
};

struct PressureSolution {
    std::vector<double> P;
    std::vector<double> interior_flux; // total flux a -> b per interior face
    std::vector<double> boundary_flux; // outward total flux per boundary face
    double relative_residual = 0.0;
};

// Solves -div(K* lambda(S) (grad P - g)) = F*_w + F*_n with S frozen.
PressureSolution pressure_step(const std::vector<double>& S, const MacroProblem& problem, double t);

struct EffectiveSources {
    std::vector<double> w;
    std::vector<double> n;
};
EffectiveSources effective_sources(const std::vector<double>& S, const SourceSpec& sources,
                                   double volume_ratio, double t);

struct Accumulation {
    double fracture = 0.0; // Phi* S
    double matrix = 0.0;   // Phi_hat_m P(S) for the moderate regime, else 0
};
Accumulation regime_accumulation(Regime regime, const CurvePair& curves, double phi_star,
                                 double phi_hat_m, double S);

// Matrix-fracture transfer as a function of the new fracture saturation:
// fills Q_w and dQ_w/dS per cell.
using CouplingFn = std::function<void(const std::vector<double>& S, std::vector<double>& q,
                                      std::vector<double>& dq)>;

struct SaturationOptions {
    double newton_tol = 1e-13; // max scaled residual, saturation units
    double accept_tol = 1e-9;
    int max_iter = 40;
    int max_halvings = 8;
};

struct SaturationResult {
    std::vector<double> S;
    std::vector<double> q_w;
    int iterations = 0;
    double residual = 0.0;
};

SaturationResult saturation_step(const std::vector<double>& S_old, const MacroProblem& problem,
                                 const PressureSolution& pressure, const CouplingFn& coupling,
                                 double t_new, double dt, const SaturationOptions& options = {});

struct MassLedger {
    double fracture_mass = 0.0;  // sum Phi* S dV
    double matrix_mass = 0.0;    // block or equilibrium content per unit Y_m, times dV
    double boundary_in = 0.0;    // cumulative wetting inflow through Gamma_1
    double source_in = 0.0;      // cumulative int F*_w
    double transfer_in = 0.0;    // cumulative int Q_w (fracture side)
    double relative_error = 0.0; // |change - inflow| / scale
};

struct StepRecord {
    int step = 0;
    double t = 0.0;
    double dt = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    double mean_s = 0.0;
    int newton_iterations = 0;
    MassLedger ledger;
};

struct MacroRunOptions {
    double t_end = 1.0;
    double dt_init = 0.01;
    double dt_max = 0.01;
    int max_halvings = 10;
    int grow_after = 5;
    double grow_factor = 1.2;
    int max_steps = 1000000;
    // Block setup for the critical regime.
    std::optional<BlockGrid> block_grid;
    std::optional<double> block_initial_s; // default: P(S(x, 0))
    int block_substeps = 1;
};

class StepFailure : public SolverError {
public:
    StepFailure(const std::string& what, MacroState state)
        : SolverError(what), state_(std::move(state))
    {
    }
    const MacroState& state() const { return state_; }

private:
    MacroState state_;
};

class MacroSolver {
public:
    MacroSolver(MacroProblem problem, std::vector<double> initial_s, MacroRunOptions options);

    const MacroProblem& problem() const { return problem_; }
    const MacroState& state() const { return state_; }
    const MassLedger& ledger() const { return ledger_; }
    const BlockEnsemble* blocks() const { return blocks_.get(); }
    // Matrix saturation per macro cell: block mean (critical), P(S) (moderate), initial (very high).
    std::vector<double> matrix_saturation() const;

    // Attempts one step of size dt; returns false and leaves the state
    // untouched when a nonlinear solve fails.
    bool try_step(double dt, StepRecord* record = nullptr);

    // Advances to t_end with dt control; on_step sees every accepted step.
    std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

private:
    double matrix_mass() const;
    void refresh_ledger_error();

    MacroProblem problem_;
    MacroRunOptions options_;
    MacroState state_;
    MassLedger ledger_;
    double initial_mass_ = 0.0;
    double flow_scale_ = 0.0;
    std::vector<double> initial_matrix_s_;
    std::unique_ptr<BlockEnsemble> blocks_;
    int step_count_ = 0;
};

} // namespace dpflow
