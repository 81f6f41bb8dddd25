#pragma once
// Typed scenario configuration, its assumption checks, and builders that turn
// it into module inputs. All quantities are SI; saturations and porosities
// are dimensionless.

#include "dpflow/block_solver.hpp"
#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/config.hpp"
#include "dpflow/convergence.hpp"
#include "dpflow/macro_solver.hpp"
#include "dpflow/micro_reference.hpp"
#include "dpflow/petrophysics.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dpflow {

// Axis-aligned box [x0, x1] x [y0, y1] with a volumetric rate (1/s).
struct RateRegion {
    double rate = 0.0;
    std::array<double, 4> box{0.0, 0.0, 0.0, 0.0};
};

struct ScenarioConfig {
    // [curves.fracture], [curves.matrix]
    CurveParams fracture{};
    CurveParams matrix = [] {
        CurveParams p;
        p.shape = 0.5;
        return p;
    }();

    // [cell]
    std::string cell_shape = "box"; // box | slab | mask
    double box_side = 0.5;
    double slab_thickness = 0.5;
    std::string mask_path;
    long cell_resolution = 32;
    int cell_dim = 2;
    double porosity_fracture = 0.2;
    double porosity_matrix = 0.3;
    double perm_fracture = 1.0; // m^2, isotropic
    double perm_matrix = 1.0;   // unscaled; the micro solver applies epsilon^theta

    // [macro]
    int macro_dim = 1;
    long nx = 64;
    long ny = 1;
    double lx = 1.0;
    double ly = 1.0;
    std::array<double, 2> gravity{0.0, 0.0};

    // [regime]
    double theta = 2.0;

    // [time]
    double t_end = 0.25;
    double dt_init = 0.0025;
    double dt_max = 0.0025;
    long block_substeps = 1;
    long max_steps = 1000000;

    // [sources]
    RateRegion injection;
    RateRegion production;
    double s_inj_w = 1.0;
    double t_stop = std::numeric_limits<double>::infinity();

    // [boundary]
    std::vector<std::string> dirichlet_sides{"left", "right"};
    double boundary_pressure = 0.0;
    double boundary_saturation = 1.0;

    // [initial]
    double initial_saturation = 0.2;
    std::optional<double> initial_matrix_saturation;

    // [micro]
    double micro_epsilon = 0.125;
    long micro_resolution = 16;
    std::string micro_layout = "strip"; // strip | full

    // [convergence]
    std::vector<double> epsilons{0.125, 0.0625, 0.03125};
    long convergence_macro_cells = 512;
    std::string convergence_k_star = "two_point"; // two_point | q1

    // [block_demo]
    std::vector<double> demo_times{0.0, 0.3};
    std::vector<double> demo_values{1.0, 0.5};
    double demo_t_end = 0.6;
    double demo_dt = 0.005;
    double demo_initial_s = 0.2;

    // [output]
    std::string output_directory = "dpflow_out";
    long snapshot_every = 10;
    bool write_correctors = true;

    static ScenarioConfig from_document(const ConfigDocument& doc);
};

// Empty iff the configuration satisfies every checkable assumption. Each
// entry starts with the assumption tag, for example "A.1: ...".
std::vector<std::string> validate(const ScenarioConfig& config);

// Throws ConfigError listing every violation.
void require_valid(const ScenarioConfig& config);

CurvePair make_curve_pair(const ScenarioConfig& config);
// Cell geometry at the given resolution (config resolution when 0) with the
// configured porosity and permeability.
CellGeometry make_cell_geometry(const ScenarioConfig& config, long resolution = 0);

// Macro problem with coefficients from `props`; `curves` must outlive it.
MacroProblem make_macro_problem(const ScenarioConfig& config, const EffectiveProps& props,
                                const CurvePair& curves);
MacroRunOptions make_macro_options(const ScenarioConfig& config, const CellGeometry& cell);

MicroProblem make_micro_problem(const ScenarioConfig& config, const CellGeometry& cell, double epsilon,
                                const CurvePair& curves);
MicroRunOptions make_micro_options(const ScenarioConfig& config);

ConvergenceSetup make_convergence_setup(const ScenarioConfig& config, const CurvePair& curves);

// Piecewise-constant boundary trace for the block demo.
double demo_boundary_value(const ScenarioConfig& config, double t);

} // namespace dpflow
