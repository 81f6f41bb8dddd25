#pragma once
// Micro-versus-homogenized comparison on a strip of epsilon-cells. The macro
// side is a 1D problem along x with the homogenized coefficients of the
// cell; the micro side resolves one row of cells with the same boundary data.

#include "dpflow/cell_homogenizer.hpp"
#include "dpflow/micro_reference.hpp"
#include "dpflow/petrophysics.hpp"

#include <vector>

namespace dpflow {

// Which cell problem supplies K* for the macro side. two_point matches the
// micro discretization; q1 is the finite-element value used elsewhere.
enum class KStarSource { two_point, q1 };

struct ConvergenceSetup {
    const CurvePair* curves = nullptr;
    CellGeometry cell;             // 2D, resolution = micro cells per epsilon-cell
    double theta = 1.0;
    double fracture_porosity = 0.2;
    double t_end = 0.25;
    double dt = 0.0025;
    std::size_t macro_cells = 512;
    double initial_s = 0.2;        // fracture; the matrix starts at P(initial_s)
    double boundary_s = 1.0;       // Dirichlet saturation on both ends
    double boundary_p = 0.0;
    double gravity = 1.0;          // along +x
    KStarSource k_star = KStarSource::two_point;
};

struct HomogenizedReference {
    StructuredGrid grid = StructuredGrid::line(1, 1.0);
    std::vector<double> S;
    std::vector<double> matrix_s;
    double ledger_error = 0.0;
    double runtime_s = 0.0;
};

struct ConvergenceRow {
    double epsilon = 0.0;
    double err_fracture = 0.0;
    double err_matrix = 0.0;
    double runtime_s = 0.0;        // micro run plus comparison
    std::size_t micro_cells = 0;
    double ledger_error = 0.0;     // largest micro mass-ledger error over the run
};

HomogenizedReference homogenized_reference(const ConvergenceSetup& setup);

ConvergenceRow convergence_point(const ConvergenceSetup& setup, const HomogenizedReference& ref,
                                 double epsilon);

std::vector<ConvergenceRow> convergence_study(const ConvergenceSetup& setup,
                                              const std::vector<double>& epsilons);

} // namespace dpflow
