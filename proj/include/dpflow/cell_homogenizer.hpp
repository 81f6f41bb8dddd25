#pragma once
// Periodic cell problem on the fracture part of the unit cell and the
// effective coefficients of the homogenized model.
//
// Note the normalisation: the effective tensor and porosity are divided by
// |Y_m|, not |Y|, because the homogenized balance laws are written per unit
// matrix measure.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace dpflow {

// Symmetric 2x2 tensor; 1D problems use xx only.
struct Tensor2 {
    double xx = 1.0;
    double xy = 0.0;
    double yy = 1.0;

    double apply(int row, const std::array<double, 2>& v) const
    {
        return row == 0 ? xx * v[0] + xy * v[1] : xy * v[0] + yy * v[1];
    }
    std::array<double, 2> eigenvalues() const;
};

struct CenteredBox {
    double side = 0.5;
};
struct HorizontalSlab {
    double thickness = 0.5;
};
struct CustomMask {
    std::string path;
};
using ShapeSpec = std::variant<CenteredBox, HorizontalSlab, CustomMask>;

struct CellGeometry {
    int dim = 2;
    std::size_t n = 0;
    std::vector<std::uint8_t> matrix_mask; // 1 on Y_m, cell (i, j) at i + n j
    double measure_m = 0.0;
    double measure_f = 0.0;
    std::vector<double> porosity_m;        // meaningful on matrix cells
    std::vector<Tensor2> perm;
    std::vector<std::string> warnings;

    double h() const { return 1.0 / static_cast<double>(n); }
    std::size_t cells() const { return dim == 1 ? n : n * n; }
    bool is_matrix(std::size_t i, std::size_t j) const { return matrix_mask[i + n * j] != 0; }
    std::array<double, 2> center(std::size_t c) const;

    void set_matrix_porosity(const std::function<double(double, double)>& phi);
    void set_permeability(const std::function<Tensor2(double, double)>& k);
    void scale_permeability(double factor);
};

CellGeometry build_geometry(const ShapeSpec& shape, std::size_t n, int dim = 2);
// Mask from rows of 0/1 characters, first row at y = 0. A single row gives a 1D cell.
CellGeometry geometry_from_mask_text(const std::string& text);
// Recomputes measures and connectivity warnings after the mask changed.
void finalize_geometry(CellGeometry& geom);

// Corrector on the periodic node grid; only nodes touching a fracture cell
// carry values (others are zero and flagged inactive).
struct CorrectorField {
    std::vector<double> values;
    std::vector<std::uint8_t> active;
    int iterations = 0;
    double relative_residual = 0.0;
};

CorrectorField solve_cell_problem(const CellGeometry& geom, int direction);

// Galerkin residual  int_{Y_f} K (grad xi + e_j) . grad xi.
double galerkin_orthogonality(const CellGeometry& geom, const CorrectorField& xi, int direction);
// Sum over fracture nodes of the assembled right-hand side for one direction.
double rhs_compatibility(const CellGeometry& geom, int direction);

struct EffectiveProps {
    int dim = 2;
    std::array<std::array<double, 2>, 2> k_star{};
    double phi_star = 0.0;
    double phi_hat_m = 0.0;
    double measure_m = 0.0;
    double measure_f = 0.0;
    std::vector<CorrectorField> xi;

    double volume_ratio() const { return measure_f / measure_m; }
};

std::array<std::array<double, 2>, 2> effective_tensor(const CellGeometry& geom,
                                                       const std::vector<CorrectorField>& xi);
double effective_porosity(double phi_f_h, const CellGeometry& geom);
double averaged_matrix_porosity(const CellGeometry& geom);

// Solves all correctors (concurrently when workers > 1) and assembles the
// effective coefficients.
EffectiveProps homogenize(const CellGeometry& geom, double phi_f_h);

// Effective tensor of the periodic two-point (cell-centred) discretization of
// the same cell problem, normalised by |Y_m|. It is the coefficient that a
// two-point fine-scale solver on this cell grid homogenizes to.
std::array<std::array<double, 2>, 2> tpfa_effective_tensor(const CellGeometry& geom);

struct CorrectorReconstruction {
    std::vector<double> w_p;
    std::vector<double> w_s;
};

CorrectorReconstruction reconstruct_correctors(const EffectiveProps& props,
                                               const std::array<double, 2>& grad_p,
                                               const std::array<double, 2>& grad_beta,
                                               const std::array<double, 2>& gravity);

} // namespace dpflow
