#pragma once
// Axis-aligned cell-centred grid on (0, lx) x (0, ly), used by the macro,
// micro and block finite volume schemes. A 1D grid has ny = 1 and unit
// cross-section.

#include <array>
#include <cstddef>
#include <vector>

namespace dpflow {

enum class Side { left = 0, right = 1, bottom = 2, top = 3 };

struct InteriorFace {
    std::size_t a;      // lower-coordinate cell
    std::size_t b;      // upper-coordinate cell
    int axis;           // 0 = x, 1 = y
    double area;
    double half_a;      // centre(a) -> face distance
    double half_b;      // face -> centre(b) distance
};

struct BoundaryFace {
    std::size_t cell;
    Side side;
    double area;
    double half;        // centre -> face distance
};

class StructuredGrid {
public:
    StructuredGrid(int dim, std::size_t nx, std::size_t ny, double lx, double ly);

    static StructuredGrid line(std::size_t nx, double lx) { return {1, nx, 1, lx, 1.0}; }
    static StructuredGrid rect(std::size_t nx, std::size_t ny, double lx, double ly)
    {
        return {2, nx, ny, lx, ly};
    }

    int dim() const { return dim_; }
    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    double lx() const { return lx_; }
    double ly() const { return ly_; }
    double hx() const { return hx_; }
    double hy() const { return hy_; }
    std::size_t cells() const { return nx_ * ny_; }
    double cell_volume() const { return hx_ * hy_; }

    // Cells are numbered with the shorter axis running fastest so that
    // Jacobians have bandwidth min(nx, ny).
    std::size_t index(std::size_t i, std::size_t j) const
    {
        return y_fastest_ ? j + ny_ * i : i + nx_ * j;
    }
    std::size_t bandwidth() const { return dim_ == 1 ? 1 : (y_fastest_ ? ny_ : nx_); }
    std::array<std::size_t, 2> ij(std::size_t c) const
    {
        return y_fastest_ ? std::array<std::size_t, 2>{c / ny_, c % ny_}
                          : std::array<std::size_t, 2>{c % nx_, c / nx_};
    }
    std::array<double, 2> center(std::size_t c) const;

    const std::vector<InteriorFace>& interior_faces() const { return interior_; }
    const std::vector<BoundaryFace>& boundary_faces() const { return boundary_; }

private:
    int dim_;
    std::size_t nx_, ny_;
    double lx_, ly_, hx_, hy_;
    bool y_fastest_;
    std::vector<InteriorFace> interior_;
    std::vector<BoundaryFace> boundary_;
};

// Gamma_1 (Dirichlet) / Gamma_2 (no-flow) split of the outer boundary.
struct BoundaryTags {
    std::array<bool, 4> dirichlet{false, true, false, false};

    bool is_dirichlet(Side s) const { return dirichlet[static_cast<int>(s)]; }
    bool any_dirichlet(int dim) const;
};

} // namespace dpflow
