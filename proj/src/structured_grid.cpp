#include "dpflow/structured_grid.hpp"

#include "dpflow/error.hpp"

namespace dpflow {

StructuredGrid::StructuredGrid(int dim, std::size_t nx, std::size_t ny, double lx, double ly)
    : dim_(dim), nx_(nx), ny_(dim == 1 ? 1 : ny), lx_(lx), ly_(dim == 1 ? 1.0 : ly)
{
    if (dim != 1 && dim != 2)
        throw ConfigError("grid dimension must be 1 or 2");
    if (nx_ == 0 || ny_ == 0 || !(lx_ > 0.0) || !(ly_ > 0.0))
        throw ConfigError("grid needs positive sizes and extents");
    hx_ = lx_ / static_cast<double>(nx_);
    hy_ = dim_ == 1 ? 1.0 : ly_ / static_cast<double>(ny_);
    y_fastest_ = dim_ == 2 && ny_ < nx_;

    // Faces are listed in cell order so that flux accumulation is
    // deterministic and independent of the numbering choice above.
    for (std::size_t j = 0; j < ny_; ++j)
        for (std::size_t i = 0; i < nx_; ++i) {
            const std::size_t c = index(i, j);
            if (i + 1 < nx_)
                interior_.push_back({c, index(i + 1, j), 0, hy_, 0.5 * hx_, 0.5 * hx_});
            if (dim_ == 2 && j + 1 < ny_)
                interior_.push_back({c, index(i, j + 1), 1, hx_, 0.5 * hy_, 0.5 * hy_});
            if (i == 0)
                boundary_.push_back({c, Side::left, hy_, 0.5 * hx_});
            if (i + 1 == nx_)
                boundary_.push_back({c, Side::right, hy_, 0.5 * hx_});
            if (dim_ == 2 && j == 0)
                boundary_.push_back({c, Side::bottom, hx_, 0.5 * hy_});
            if (dim_ == 2 && j + 1 == ny_)
                boundary_.push_back({c, Side::top, hx_, 0.5 * hy_});
        }
}

std::array<double, 2> StructuredGrid::center(std::size_t c) const
{
    const auto [i, j] = ij(c);
    return {(static_cast<double>(i) + 0.5) * hx_,
            dim_ == 1 ? 0.5 : (static_cast<double>(j) + 0.5) * hy_};
}

bool BoundaryTags::any_dirichlet(int dim) const
{
    for (int s = 0; s < (dim == 1 ? 2 : 4); ++s)
        if (dirichlet[s])
            return true;
    return false;
}

} // namespace dpflow
