#include "dpflow/cell_homogenizer.hpp"

#include "dpflow/error.hpp"
#include "dpflow/linalg.hpp"
#include "dpflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dpflow {

std::array<double, 2> Tensor2::eigenvalues() const
{
    const double mean = 0.5 * (xx + yy);
    const double rad = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    return {mean - rad, mean + rad};
}

std::array<double, 2> CellGeometry::center(std::size_t c) const
{
    const double hh = h();
    if (dim == 1)
        return {(static_cast<double>(c) + 0.5) * hh, 0.5};
    return {(static_cast<double>(c % n) + 0.5) * hh, (static_cast<double>(c / n) + 0.5) * hh};
}

void CellGeometry::set_matrix_porosity(const std::function<double(double, double)>& phi)
{
    porosity_m.assign(cells(), 0.0);
    for (std::size_t c = 0; c < cells(); ++c)
        if (matrix_mask[c]) {
            const auto y = center(c);
            porosity_m[c] = phi(y[0], y[1]);
        }
}

void CellGeometry::set_permeability(const std::function<Tensor2(double, double)>& k)
{
    perm.assign(cells(), Tensor2{});
    for (std::size_t c = 0; c < cells(); ++c) {
        const auto y = center(c);
        perm[c] = k(y[0], y[1]);
    }
}

void CellGeometry::scale_permeability(double factor)
{
    for (Tensor2& k : perm) {
        k.xx *= factor;
        k.xy *= factor;
        k.yy *= factor;
    }
}

namespace {

// Cell-based flood fill of the fracture part with periodic wrap.
std::size_t fracture_cell_components(const CellGeometry& g)
{
    const std::size_t total = g.cells();
    std::vector<int> label(total, -1);
    std::size_t count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < total; ++start) {
        if (g.matrix_mask[start] || label[start] >= 0)
            continue;
        label[start] = static_cast<int>(count);
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            std::vector<std::size_t> nbrs;
            if (g.dim == 1) {
                nbrs = {(c + 1) % g.n, (c + g.n - 1) % g.n};
            } else {
                const std::size_t i = c % g.n, j = c / g.n;
                nbrs = {(i + 1) % g.n + g.n * j, (i + g.n - 1) % g.n + g.n * j,
                        i + g.n * ((j + 1) % g.n), i + g.n * ((j + g.n - 1) % g.n)};
            }
            for (std::size_t nb : nbrs)
                if (!g.matrix_mask[nb] && label[nb] < 0) {
                    label[nb] = static_cast<int>(count);
                    stack.push_back(nb);
                }
        }
        ++count;
    }
    return count;
}

bool on_grid(double x, std::size_t n)
{
    const double scaled = x * static_cast<double>(n);
    return std::abs(scaled - std::round(scaled)) < 1e-9;
}

std::size_t suggest_resolution(double lo, double hi, std::size_t n)
{
    for (std::size_t m = n; m <= 8192; ++m)
        if (on_grid(lo, m) && on_grid(hi, m))
            return m;
    return 0;
}

void require_representable(const char* what, double lo, double hi, std::size_t n)
{
    if (on_grid(lo, n) && on_grid(hi, n))
        return;
    std::ostringstream msg;
    msg << what << " edges " << lo << ", " << hi << " do not fall on grid lines at n=" << n;
    if (const std::size_t m = suggest_resolution(lo, hi, n); m != 0)
        msg << "; try n=" << m;
    throw ConfigError(msg.str());
}

} // namespace

void finalize_geometry(CellGeometry& geom)
{
    const std::size_t total = geom.cells();
    const std::size_t nm = static_cast<std::size_t>(
        std::count_if(geom.matrix_mask.begin(), geom.matrix_mask.end(), [](auto v) { return v != 0; }));
    const double cell_measure = std::pow(geom.h(), geom.dim);
    geom.measure_m = static_cast<double>(nm) * cell_measure;
    geom.measure_f = static_cast<double>(total - nm) * cell_measure;
    if (nm == 0)
        throw ConfigError("measure_m must be positive");
    if (nm == total)
        throw ConfigError("measure_f must be positive (the fracture part is empty)");
    geom.warnings.clear();
    if (const std::size_t comps = fracture_cell_components(geom); comps > 1)
        geom.warnings.push_back("Y_f splits into " + std::to_string(comps) +
                                " components under periodic identification");
    if (geom.porosity_m.size() != total)
        geom.set_matrix_porosity([](double, double) { return 0.3; });
    if (geom.perm.size() != total)
        geom.set_permeability([](double, double) { return Tensor2{}; });
}

CellGeometry build_geometry(const ShapeSpec& shape, std::size_t n, int dim)
{
    if (n < 4)
        throw ConfigError("cell resolution n must be >= 4");
    if (dim != 1 && dim != 2)
        throw ConfigError("cell dimension must be 1 or 2");

    if (const auto* custom = std::get_if<CustomMask>(&shape)) {
        std::ifstream in(custom->path);
        if (!in)
            throw ConfigError("cannot open mask file " + custom->path);
        std::stringstream buf;
        buf << in.rdbuf();
        return geometry_from_mask_text(buf.str());
    }

    CellGeometry geom;
    geom.dim = dim;
    geom.n = n;
    geom.matrix_mask.assign(geom.cells(), 0);

    if (const auto* box = std::get_if<CenteredBox>(&shape)) {
        if (!(box->side > 0.0 && box->side < 1.0))
            throw ConfigError("centered-box side must lie in (0, 1)");
        const double lo = 0.5 * (1.0 - box->side), hi = 0.5 * (1.0 + box->side);
        require_representable("centered-box", lo, hi, n);
        for (std::size_t c = 0; c < geom.cells(); ++c) {
            const auto y = geom.center(c);
            const bool in_x = y[0] > lo && y[0] < hi;
            const bool in_y = dim == 1 || (y[1] > lo && y[1] < hi);
            geom.matrix_mask[c] = in_x && in_y;
        }
    } else if (const auto* slab = std::get_if<HorizontalSlab>(&shape)) {
        if (dim != 2)
            throw ConfigError("horizontal-slab needs a 2D cell");
        if (!(slab->thickness > 0.0 && slab->thickness < 1.0))
            throw ConfigError("horizontal-slab thickness must lie in (0, 1)");
        const double lo = 0.5 * (1.0 - slab->thickness), hi = 0.5 * (1.0 + slab->thickness);
        require_representable("horizontal-slab", lo, hi, n);
        for (std::size_t c = 0; c < geom.cells(); ++c) {
            const auto y = geom.center(c);
            geom.matrix_mask[c] = y[1] > lo && y[1] < hi;
        }
    }
    finalize_geometry(geom);
    return geom;
}

CellGeometry geometry_from_mask_text(const std::string& text)
{
    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string row;
        for (char ch : line) {
            if (ch == '0' || ch == '1')
                row.push_back(ch);
            else if (!std::isspace(static_cast<unsigned char>(ch)))
                throw ConfigError("mask line " + std::to_string(line_no) + ": unexpected character '" +
                                  std::string(1, ch) + "'");
        }
        if (!row.empty())
            rows.push_back(row);
    }
    if (rows.empty())
        throw ConfigError("mask is empty");
    const std::size_t n = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != n)
            throw ConfigError("mask rows differ in length");
    if (rows.size() != 1 && rows.size() != n)
        throw ConfigError("mask must be a single row (1D) or square (2D)");
    if (n < 4)
        throw ConfigError("cell resolution n must be >= 4");

    CellGeometry geom;
    geom.dim = rows.size() == 1 ? 1 : 2;
    geom.n = n;
    geom.matrix_mask.assign(geom.cells(), 0);
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t i = 0; i < n; ++i)
            geom.matrix_mask[i + n * j] = rows[j][i] == '1';
    finalize_geometry(geom);
    return geom;
}

namespace {

struct QuadPoint {
    std::array<std::size_t, 4> nodes{};
    std::array<std::array<double, 2>, 4> grads{};
    std::array<double, 4> shape{};
    std::size_t local = 0;
    double weight = 0.0;
    std::size_t cell = 0;
};

// Visits every Gauss point of the bilinear (linear in 1D) elements on Y_f.
template <class Fn>
void for_each_fracture_point(const CellGeometry& g, Fn&& fn)
{
    const double h = g.h();
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    const std::size_t n = g.n;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        if (g.matrix_mask[c])
            continue;
        QuadPoint q;
        q.cell = c;
        if (g.dim == 1) {
            q.local = 2;
            q.nodes = {c, (c + 1) % n, 0, 0};
            for (double xi : gp) {
                q.weight = 0.5 * h;
                q.shape = {1.0 - xi, xi, 0.0, 0.0};
                q.grads[0] = {-1.0 / h, 0.0};
                q.grads[1] = {1.0 / h, 0.0};
                fn(q);
            }
        } else {
            const std::size_t i = c % n, j = c / n;
            const std::size_t ip = (i + 1) % n, jp = (j + 1) % n;
            q.local = 4;
            q.nodes = {i + n * j, ip + n * j, i + n * jp, ip + n * jp};
            for (double eta : gp)
                for (double xi : gp) {
                    q.weight = 0.25 * h * h;
                    q.shape = {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
                    q.grads[0] = {-(1 - eta) / h, -(1 - xi) / h};
                    q.grads[1] = {(1 - eta) / h, -xi / h};
                    q.grads[2] = {-eta / h, (1 - xi) / h};
                    q.grads[3] = {eta / h, xi / h};
                    fn(q);
                }
        }
    }
}

std::size_t node_count(const CellGeometry& g)
{
    return g.dim == 1 ? g.n : g.n * g.n;
}

std::vector<std::uint8_t> active_nodes(const CellGeometry& g)
{
    std::vector<std::uint8_t> active(node_count(g), 0);
    for_each_fracture_point(g, [&](const QuadPoint& q) {
        for (std::size_t a = 0; a < q.local; ++a)
            active[q.nodes[a]] = 1;
    });
    return active;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x)
{
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

// Root node of the fracture component each active node belongs to.
std::vector<std::size_t> node_components(const CellGeometry& g, const std::vector<std::uint8_t>& active)
{
    std::vector<std::size_t> parent(active.size());
    std::iota(parent.begin(), parent.end(), 0);
    for_each_fracture_point(g, [&](const QuadPoint& q) {
        for (std::size_t a = 1; a < q.local; ++a) {
            const std::size_t ra = find_root(parent, q.nodes[0]);
            const std::size_t rb = find_root(parent, q.nodes[a]);
            if (ra != rb)
                parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    });
    for (std::size_t v = 0; v < active.size(); ++v)
        parent[v] = find_root(parent, v);
    return parent;
}

std::array<double, 2> unit(int direction)
{
    return direction == 0 ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
}

std::array<double, 2> gradient_at(const QuadPoint& q, const std::vector<double>& values)
{
    std::array<double, 2> g{0.0, 0.0};
    for (std::size_t a = 0; a < q.local; ++a) {
        g[0] += values[q.nodes[a]] * q.grads[a][0];
        g[1] += values[q.nodes[a]] * q.grads[a][1];
    }
    return g;
}

void check_direction(const CellGeometry& g, int direction)
{
    if (direction < 0 || direction >= g.dim)
        throw DomainError("corrector direction out of range for a " + std::to_string(g.dim) +
                          "D cell");
}

} // namespace

double rhs_compatibility(const CellGeometry& geom, int direction)
{
    check_direction(geom, direction);
    const auto e = unit(direction);
    double sum = 0.0;
    for_each_fracture_point(geom, [&](const QuadPoint& q) {
        const Tensor2& k = geom.perm[q.cell];
        const std::array<double, 2> ke{k.apply(0, e), k.apply(1, e)};
        for (std::size_t a = 0; a < q.local; ++a)
            sum -= q.weight * (ke[0] * q.grads[a][0] + ke[1] * q.grads[a][1]);
    });
    return sum;
}

CorrectorField solve_cell_problem(const CellGeometry& geom, int direction)
{
    check_direction(geom, direction);
    CorrectorField field;
    field.active = active_nodes(geom);
    field.values.assign(field.active.size(), 0.0);

    const auto root = node_components(geom, field.active);

    // dof numbering over active nodes; the root of every component is pinned to zero.
    std::vector<std::int64_t> dof(field.active.size(), -1);
    std::size_t ndof = 0;
    for (std::size_t v = 0; v < field.active.size(); ++v)
        if (field.active[v] && root[v] != v)
            dof[v] = static_cast<std::int64_t>(ndof++);

    linalg::TripletBuilder builder(ndof);
    std::vector<double> rhs(ndof, 0.0);
    const auto e = unit(direction);
    for_each_fracture_point(geom, [&](const QuadPoint& q) {
        const Tensor2& k = geom.perm[q.cell];
        const std::array<double, 2> ke{k.apply(0, e), k.apply(1, e)};
        for (std::size_t a = 0; a < q.local; ++a) {
            const std::int64_t row = dof[q.nodes[a]];
            if (row < 0)
                continue;
            const auto& ga = q.grads[a];
            const std::array<double, 2> kga{k.apply(0, ga), k.apply(1, ga)};
            rhs[static_cast<std::size_t>(row)] -= q.weight * (ke[0] * ga[0] + ke[1] * ga[1]);
            for (std::size_t b = 0; b < q.local; ++b) {
                const std::int64_t col = dof[q.nodes[b]];
                if (col < 0)
                    continue;
                const auto& gb = q.grads[b];
                builder.add(static_cast<std::size_t>(row), static_cast<std::size_t>(col),
                            q.weight * (kga[0] * gb[0] + kga[1] * gb[1]));
            }
        }
    });
    const linalg::CsrMatrix a = builder.build();

    std::vector<double> x(ndof, 0.0);
    const auto res = linalg::pcg(a, rhs, x, 1e-12, 20 * static_cast<int>(ndof) + 100);
    field.iterations = res.iterations;
    field.relative_residual = res.relative_residual;
    if (!(res.relative_residual <= 1e-10))
        throw SolverError("cell problem: Krylov solver stalled at relative residual " +
                          std::to_string(res.relative_residual));

    for (std::size_t v = 0; v < field.active.size(); ++v)
        if (dof[v] >= 0)
            field.values[v] = x[static_cast<std::size_t>(dof[v])];

    // Shift each component to zero mean.
    std::vector<double> integral(field.values.size(), 0.0), measure(field.values.size(), 0.0);
    for_each_fracture_point(geom, [&](const QuadPoint& q) {
        double value = 0.0;
        for (std::size_t a = 0; a < q.local; ++a)
            value += q.shape[a] * field.values[q.nodes[a]];
        integral[root[q.nodes[0]]] += q.weight * value;
        measure[root[q.nodes[0]]] += q.weight;
    });
    for (std::size_t v = 0; v < field.values.size(); ++v)
        if (field.active[v])
            field.values[v] -= integral[root[v]] / measure[root[v]];
    return field;
}

double galerkin_orthogonality(const CellGeometry& geom, const CorrectorField& xi, int direction)
{
    check_direction(geom, direction);
    const auto e = unit(direction);
    double sum = 0.0;
    for_each_fracture_point(geom, [&](const QuadPoint& q) {
        const Tensor2& k = geom.perm[q.cell];
        const auto g = gradient_at(q, xi.values);
        const std::array<double, 2> v{g[0] + e[0], g[1] + e[1]};
        sum += q.weight * (k.apply(0, v) * g[0] + k.apply(1, v) * g[1]);
    });
    return sum;
}

std::array<std::array<double, 2>, 2> effective_tensor(const CellGeometry& geom,
                                                       const std::vector<CorrectorField>& xi)
{
    if (xi.size() != static_cast<std::size_t>(geom.dim))
        throw DomainError("effective_tensor needs one corrector per direction");
    std::array<std::array<double, 2>, 2> k_star{};
    for (int i = 0; i < geom.dim; ++i)
        for (int j = 0; j < geom.dim; ++j) {
            const auto ei = unit(i), ej = unit(j);
            double sum = 0.0;
            for_each_fracture_point(geom, [&](const QuadPoint& q) {
                const Tensor2& k = geom.perm[q.cell];
                const auto gi = gradient_at(q, xi[i].values);
                const auto gj = gradient_at(q, xi[j].values);
                const std::array<double, 2> vi{gi[0] + ei[0], gi[1] + ei[1]};
                const std::array<double, 2> vj{gj[0] + ej[0], gj[1] + ej[1]};
                sum += q.weight * (k.apply(0, vi) * vj[0] + k.apply(1, vi) * vj[1]);
            });
            k_star[i][j] = sum / geom.measure_m;
        }
    return k_star;
}

double effective_porosity(double phi_f_h, const CellGeometry& geom)
{
    if (!(phi_f_h > 0.0 && phi_f_h < 1.0))
        throw DomainError("A.1: homogenized fracture porosity must lie in (0, 1)");
    if (!(geom.measure_m > 0.0))
        throw DomainError("measure_m must be positive");
    return phi_f_h * geom.measure_f / geom.measure_m;
}

double averaged_matrix_porosity(const CellGeometry& geom)
{
    if (!(geom.measure_m > 0.0))
        throw DomainError("measure_m must be positive");
    const double cell_measure = std::pow(geom.h(), geom.dim);
    double sum = 0.0;
    for (std::size_t c = 0; c < geom.cells(); ++c)
        if (geom.matrix_mask[c])
            sum += geom.porosity_m[c] * cell_measure;
    return sum / geom.measure_m;
}

EffectiveProps homogenize(const CellGeometry& geom, double phi_f_h)
{
    EffectiveProps props;
    props.dim = geom.dim;
    props.measure_m = geom.measure_m;
    props.measure_f = geom.measure_f;
    props.phi_star = effective_porosity(phi_f_h, geom);
    props.phi_hat_m = averaged_matrix_porosity(geom);
    props.xi.resize(static_cast<std::size_t>(geom.dim));
    parallel_for(props.xi.size(), [&](std::size_t j) {
        props.xi[j] = solve_cell_problem(geom, static_cast<int>(j));
    });
    props.k_star = effective_tensor(geom, props.xi);
    return props;
}

namespace {

struct CellLink {
    std::size_t a, b;
    int axis;
    double trans;
};

std::vector<CellLink> fracture_links(const CellGeometry& g)
{
    std::vector<CellLink> links;
    const std::size_t n = g.n;
    const std::size_t rows = g.dim == 1 ? 1 : n;
    auto harm = [](double ka, double kb) { return ka > 0.0 && kb > 0.0 ? 2.0 * ka * kb / (ka + kb) : 0.0; };
    for (std::size_t j = 0; j < rows; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = i + n * j;
            if (g.matrix_mask[c])
                continue;
            const std::size_t right = (i + 1) % n + n * j;
            if (!g.matrix_mask[right])
                links.push_back({c, right, 0, harm(g.perm[c].xx, g.perm[right].xx)});
            if (g.dim == 2) {
                const std::size_t up = i + n * ((j + 1) % n);
                if (!g.matrix_mask[up])
                    links.push_back({c, up, 1, harm(g.perm[c].yy, g.perm[up].yy)});
            }
        }
    return links;
}

} // namespace

std::array<std::array<double, 2>, 2> tpfa_effective_tensor(const CellGeometry& geom)
{
    if (geom.n == 0 || geom.matrix_mask.size() != geom.cells())
        throw DomainError("cell geometry is not initialised");
    if (!(geom.measure_m > 0.0))
        throw DomainError("measure_m must be positive");
    const std::size_t cells = geom.cells();
    const auto links = fracture_links(geom);

    std::vector<std::size_t> parent(cells);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& l : links)
        if (l.trans > 0.0) {
            const std::size_t ra = find(l.a), rb = find(l.b);
            if (ra != rb)
                parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    std::vector<std::int64_t> dof(cells, -1);
    std::size_t ndof = 0;
    for (std::size_t c = 0; c < cells; ++c)
        if (!geom.matrix_mask[c] && find(c) != c)
            dof[c] = static_cast<std::int64_t>(ndof++);

    linalg::TripletBuilder tb(ndof);
    for (const auto& l : links) {
        const auto da = dof[l.a], db = dof[l.b];
        if (da >= 0)
            tb.add(static_cast<std::size_t>(da), static_cast<std::size_t>(da), l.trans);
        if (db >= 0)
            tb.add(static_cast<std::size_t>(db), static_cast<std::size_t>(db), l.trans);
        if (da >= 0 && db >= 0) {
            tb.add(static_cast<std::size_t>(da), static_cast<std::size_t>(db), -l.trans);
            tb.add(static_cast<std::size_t>(db), static_cast<std::size_t>(da), -l.trans);
        }
    }
    const linalg::CsrMatrix a = tb.build();

    std::array<std::array<double, 2>, 2> k{};
    const double h = geom.h();
    for (int j = 0; j < geom.dim; ++j) {
        // Unknown w with p = y_j + w; face flux a -> b is trans (w_a - w_b - h [axis == j]).
        std::vector<double> rhs(ndof, 0.0), w(ndof, 0.0);
        for (const auto& l : links) {
            if (l.axis != j)
                continue;
            if (dof[l.a] >= 0)
                rhs[static_cast<std::size_t>(dof[l.a])] += l.trans * h;
            if (dof[l.b] >= 0)
                rhs[static_cast<std::size_t>(dof[l.b])] -= l.trans * h;
        }
        if (ndof > 0) {
            const auto res = linalg::pcg(a, rhs, w, 1e-13, static_cast<int>(20 * ndof + 100));
            if (res.relative_residual > 1e-10)
                throw SolverError("two-point cell problem did not converge");
        }
        std::vector<double> wc(cells, 0.0);
        for (std::size_t c = 0; c < cells; ++c)
            if (dof[c] >= 0)
                wc[c] = w[static_cast<std::size_t>(dof[c])];
        for (const auto& l : links) {
            const double u = l.trans * (wc[l.a] - wc[l.b] - (l.axis == j ? h : 0.0));
            k[l.axis][j] -= u;
        }
        for (int i = 0; i < geom.dim; ++i)
            k[i][j] *= (geom.dim == 1 ? 1.0 : h) / geom.measure_m;
    }
    return k;
}

CorrectorReconstruction reconstruct_correctors(const EffectiveProps& props,
                                               const std::array<double, 2>& grad_p,
                                               const std::array<double, 2>& grad_beta,
                                               const std::array<double, 2>& gravity)
{
    CorrectorReconstruction out;
    if (props.xi.empty())
        return out;
    const std::size_t nodes = props.xi.front().values.size();
    out.w_p.assign(nodes, 0.0);
    out.w_s.assign(nodes, 0.0);
    for (int j = 0; j < props.dim; ++j) {
        const auto& xi = props.xi[static_cast<std::size_t>(j)].values;
        const double cp = grad_p[j] - gravity[j];
        const double cs = grad_beta[j];
        for (std::size_t v = 0; v < nodes; ++v) {
            out.w_p[v] += xi[v] * cp;
            out.w_s[v] += xi[v] * cs;
        }
    }
    return out;
}

} // namespace dpflow
