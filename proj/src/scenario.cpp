#include "dpflow/scenario.hpp"

#include "dpflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dpflow {

namespace {

CurveParams read_curves(const ConfigDocument& doc, const std::string& section, CurveParams p)
{
    p.exp_w = doc.get_double(section, "exp_w", p.exp_w);
    p.exp_n = doc.get_double(section, "exp_n", p.exp_n);
    p.visc_w = doc.get_double(section, "visc_w", p.visc_w);
    p.visc_n = doc.get_double(section, "visc_n", p.visc_n);
    p.entry_pressure = doc.get_double(section, "entry_pressure", p.entry_pressure);
    p.shape = doc.get_double(section, "shape", p.shape);
    return p;
}

RateRegion read_region(const ConfigDocument& doc, const std::string& prefix, RateRegion r)
{
    r.rate = doc.get_double("sources", prefix + "_rate", r.rate);
    const auto box = doc.get_doubles("sources", prefix + "_box", {r.box.begin(), r.box.end()});
    if (box.size() != 4)
        throw ParseError(doc.origin() + ": sources." + prefix + "_box needs x0, x1, y0, y1");
    std::copy(box.begin(), box.end(), r.box.begin());
    return r;
}

std::vector<std::string> split_names(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

bool in_box(const std::array<double, 4>& box, double x, double y, int dim)
{
    return x >= box[0] && x <= box[1] && (dim == 1 || (y >= box[2] && y <= box[3]));
}

bool open_unit(double v)
{
    return v > 0.0 && v < 1.0;
}

bool closed_unit(double v)
{
    return v >= 0.0 && v <= 1.0;
}

} // namespace

ScenarioConfig ScenarioConfig::from_document(const ConfigDocument& doc)
{
    ScenarioConfig c;
    c.fracture = read_curves(doc, "curves.fracture", c.fracture);
    c.matrix = read_curves(doc, "curves.matrix", c.matrix);

    c.cell_shape = doc.get_string("cell", "shape", c.cell_shape);
    c.box_side = doc.get_double("cell", "box_side", c.box_side);
    c.slab_thickness = doc.get_double("cell", "slab_thickness", c.slab_thickness);
    c.mask_path = doc.get_string("cell", "mask_path", c.mask_path);
    c.cell_resolution = doc.get_int("cell", "resolution", c.cell_resolution);
    c.cell_dim = static_cast<int>(doc.get_int("cell", "dim", c.cell_dim));
    c.porosity_fracture = doc.get_double("cell", "porosity_fracture", c.porosity_fracture);
    c.porosity_matrix = doc.get_double("cell", "porosity_matrix", c.porosity_matrix);
    c.perm_fracture = doc.get_double("cell", "perm_fracture", c.perm_fracture);
    c.perm_matrix = doc.get_double("cell", "perm_matrix", c.perm_matrix);

    c.macro_dim = static_cast<int>(doc.get_int("macro", "dim", c.macro_dim));
    c.nx = doc.get_int("macro", "nx", c.nx);
    c.ny = doc.get_int("macro", "ny", c.ny);
    c.lx = doc.get_double("macro", "lx", c.lx);
    c.ly = doc.get_double("macro", "ly", c.ly);
    c.gravity[0] = doc.get_double("macro", "gravity_x", c.gravity[0]);
    c.gravity[1] = doc.get_double("macro", "gravity_y", c.gravity[1]);

    c.theta = doc.get_double("regime", "theta", c.theta);

    c.t_end = doc.get_double("time", "t_end", c.t_end);
    c.dt_init = doc.get_double("time", "dt_init", c.dt_init);
    c.dt_max = doc.get_double("time", "dt_max", c.dt_max);
    c.block_substeps = doc.get_int("time", "block_substeps", c.block_substeps);
    c.max_steps = doc.get_int("time", "max_steps", c.max_steps);

    c.injection = read_region(doc, "injection", c.injection);
    c.production = read_region(doc, "production", c.production);
    c.s_inj_w = doc.get_double("sources", "s_inj_w", c.s_inj_w);
    c.t_stop = doc.get_double("sources", "t_stop", c.t_stop);

    if (const auto sides = doc.raw("boundary", "dirichlet"))
        c.dirichlet_sides = split_names(*sides);
    c.boundary_pressure = doc.get_double("boundary", "pressure", c.boundary_pressure);
    c.boundary_saturation = doc.get_double("boundary", "saturation", c.boundary_saturation);

    c.initial_saturation = doc.get_double("initial", "saturation", c.initial_saturation);
    if (doc.has("initial", "matrix_saturation"))
        c.initial_matrix_saturation = doc.get_double("initial", "matrix_saturation", 0.0);

    c.micro_epsilon = doc.get_double("micro", "epsilon", c.micro_epsilon);
    c.micro_resolution = doc.get_int("micro", "resolution", c.micro_resolution);
    c.micro_layout = doc.get_string("micro", "layout", c.micro_layout);

    c.epsilons = doc.get_doubles("convergence", "epsilons", c.epsilons);
    c.convergence_macro_cells = doc.get_int("convergence", "macro_cells", c.convergence_macro_cells);
    c.convergence_k_star = doc.get_string("convergence", "k_star", c.convergence_k_star);

    c.demo_times = doc.get_doubles("block_demo", "times", c.demo_times);
    c.demo_values = doc.get_doubles("block_demo", "values", c.demo_values);
    c.demo_t_end = doc.get_double("block_demo", "t_end", c.demo_t_end);
    c.demo_dt = doc.get_double("block_demo", "dt", c.demo_dt);
    c.demo_initial_s = doc.get_double("block_demo", "initial_s", c.demo_initial_s);

    c.output_directory = doc.get_string("output", "directory", c.output_directory);
    c.snapshot_every = doc.get_int("output", "snapshot_every", c.snapshot_every);
    c.write_correctors = doc.get_bool("output", "correctors", c.write_correctors);

    const auto unused = doc.unused_keys();
    if (!unused.empty()) {
        std::ostringstream msg;
        msg << "unknown config key";
        for (const auto& u : unused)
            msg << "\n  " << u;
        throw ParseError(msg.str());
    }
    return c;
}

std::vector<std::string> validate(const ScenarioConfig& c)
{
    std::vector<std::string> out;
    auto add = [&](const std::string& s) { out.push_back(s); };

    if (!open_unit(c.porosity_fracture) || !open_unit(c.porosity_matrix))
        add("A.1: porosity out of (0,1)");
    if (!(c.perm_fracture > 0.0) || !(c.perm_matrix > 0.0) || !std::isfinite(c.perm_fracture) ||
        !std::isfinite(c.perm_matrix))
        add("A.2: permeability bounds need 0 < k_min <= k_max");
    if (!(c.theta > 0.0))
        add("A.2: theta must be positive");

    for (const auto& v : c.fracture.violations("fracture"))
        add(v);
    for (const auto& v : c.matrix.violations("matrix"))
        add(v);
    if (c.fracture.entry_pressure != c.matrix.entry_pressure)
        add("A.3: P_{f,c}(0) != P_{m,c}(0)");

    if (!closed_unit(c.initial_saturation) ||
        (c.initial_matrix_saturation && !closed_unit(*c.initial_matrix_saturation)) ||
        !closed_unit(c.demo_initial_s))
        add("A.8: initial saturation out of [0,1]");
    if (!closed_unit(c.boundary_saturation))
        add("A.8: boundary saturation out of [0,1]");
    for (double v : c.demo_values)
        if (!closed_unit(v)) {
            add("A.8: block_demo boundary value out of [0,1]");
            break;
        }

    if (!(c.injection.rate >= 0.0) || !(c.production.rate >= 0.0))
        add("A.9: source rates f_I, f_P must be >= 0");
    if (!closed_unit(c.s_inj_w))
        add("A.9: injection saturation out of [0,1]");

    // Plumbing checks without an assumption tag of their own.
    if (c.cell_shape != "box" && c.cell_shape != "slab" && c.cell_shape != "mask")
        add("cell.shape must be box, slab or mask");
    if (c.cell_shape == "mask" && c.mask_path.empty())
        add("cell.mask_path is required for shape = mask");
    if (c.cell_dim != 1 && c.cell_dim != 2)
        add("cell.dim must be 1 or 2");
    if (c.cell_resolution < 4)
        add("cell.resolution must be >= 4");
    if (c.macro_dim != 1 && c.macro_dim != 2)
        add("macro.dim must be 1 or 2");
    if (c.nx < 1 || c.ny < 1 || !(c.lx > 0.0) || !(c.ly > 0.0))
        add("macro grid needs positive sizes");
    if (!(c.t_end >= 0.0) || !(c.dt_init > 0.0) || !(c.dt_max >= c.dt_init))
        add("time: need t_end >= 0 and 0 < dt_init <= dt_max");
    if (c.block_substeps < 1)
        add("time.block_substeps must be >= 1");
    static const std::vector<std::string> side_names{"left", "right", "bottom", "top"};
    for (const auto& s : c.dirichlet_sides)
        if (std::find(side_names.begin(), side_names.end(), s) == side_names.end())
            add("boundary.dirichlet: unknown side '" + s + "'");
    if (c.micro_layout != "strip" && c.micro_layout != "full")
        add("micro.layout must be strip or full");
    if (c.micro_resolution < 8)
        add("micro.resolution must be >= 8");
    for (double e : c.epsilons)
        if (!(e > 0.0 && e <= 1.0)) {
            add("convergence.epsilons must lie in (0, 1]");
            break;
        }
    if (c.convergence_k_star != "two_point" && c.convergence_k_star != "q1")
        add("convergence.k_star must be two_point or q1");
    if (c.demo_times.size() != c.demo_values.size() || c.demo_times.empty() ||
        !std::is_sorted(c.demo_times.begin(), c.demo_times.end()))
        add("block_demo: times must be sorted and match values");
    if (!(c.demo_dt > 0.0) || !(c.demo_t_end >= 0.0))
        add("block_demo: need dt > 0 and t_end >= 0");
    if (c.snapshot_every < 0)
        add("output.snapshot_every must be >= 0");
    return out;
}

void require_valid(const ScenarioConfig& config)
{
    const auto bad = validate(config);
    if (bad.empty())
        return;
    std::ostringstream msg;
    msg << "invalid scenario:";
    for (const auto& b : bad)
        msg << "\n  " << b;
    throw ConfigError(msg.str());
}

CurvePair make_curve_pair(const ScenarioConfig& config)
{
    return CurvePair(config.fracture, config.matrix);
}

CellGeometry make_cell_geometry(const ScenarioConfig& config, long resolution)
{
    const auto n = static_cast<std::size_t>(resolution > 0 ? resolution : config.cell_resolution);
    CellGeometry g;
    if (config.cell_shape == "box")
        g = build_geometry(CenteredBox{config.box_side}, n, config.cell_dim);
    else if (config.cell_shape == "slab")
        g = build_geometry(HorizontalSlab{config.slab_thickness}, n, config.cell_dim);
    else
        g = build_geometry(CustomMask{config.mask_path}, n, config.cell_dim);
    const double pm = config.porosity_matrix;
    g.set_matrix_porosity([pm](double, double) { return pm; });
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const double k = g.matrix_mask[c] ? config.perm_matrix : config.perm_fracture;
        g.perm[c] = Tensor2{k, 0.0, k};
    }
    return g;
}

MacroProblem make_macro_problem(const ScenarioConfig& c, const EffectiveProps& props, const CurvePair& curves)
{
    MacroProblem p;
    p.grid = c.macro_dim == 1
                 ? StructuredGrid::line(static_cast<std::size_t>(c.nx), c.lx)
                 : StructuredGrid::rect(static_cast<std::size_t>(c.nx), static_cast<std::size_t>(c.ny), c.lx,
                                        c.ly);
    p.curves = &curves;
    p.coeff = MacroCoefficients::from(props);
    p.boundary.tags.dirichlet = {false, false, false, false};
    for (const auto& s : c.dirichlet_sides) {
        if (s == "left")
            p.boundary.tags.dirichlet[0] = true;
        else if (s == "right")
            p.boundary.tags.dirichlet[1] = true;
        else if (s == "bottom")
            p.boundary.tags.dirichlet[2] = true;
        else if (s == "top")
            p.boundary.tags.dirichlet[3] = true;
    }
    p.boundary.pressure = c.boundary_pressure;
    p.boundary.saturation = c.boundary_saturation;
    const std::size_t n = p.grid.cells();
    p.sources.f_inj.assign(n, 0.0);
    p.sources.f_prod.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = p.grid.center(i);
        if (in_box(c.injection.box, x[0], x[1], c.macro_dim))
            p.sources.f_inj[i] = c.injection.rate;
        if (in_box(c.production.box, x[0], x[1], c.macro_dim))
            p.sources.f_prod[i] = c.production.rate;
    }
    p.sources.s_inj_w = c.s_inj_w;
    p.sources.t_stop = c.t_stop;
    p.gravity = c.gravity;
    p.regime.theta = c.theta;
    return p;
}

MacroRunOptions make_macro_options(const ScenarioConfig& c, const CellGeometry& cell)
{
    MacroRunOptions o;
    o.t_end = c.t_end;
    o.dt_init = c.dt_init;
    o.dt_max = c.dt_max;
    o.max_steps = static_cast<int>(std::min<long>(c.max_steps, 1000000000L));
    o.block_substeps = static_cast<int>(c.block_substeps);
    o.block_initial_s = c.initial_matrix_saturation;
    if (RegimeConfig{c.theta}.regime() == Regime::critical)
        o.block_grid = block_grid_from_cell(cell);
    return o;
}

MicroProblem make_micro_problem(const ScenarioConfig& c, const CellGeometry& cell, double epsilon,
                                const CurvePair& curves)
{
    const MicroLayout layout = c.micro_layout == "full" ? MicroLayout::full : MicroLayout::strip;
    if (std::abs(c.lx - 1.0) > 1e-12 || (layout == MicroLayout::full && c.macro_dim == 2 && std::abs(c.ly - 1.0) > 1e-12))
        throw ConfigError("micro runs use the unit domain; set macro.lx (and ly) to 1");
    MicroProblem p;
    p.grid = build_micro_grid(cell, epsilon, c.theta, c.porosity_fracture, layout);
    p.curves = &curves;
    p.boundary.tags.dirichlet = {false, false, false, false};
    for (const auto& s : c.dirichlet_sides) {
        static const std::vector<std::string> names{"left", "right", "bottom", "top"};
        const auto it = std::find(names.begin(), names.end(), s);
        p.boundary.tags.dirichlet[static_cast<std::size_t>(it - names.begin())] = true;
    }
    p.boundary.pressure = c.boundary_pressure;
    p.boundary.saturation = c.boundary_saturation;
    const std::size_t n = p.grid.cells();
    p.sources.f_inj.assign(n, 0.0);
    p.sources.f_prod.assign(n, 0.0);
    const int dim = layout == MicroLayout::strip ? 1 : p.grid.grid.dim();
    for (std::size_t i = 0; i < n; ++i) {
        if (p.grid.is_matrix(i))
            continue;
        const auto x = p.grid.grid.center(i);
        if (in_box(c.injection.box, x[0], x[1], dim))
            p.sources.f_inj[i] = c.injection.rate;
        if (in_box(c.production.box, x[0], x[1], dim))
            p.sources.f_prod[i] = c.production.rate;
    }
    p.sources.s_inj_w = c.s_inj_w;
    p.sources.t_stop = c.t_stop;
    p.gravity = c.gravity;
    return p;
}

MicroRunOptions make_micro_options(const ScenarioConfig& c)
{
    MicroRunOptions o;
    o.t_end = c.t_end;
    o.dt_init = c.dt_init;
    o.dt_max = c.dt_max;
    return o;
}

ConvergenceSetup make_convergence_setup(const ScenarioConfig& c, const CurvePair& curves)
{
    if (c.cell_dim != 2)
        throw ConfigError("the convergence study needs cell.dim = 2");
    ConvergenceSetup s;
    s.curves = &curves;
    s.cell = make_cell_geometry(c, c.micro_resolution);
    s.theta = c.theta;
    s.fracture_porosity = c.porosity_fracture;
    s.t_end = c.t_end;
    s.dt = c.dt_init;
    s.macro_cells = static_cast<std::size_t>(std::max<long>(c.convergence_macro_cells, 2));
    s.initial_s = c.initial_saturation;
    s.boundary_s = c.boundary_saturation;
    s.boundary_p = c.boundary_pressure;
    s.gravity = c.gravity[0];
    s.k_star = c.convergence_k_star == "q1" ? KStarSource::q1 : KStarSource::two_point;
    return s;
}

double demo_boundary_value(const ScenarioConfig& c, double t)
{
    double v = c.demo_values.front();
    for (std::size_t i = 0; i < c.demo_times.size(); ++i)
        if (t >= c.demo_times[i])
            v = c.demo_values[i];
    return v;
}

} // namespace dpflow
