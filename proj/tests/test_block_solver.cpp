#include "doctest.h"

#include "dpflow/block_solver.hpp"
#include "dpflow/error.hpp"

#include <algorithm>
#include <cmath>

using namespace dpflow;

namespace {

const MediumCurves& matrix_curves()
{
    static const MediumCurves m(Medium::matrix, [] {
        CurveParams p;
        p.shape = 0.5;
        return p;
    }());
    return m;
}

BlockGrid box_block(std::size_t n = 16)
{
    return block_grid_from_cell(build_geometry(CenteredBox{0.5}, n));
}

BlockGrid line_block(std::size_t n = 32)
{
    return block_grid_from_cell(build_geometry(CenteredBox{0.5}, n, 1));
}

std::vector<BlockState> run(const BlockGrid& g, BlockState s, const std::vector<double>& trace,
                            double dt)
{
    std::vector<BlockState> out;
    for (double b : trace) {
        s = block_step(s, g, matrix_curves(), b, dt);
        out.push_back(s);
    }
    return out;
}

} // namespace

TEST_CASE("block grid from the cell geometry")
{
    const auto g = box_block(16);
    CHECK(g.cells == 64);
    CHECK(g.measure == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(g.interface.size() == 32);
    const auto l = line_block(32);
    CHECK(l.cells == 16);
    CHECK(l.interface.size() == 2);
    CHECK(l.measure == doctest::Approx(0.5).epsilon(1e-14));

    // A slab touching the periodic seam keeps its wrap-around links.
    const auto slab = block_grid_from_cell(build_geometry(HorizontalSlab{0.5}, 8));
    CHECK(slab.cells == 32);
    CHECK(slab.links.size() == 32 + 24);
    CHECK(slab.interface.size() == 16);
}

TEST_CASE("constant states with matching boundary data are exact fixed points")
{
    for (const auto& g : {box_block(), line_block()}) {
        for (double c : {0.0, 0.3, 0.7, 1.0}) {
            const auto eq = equilibrium_state(g, c);
            BlockState s = eq;
            for (int k = 0; k < 5; ++k) {
                const auto next = block_step(s, g, matrix_curves(), c, 0.05);
                CHECK(transfer_source(s, next, g, 0.05) == 0.0);
                s = next;
            }
            CHECK(s.s == eq.s);
        }
    }
}

TEST_CASE("imbibition: monotone saturation, negative decaying transfer")
{
    const auto g = box_block();
    BlockState s = equilibrium_state(g, 0.0);
    const double dt = 0.002;
    double prev_q = -1e300;
    for (int k = 0; k < 50; ++k) {
        const auto next = block_step(s, g, matrix_curves(), 1.0, dt);
        for (std::size_t i = 0; i < g.cells; ++i) {
            CHECK(next.s[i] >= s.s[i] - 1e-12);
            CHECK(next.s[i] <= 1.0 + 1e-12);
        }
        const double q = transfer_source(s, next, g, dt);
        CHECK(q < 0.0);
        if (k > 0)
            CHECK(std::abs(q) < std::abs(prev_q));
        prev_q = q;
        s = next;
    }
}

TEST_CASE("transfer equals the interface flux sum")
{
    for (const auto& g : {box_block(), line_block()}) {
        BlockState s = equilibrium_state(g, 0.2);
        for (int k = 0; k < 20; ++k) {
            const double b = k < 10 ? 0.9 : 0.4;
            const double dt = 0.01;
            const auto next = block_step(s, g, matrix_curves(), b, dt);
            const double q = transfer_source(s, next, g, dt);
            const double flux = interface_flux(next, g, matrix_curves(), b);
            CHECK(std::abs(q + flux / g.measure) <= 1e-10 * std::max(1.0, std::abs(q)));
            s = next;
        }
    }
}

TEST_CASE("per-step maximum principle")
{
    const auto g = line_block();
    BlockState s = equilibrium_state(g, 0.0);
    for (std::size_t i = 0; i < g.cells; ++i)
        s.s[i] = 0.5 + 0.4 * std::sin(static_cast<double>(i));
    for (int k = 0; k < 20; ++k) {
        const double b = 0.3;
        const auto next = block_step(s, g, matrix_curves(), b, 0.01);
        const double lo = std::min(*std::min_element(s.s.begin(), s.s.end()), b);
        const double hi = std::max(*std::max_element(s.s.begin(), s.s.end()), b);
        for (double v : next.s) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
        s = next;
    }
}

TEST_CASE("comparison principle for nested boundary traces")
{
    const auto g = box_block();
    std::vector<double> lower, upper;
    for (int k = 0; k < 50; ++k) {
        lower.push_back(k < 25 ? 0.4 : 0.2);
        upper.push_back(k < 25 ? 0.6 : 0.5);
    }
    BlockState a = equilibrium_state(g, 0.1);
    BlockState b = equilibrium_state(g, 0.1);
    for (std::size_t i = 0; i < g.cells; i += 3)
        b.s[i] = 0.3;
    const auto ra = run(g, a, lower, 0.01);
    const auto rb = run(g, b, upper, 0.01);
    for (std::size_t k = 0; k < ra.size(); ++k)
        for (std::size_t i = 0; i < g.cells; ++i)
            CHECK(rb[k].s[i] >= ra[k].s[i] - 1e-12);
}

TEST_CASE("uniqueness: identical runs agree bitwise, energy grows with the data gap")
{
    const auto g = line_block();
    const std::vector<double> trace(30, 0.8);
    const auto base = equilibrium_state(g, 0.1);
    const auto r1 = run(g, base, trace, 0.01);
    const auto r2 = run(g, base, trace, 0.01);
    for (std::size_t k = 0; k < r1.size(); ++k)
        CHECK(r1[k].s == r2[k].s);
    CHECK(uniqueness_energy_check(r1, r2, g, matrix_curves()) <= 1e-18);

    double prev = 1e300;
    for (double amp : {0.4, 0.2, 0.1}) {
        BlockState bumped = base;
        for (std::size_t i = 6; i < 10; ++i)
            bumped.s[i] += amp;
        const auto rb = run(g, bumped, trace, 0.01);
        const double e = uniqueness_energy_check(r1, rb, g, matrix_curves());
        CHECK(e > 0.0);
        CHECK(e < prev);
        prev = e;
    }
    CHECK_THROWS_AS(uniqueness_energy_check(r1, {}, g, matrix_curves()), DomainError);
}

TEST_CASE("boundary sensitivity matches a finite difference")
{
    const auto g = line_block(16);
    const auto s0 = equilibrium_state(g, 0.3);
    const double dt = 0.02, b = 0.6, h = 1e-6;
    std::vector<double> ds;
    const auto mid = block_step(s0, g, matrix_curves(), b, dt, {}, nullptr, &ds);
    const auto up = block_step(s0, g, matrix_curves(), b + h, dt);
    const auto dn = block_step(s0, g, matrix_curves(), b - h, dt);
    for (std::size_t i = 0; i < g.cells; ++i)
        CHECK(ds[i] == doctest::Approx((up.s[i] - dn.s[i]) / (2 * h)).epsilon(1e-5));
    (void)mid;
}

TEST_CASE("ensemble with sub-cycling and trial/commit")
{
    const auto g = line_block(16);
    std::vector<BlockState> init(3, equilibrium_state(g, 0.2));
    BlockEnsemble ens(g, matrix_curves(), init, 2);
    const auto trial = ens.advance({0.2, 0.5, 0.9}, 0.02);
    CHECK(trial.q_w[0] == 0.0);
    CHECK(trial.q_w[1] < 0.0);
    CHECK(trial.q_w[2] < trial.q_w[1]);
    CHECK(ens.q_w()[1] == 0.0);

    // Sub-cycled sensitivity against a finite difference of the whole advance.
    const double h = 1e-6;
    const auto up = ens.advance({0.2, 0.5 + h, 0.9}, 0.02);
    const auto dn = ens.advance({0.2, 0.5 - h, 0.9}, 0.02);
    CHECK(trial.dq_db[1] == doctest::Approx((up.q_w[1] - dn.q_w[1]) / (2 * h)).epsilon(1e-5));

    ens.commit(trial);
    CHECK(ens.q_w()[2] == trial.q_w[2]);
    CHECK(ens.q_n()[2] == -trial.q_w[2]);
    CHECK(ens.states()[1].t == doctest::Approx(0.02));
}

TEST_CASE("block argument checks")
{
    const auto g = line_block();
    const auto s = equilibrium_state(g, 0.5);
    CHECK_THROWS_AS(block_step(s, g, matrix_curves(), 1.5, 0.1), DomainError);
    CHECK_THROWS_AS(block_step(s, g, matrix_curves(), 0.5, 0.0), DomainError);
    CHECK_THROWS_AS(equilibrium_state(g, -0.1), DomainError);
    CHECK_THROWS_AS(block_step(BlockState{{0.5}, 0.0}, g, matrix_curves(), 0.5, 0.1), DomainError);
}
