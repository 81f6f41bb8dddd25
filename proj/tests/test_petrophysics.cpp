#include "doctest.h"

#include "dpflow/error.hpp"
#include "dpflow/petrophysics.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <random>

using namespace dpflow;

namespace {

// Reference family: mob_w = s^2, mob_n = (1-s)^2, pc_f = 1 - s, pc_m = (1-s)(1+s/2).
CurveParams fracture_params()
{
    return CurveParams{};
}

CurveParams matrix_params()
{
    CurveParams p;
    p.shape = 0.5;
    return p;
}

// Oracle integrands written from the closed-form curves, independent of MediumCurves.
double alpha_ref(double s, double c)
{
    const double lw = s * s;
    const double ln = (1 - s) * (1 - s);
    return lw * ln / (lw + ln) * std::abs(c - 1 - 2 * c * s);
}

double quad_gk(const std::function<double(double)>& f, double a, double b)
{
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
}

double quad_ts(const std::function<double(double)>& f, double a, double b)
{
    boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(f, a, b, 1e-14);
}

// Bisection on a decreasing function, used as the pc_inverse oracle.
double bisect_decreasing(const std::function<double(double)>& f, double target)
{
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Regression constant int_0^1 s^2(1-s)^2/(s^2+(1-s)^2) ds, from two independent quadratures.
constexpr double beta_f_total = 0.059365748365390821;

} // namespace

TEST_CASE("pc evaluation and domain")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    const MediumCurves m(Medium::matrix, matrix_params());
    CHECK(f.pc(1.0) == 0.0);
    CHECK(m.pc(1.0) == 0.0);
    CHECK(f.pc(0.25) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(m.pc(0.5) == doctest::Approx(0.625).epsilon(1e-15));
    CHECK_THROWS_AS(f.pc(-0.1), DomainError);
    CHECK_THROWS_AS(f.pc(1.0000001), DomainError);
    for (int i = 0; i < 100; ++i) {
        const double s = i / 100.0;
        CHECK(m.pc(s + 0.01) < m.pc(s));
        CHECK(m.pc_prime(s) < 0.0);
    }
}

TEST_CASE("pc_inverse")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    const MediumCurves m(Medium::matrix, matrix_params());
    CHECK(f.pc_inverse(0.0) == 1.0);
    CHECK(m.pc_inverse(1.0) == 0.0);
    const double oracle = bisect_decreasing([](double s) { return (1 - s) * (1 + s / 2); }, 0.5);
    CHECK(std::abs(m.pc_inverse(0.5) - oracle) <= 1e-12);
    for (int i = 0; i <= 200; ++i) {
        const double p = i / 200.0;
        CHECK(std::abs(m.pc(m.pc_inverse(p)) - p) <= 1e-12);
    }
    CHECK_THROWS_AS(m.pc_inverse(1.5), DomainError);
    CHECK_THROWS_AS(m.pc_inverse(-1e-3), DomainError);
}

TEST_CASE("alpha, beta and the quadrature oracle")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    CHECK(f.beta(0.0) == 0.0);
    CHECK(f.alpha(0.0) == 0.0);
    CHECK(f.alpha(1.0) == 0.0);

    auto integrand = [](double s) { return alpha_ref(s, 0.0); };
    const double gk = quad_gk(integrand, 0.0, 1.0);
    const double ts = quad_ts(integrand, 0.0, 1.0);
    REQUIRE(std::abs(gk - ts) <= 1e-10);
    CHECK(std::abs(gk - beta_f_total) <= 1e-12);
    CHECK(std::abs(f.beta(1.0) - beta_f_total) <= 1e-12);

    for (double s : {0.1, 0.37, 0.5, 0.83}) {
        const double expect = quad_gk(integrand, 0.0, s);
        CHECK(std::abs(f.beta(s) - expect) <= 1e-12);
    }

    const MediumCurves m(Medium::matrix, matrix_params());
    auto integrand_m = [](double s) { return alpha_ref(s, 0.5); };
    for (double s : {0.2, 0.6, 1.0})
        CHECK(std::abs(m.beta(s) - quad_ts(integrand_m, 0.0, s)) <= 1e-12);
}

TEST_CASE("beta_inverse")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    CHECK(f.beta_inverse(0.0) == 0.0);
    CHECK(f.beta_inverse(f.beta_max()) == 1.0);
    CHECK(std::abs(f.beta_inverse(f.beta(0.37)) - 0.37) <= 1e-8);
    CHECK_THROWS_AS(f.beta_inverse(-1e-9), DomainError);
    CHECK_THROWS_AS(f.beta_inverse(1.0), DomainError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.0, f.beta_max());
    double prev_b = 0.0, prev_s = 0.0;
    std::vector<double> bs(500);
    for (double& b : bs)
        b = dist(rng);
    std::sort(bs.begin(), bs.end());
    for (double b : bs) {
        const double s = f.beta_inverse(b);
        CHECK(std::abs(f.beta(s) - b) <= 1e-10);
        CHECK(s >= prev_s);
        CHECK(b >= prev_b);
        prev_b = b;
        prev_s = s;
    }
}

TEST_CASE("beta inverse is Hoelder continuous with a fitted constant")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    const HolderFit fit = fit_beta_inverse_holder(f);
    // mob_w ~ s^2 near 0 gives beta ~ s^3, hence exponent close to 1/3.
    CHECK(fit.exponent == doctest::Approx(1.0 / 3.0).epsilon(0.02));
    CHECK(fit.exponent < 1.0);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        // Bias half the samples towards the degenerate ends.
        double b1 = unit(rng) * f.beta_max();
        double b2 = i % 2 == 0 ? b1 * unit(rng) * unit(rng) : unit(rng) * f.beta_max();
        const double lhs = std::abs(f.beta_inverse(b1) - f.beta_inverse(b2));
        const double rhs = fit.constant * std::pow(std::abs(b1 - b2), fit.exponent);
        CHECK(lhs <= rhs + 1e-10);
    }
}

TEST_CASE("global pressure offsets")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    CHECK(std::abs(f.g_n(1.0)) <= 1e-15);
    CHECK(std::abs(f.g_w(1.0)) <= 1e-15);

    auto ln_over_lam = [](double s) {
        const double lw = s * s, ln = (1 - s) * (1 - s);
        return ln / (lw + ln);
    };
    const double expect = -quad_ts(ln_over_lam, 0.5, 1.0);
    CHECK(std::abs(f.g_w(0.5) - expect) <= 1e-12);
    CHECK(f.g_w(0.5) <= 0.0);

    auto lw_over_lam = [](double s) {
        const double lw = s * s, ln = (1 - s) * (1 - s);
        return lw / (lw + ln);
    };
    CHECK(std::abs(f.gn0() - quad_gk(lw_over_lam, 0.0, 1.0)) <= 1e-12);

    for (int i = 0; i <= 100; ++i) {
        const double s = i / 100.0;
        CHECK(f.g_n(s) >= -1e-15);
        CHECK(f.g_w(s) <= 1e-15);
    }
}

TEST_CASE("phase pressures")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    const MediumCurves m(Medium::matrix, matrix_params());
    const auto [pw1, pn1] = f.phase_pressures(5.0, 1.0);
    CHECK(pw1 == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(pn1 == doctest::Approx(5.0).epsilon(1e-15));

    const auto [pw0, pn0] = m.phase_pressures(0.0, 0.0);
    auto gn_integrand = [](double s) {
        const double lw = s * s, ln = (1 - s) * (1 - s);
        return lw / (lw + ln) * (0.5 + s);
    };
    const double gn0 = quad_ts(gn_integrand, 0.0, 1.0);
    CHECK(std::abs(pn0 - gn0) <= 1e-12);
    CHECK(std::abs(pw0 - (gn0 - 1.0)) <= 1e-12);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> sdist(0.0, 1.0), pdist(-100.0, 100.0);
    for (int i = 0; i < 100; ++i) {
        const double s = sdist(rng), p = pdist(rng);
        const auto [pw, pn] = m.phase_pressures(p, s);
        CHECK(std::abs((pn - pw) - m.pc(s)) <= 1e-12);
        CHECK(pw <= p + 1e-12);
        CHECK(pn >= p - 1e-12);
    }
}

TEST_CASE("derivative relations mob_w G_w' = alpha and mob_n G_n' = -alpha")
{
    const MediumCurves m(Medium::matrix, matrix_params());
    const double h = 1e-6;
    for (int i = 1; i < 100; ++i) {
        const double s = i / 100.0;
        const double dgw = (m.g_w(s + h) - m.g_w(s - h)) / (2 * h);
        const double dgn = (m.g_n(s + h) - m.g_n(s - h)) / (2 * h);
        CHECK(std::abs(m.mob_w(s) * dgw - m.alpha(s)) <= 1e-5);
        CHECK(std::abs(m.mob_n(s) * dgn + m.alpha(s)) <= 1e-5);
    }
}

TEST_CASE("coupling map P")
{
    const CurvePair pair(fracture_params(), matrix_params());
    CHECK(pair.coupling_P(0.0) == 0.0);
    CHECK(pair.coupling_P(1.0) == 1.0);
    CHECK(std::abs(pair.coupling_P(0.5) - 0.6180339887498949) <= 1e-12);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        const double S = i / 100.0;
        const double p = pair.coupling_P(S);
        CHECK(p > prev);
        prev = p;
        CHECK(std::abs(pair.coupling_P_inverse(p) - S) <= 1e-12);
    }
}

TEST_CASE("coupling map M")
{
    const CurvePair pair(fracture_params(), matrix_params());
    const auto& f = pair.fracture();
    const auto& m = pair.matrix();
    CHECK(pair.coupling_M(0.0) == 0.0);
    CHECK(std::abs(pair.coupling_M(f.beta_max()) - m.beta_max()) <= 1e-15);
    CHECK_THROWS_AS(pair.coupling_M(-1e-3), DomainError);

    // Both sides from independent quadrature of the closed-form integrands.
    for (int i = 0; i <= 50; ++i) {
        const double s = i / 50.0;
        const double bf = quad_gk([](double u) { return alpha_ref(u, 0.0); }, 0.0, s);
        const double Ps = (-1.0 + std::sqrt(1.0 + 8.0 * s)) / 2.0;
        const double bm = quad_gk([](double u) { return alpha_ref(u, 0.5); }, 0.0, Ps);
        CHECK(std::abs(pair.coupling_M(std::min(bf, f.beta_max())) - bm) <= 1e-9);
    }

    // Lipschitz bound on a denser sample than the one used at construction.
    double prev = 0.0;
    const int n = 20011;
    for (int i = 1; i <= n; ++i) {
        const double b0 = f.beta_max() * (i - 1) / n;
        const double b1 = f.beta_max() * i / n;
        const double cur = pair.coupling_M(b1);
        CHECK((cur - prev) / (b1 - b0) <= pair.lipschitz_M());
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("endpoint mismatch is rejected")
{
    CurveParams m = matrix_params();
    m.entry_pressure = 1.5;
    CHECK_THROWS_AS(CurvePair(fracture_params(), m), ConfigError);
    CurveParams bad;
    bad.shape = 1.2;
    CHECK_THROWS_AS(MediumCurves(Medium::fracture, bad), ConfigError);
    CHECK(!bad.violations("x").empty());
    CHECK(bad.violations("x").front().rfind("A.3", 0) == 0);
}

TEST_CASE("energy density")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    CHECK(f.energy_density(1.0) == 0.0);
    CHECK(std::abs(f.energy_density(0.0) + 0.5) <= 1e-14);
    double prev = f.energy_density(0.0);
    for (int i = 1; i <= 100; ++i) {
        const double v = f.energy_density(i / 100.0);
        CHECK(v >= prev);
        CHECK(v <= 0.0);
        prev = v;
    }
}

TEST_CASE("energy identity for the global pressure split")
{
    const MediumCurves m(Medium::matrix, matrix_params());
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> sdist(0.01, 0.99), gdist(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const double s = sdist(rng);
        const double gP[2] = {gdist(rng), gdist(rng)};
        const double h[2] = {gdist(rng), gdist(rng)};
        double lhs = 0.0, rhs = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double dpw = gP[k] + m.g_w_prime(s) * h[k];
            const double dpn = gP[k] + m.g_n_prime(s) * h[k];
            lhs += m.mob_n(s) * dpn * dpn + m.mob_w(s) * dpw * dpw;
            const double db = m.kirchhoff_energy_prime(s) * h[k];
            rhs += m.total_mobility(s) * gP[k] * gP[k] + db * db;
        }
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("assumption A.4 lower bound on total mobility")
{
    const MediumCurves f(Medium::fracture, fracture_params());
    // s^2 + (1-s)^2 has its minimum 1/2 at s = 1/2.
    CHECK(f.min_total_mobility() == doctest::Approx(0.5).epsilon(1e-12));
}
