#pragma once
// Constitutive laws of the two media and the transforms built on them:
// capillary diffusion alpha, Kirchhoff transform beta, global-pressure
// offsets G_w/G_n, the energy density, and the fracture->matrix coupling maps.

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dpflow {

enum class Medium { fracture, matrix };

std::string to_string(Medium m);

// Built-in curve family:
//   mob_w(s) = s^a / mu_w,  mob_n(s) = (1-s)^b / mu_n,
//   pc(s)    = P_e (1-s)(1 + c s)   with 0 <= c < 1.
struct CurveParams {
    double exp_w = 2.0;          // a
    double exp_n = 2.0;          // b
    double visc_w = 1.0;         // dimensionless, absorbed into the mobility
    double visc_n = 1.0;
    double entry_pressure = 1.0; // P_e = pc(0), Pa
    double shape = 0.0;          // c

    // Human-readable violations of the curve assumptions; empty when valid.
    std::vector<std::string> violations(const std::string& label) const;
};

// Piecewise cubic Hermite table of F(s) = int_0^s f on a uniform grid of
// [0, 1], with node values from adaptive Gauss-Kronrod quadrature and node
// slopes f(s_i), limited to keep the interpolant monotone when f >= 0.
class IntegralTable {
public:
    IntegralTable() = default;
    IntegralTable(const std::function<double(double)>& integrand, std::size_t nodes,
                  double rel_tol);

    double value(double s) const;
    double slope(double s) const;
    double total() const { return values_.back(); }
    std::size_t nodes() const { return values_.size(); }

    // Inverse of an increasing table: returns s with value(s) = v.
    double inverse(double v) const;

private:
    double h_ = 0.0;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

// Adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol,
                 double abs_tol = 1e-15);

class MediumCurves {
public:
    static constexpr std::size_t table_nodes = 2049;

    MediumCurves(Medium id, const CurveParams& params);

    Medium id() const { return id_; }
    const CurveParams& params() const { return params_; }

    double pc(double s) const;
    double pc_prime(double s) const;
    double pc_inverse(double p) const;
    double mob_w(double s) const;
    double mob_n(double s) const;
    double mob_w_prime(double s) const;
    double mob_n_prime(double s) const;
    double total_mobility(double s) const { return mob_w(s) + mob_n(s); }
    // Wetting fractional flow mob_w / (mob_w + mob_n) and its derivative.
    double frac_w(double s) const;
    double frac_w_prime(double s) const;

    double alpha(double s) const;
    double beta(double s) const;
    double beta_inverse(double b) const;
    double beta_max() const { return beta_.total(); }

    // Global-pressure offsets with the normalisation G_n(1) = 0.
    double g_n(double s) const;
    double g_w(double s) const;
    double g_n_prime(double s) const;
    double g_w_prime(double s) const;
    double gn0() const { return gn_.total(); }

    // b(s) = int_0^s sqrt(mob_n mob_w / lambda) |pc'|; enters the energy identity.
    double kirchhoff_energy(double s) const;
    double kirchhoff_energy_prime(double s) const;

    // int_1^s pc(u) du
    double energy_density(double s) const;

    // Wetting and nonwetting phase pressures from global pressure.
    std::pair<double, double> phase_pressures(double global_pressure, double s) const;

    // Smallest total mobility on [0,1] (the constant L0), sampled on the table grid.
    double min_total_mobility() const { return min_total_mobility_; }

private:
    void check_saturation(double s, const char* what) const;

    Medium id_;
    CurveParams params_;
    IntegralTable beta_;
    IntegralTable gn_;     // int_0^s frac_w |pc'|
    IntegralTable frak_b_; // int_0^s sqrt(...) |pc'|
    IntegralTable pc_int_; // int_0^s pc
    double min_total_mobility_ = 0.0;
};

// Fracture/matrix pair with the capillary-equilibrium maps
//   P(S) = pc_m^{-1}(pc_f(S)),   M(b) = beta_m(P(beta_f^{-1}(b))).
class CurvePair {
public:
    CurvePair(CurveParams fracture, CurveParams matrix);

    const MediumCurves& fracture() const { return fracture_; }
    const MediumCurves& matrix() const { return matrix_; }
    const MediumCurves& curves(Medium m) const { return m == Medium::fracture ? fracture_ : matrix_; }

    double coupling_P(double s_fracture) const;
    double coupling_P_prime(double s_fracture) const;
    double coupling_M(double b) const;
    // Matrix -> fracture inverse of P.
    double coupling_P_inverse(double s_matrix) const;

    double lipschitz_M() const { return lipschitz_M_; }

private:
    MediumCurves fracture_;
    MediumCurves matrix_;
    double lipschitz_M_ = 0.0;
};

// Empirical Hoelder fit |beta^{-1}(b1) - beta^{-1}(b2)| <= C |b1 - b2|^gamma.
struct HolderFit {
    double constant = 0.0;
    double exponent = 0.0;
};

HolderFit fit_beta_inverse_holder(const MediumCurves& curves, std::size_t samples = 400);

} // namespace dpflow
