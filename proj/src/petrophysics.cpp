#include "dpflow/petrophysics.hpp"

#include "dpflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dpflow {

std::string to_string(Medium m)
{
    return m == Medium::fracture ? "fracture" : "matrix";
}

std::vector<std::string> CurveParams::violations(const std::string& label) const
{
    std::vector<std::string> out;
    auto add = [&](const std::string& assumption, const std::string& what) {
        out.push_back(assumption + ": " + label + " " + what);
    };
    if (!(exp_w >= 1.0) || !(exp_n >= 1.0))
        add("A.4", "mobility exponents must be >= 1");
    if (!(visc_w >= 1.0) || !(visc_n >= 1.0))
        add("A.4", "mobility exceeds 1 (dimensionless viscosities must be >= 1)");
    if (!(entry_pressure > 0.0))
        add("A.3", "capillary entry pressure must be positive");
    if (!(shape >= 0.0 && shape < 1.0))
        add("A.3", "capillary shape parameter must lie in [0, 1) so that pc' < 0");
    return out;
}

namespace {

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> gauss_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

double integrate_recursive(const std::function<double(double)>& f, double a, double b,
                           double rel_tol, double abs_tol, int depth)
{
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(mid);
    double kronrod = kronrod_w[7] * fc;
    double gauss = gauss_w[3] * fc;
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kronrod_x[j];
        const double sum = f(mid - dx) + f(mid + dx);
        kronrod += kronrod_w[j] * sum;
        if (j % 2 == 1)
            gauss += gauss_w[j / 2] * sum;
    }
    kronrod *= half;
    gauss *= half;
    const double err = std::abs(kronrod - gauss);
    if (err <= std::max(abs_tol, rel_tol * std::abs(kronrod)) || depth >= 40)
        return kronrod;
    return integrate_recursive(f, a, mid, rel_tol, 0.5 * abs_tol, depth + 1) +
           integrate_recursive(f, mid, b, rel_tol, 0.5 * abs_tol, depth + 1);
}

double clamp01(double s)
{
    return std::clamp(s, 0.0, 1.0);
}

} // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol,
                 double abs_tol)
{
    if (a == b)
        return 0.0;
    return integrate_recursive(f, a, b, rel_tol, abs_tol, 0);
}

IntegralTable::IntegralTable(const std::function<double(double)>& integrand, std::size_t nodes,
                             double rel_tol)
    : h_(1.0 / static_cast<double>(nodes - 1)), values_(nodes, 0.0), slopes_(nodes, 0.0)
{
    for (std::size_t i = 0; i < nodes; ++i)
        slopes_[i] = integrand(static_cast<double>(i) * h_);
    for (std::size_t i = 1; i < nodes; ++i) {
        const double a = static_cast<double>(i - 1) * h_;
        const double b = i + 1 == nodes ? 1.0 : static_cast<double>(i) * h_;
        values_[i] = values_[i - 1] + integrate(integrand, a, b, rel_tol, 1e-18);
    }
    // Fritsch-Carlson limiter; inactive on smooth data at this resolution.
    for (std::size_t i = 0; i + 1 < nodes; ++i) {
        const double secant = (values_[i + 1] - values_[i]) / h_;
        if (secant <= 0.0) {
            slopes_[i] = 0.0;
            slopes_[i + 1] = 0.0;
            continue;
        }
        const double a = slopes_[i] / secant;
        const double b = slopes_[i + 1] / secant;
        const double r2 = a * a + b * b;
        if (r2 > 9.0) {
            const double tau = 3.0 / std::sqrt(r2);
            slopes_[i] = tau * a * secant;
            slopes_[i + 1] = tau * b * secant;
        }
    }
}

double IntegralTable::value(double s) const
{
    const std::size_t last = values_.size() - 1;
    std::size_t k = static_cast<std::size_t>(s / h_);
    if (k >= last)
        k = last - 1;
    const double t = (s - static_cast<double>(k) * h_) / h_;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h10 = t3 - 2.0 * t2 + t;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double h11 = t3 - t2;
    return h00 * values_[k] + h10 * h_ * slopes_[k] + h01 * values_[k + 1] + h11 * h_ * slopes_[k + 1];
}

double IntegralTable::slope(double s) const
{
    const std::size_t last = values_.size() - 1;
    std::size_t k = static_cast<std::size_t>(s / h_);
    if (k >= last)
        k = last - 1;
    const double t = (s - static_cast<double>(k) * h_) / h_;
    const double t2 = t * t;
    const double d00 = (6.0 * t2 - 6.0 * t) / h_;
    const double d10 = 3.0 * t2 - 4.0 * t + 1.0;
    const double d01 = (-6.0 * t2 + 6.0 * t) / h_;
    const double d11 = 3.0 * t2 - 2.0 * t;
    return d00 * values_[k] + d10 * slopes_[k] + d01 * values_[k + 1] + d11 * slopes_[k + 1];
}

double IntegralTable::inverse(double v) const
{
    if (v <= 0.0)
        return 0.0;
    if (v >= values_.back())
        return 1.0;
    const auto it = std::upper_bound(values_.begin(), values_.end(), v);
    const std::size_t k = static_cast<std::size_t>(it - values_.begin()) - 1;
    double lo = static_cast<double>(k) * h_;
    double hi = std::min(1.0, static_cast<double>(k + 1) * h_);
    const double span = values_[k + 1] - values_[k];
    double s = span > 0.0 ? lo + (v - values_[k]) / span * (hi - lo) : lo;
    for (int it_count = 0; it_count < 200; ++it_count) {
        const double f = value(s) - v;
        if (f == 0.0)
            return s;
        if (f > 0.0)
            hi = s;
        else
            lo = s;
        const double df = slope(s);
        double next = df > 0.0 ? s - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (next == s || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(hi, 1e-300))
            return next;
        s = next;
    }
    return s;
}

MediumCurves::MediumCurves(Medium id, const CurveParams& params) : id_(id), params_(params)
{
    const auto bad = params.violations(to_string(id));
    if (!bad.empty()) {
        std::ostringstream msg;
        for (std::size_t i = 0; i < bad.size(); ++i)
            msg << (i ? "; " : "") << bad[i];
        throw ConfigError(msg.str());
    }
    constexpr double tol = 1e-13;
    beta_ = IntegralTable([this](double s) { return alpha(s); }, table_nodes, tol);
    gn_ = IntegralTable([this](double s) { return frac_w(s) * std::abs(pc_prime(s)); }, table_nodes,
                        tol);
    frak_b_ = IntegralTable([this](double s) { return kirchhoff_energy_prime(s); }, table_nodes, tol);
    pc_int_ = IntegralTable([this](double s) { return pc(s); }, table_nodes, tol);

    min_total_mobility_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table_nodes; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(table_nodes - 1);
        min_total_mobility_ = std::min(min_total_mobility_, total_mobility(s));
    }
}

void MediumCurves::check_saturation(double s, const char* what) const
{
    if (!(s >= 0.0 && s <= 1.0)) {
        std::ostringstream msg;
        msg << what << ": saturation " << s << " outside [0, 1] (" << to_string(id_) << ")";
        throw DomainError(msg.str());
    }
}

double MediumCurves::pc(double s) const
{
    check_saturation(s, "pc");
    return params_.entry_pressure * (1.0 - s) * (1.0 + params_.shape * s);
}

double MediumCurves::pc_prime(double s) const
{
    check_saturation(s, "pc_prime");
    const double c = params_.shape;
    return params_.entry_pressure * (c - 1.0 - 2.0 * c * s);
}

double MediumCurves::pc_inverse(double p) const
{
    const double pe = params_.entry_pressure;
    if (!(p >= 0.0 && p <= pe)) {
        std::ostringstream msg;
        msg << "pc_inverse: pressure " << p << " outside [0, " << pe << "] (" << to_string(id_) << ")";
        throw DomainError(msg.str());
    }
    // c s^2 + (1 - c) s - (1 - q) = 0, rationalised to avoid cancellation.
    const double c = params_.shape;
    const double r = 1.0 - p / pe;
    const double root = std::sqrt((1.0 - c) * (1.0 - c) + 4.0 * c * r);
    double s = 2.0 * r / ((1.0 - c) + root);
    s = clamp01(s);
    const double slope = pc_prime(s);
    s = clamp01(s - (pc(s) - p) / slope);
    return s;
}

double MediumCurves::mob_w(double s) const
{
    check_saturation(s, "mob_w");
    return std::pow(s, params_.exp_w) / params_.visc_w;
}

double MediumCurves::mob_n(double s) const
{
    check_saturation(s, "mob_n");
    return std::pow(1.0 - s, params_.exp_n) / params_.visc_n;
}

double MediumCurves::mob_w_prime(double s) const
{
    check_saturation(s, "mob_w_prime");
    return params_.exp_w * std::pow(s, params_.exp_w - 1.0) / params_.visc_w;
}

double MediumCurves::mob_n_prime(double s) const
{
    check_saturation(s, "mob_n_prime");
    return -params_.exp_n * std::pow(1.0 - s, params_.exp_n - 1.0) / params_.visc_n;
}

double MediumCurves::frac_w(double s) const
{
    return mob_w(s) / total_mobility(s);
}

double MediumCurves::frac_w_prime(double s) const
{
    const double lam = total_mobility(s);
    return (mob_w_prime(s) * mob_n(s) - mob_w(s) * mob_n_prime(s)) / (lam * lam);
}

double MediumCurves::alpha(double s) const
{
    const double lw = mob_w(s);
    const double ln = mob_n(s);
    return ln * lw / (lw + ln) * std::abs(pc_prime(s));
}

double MediumCurves::beta(double s) const
{
    check_saturation(s, "beta");
    return beta_.value(s);
}

double MediumCurves::beta_inverse(double b) const
{
    if (!(b >= 0.0 && b <= beta_.total())) {
        std::ostringstream msg;
        msg << "beta_inverse: " << b << " outside [0, " << beta_.total() << "] (" << to_string(id_)
            << ")";
        throw DomainError(msg.str());
    }
    return beta_.inverse(b);
}

double MediumCurves::g_n(double s) const
{
    check_saturation(s, "g_n");
    return gn_.total() - gn_.value(s);
}

double MediumCurves::g_w(double s) const
{
    return g_n(s) - pc(s);
}

double MediumCurves::g_n_prime(double s) const
{
    return frac_w(s) * pc_prime(s);
}

double MediumCurves::g_w_prime(double s) const
{
    return -(mob_n(s) / total_mobility(s)) * pc_prime(s);
}

double MediumCurves::kirchhoff_energy(double s) const
{
    check_saturation(s, "kirchhoff_energy");
    return frak_b_.value(s);
}

double MediumCurves::kirchhoff_energy_prime(double s) const
{
    const double lw = mob_w(s);
    const double ln = mob_n(s);
    return std::sqrt(ln * lw / (lw + ln)) * std::abs(pc_prime(s));
}

double MediumCurves::energy_density(double s) const
{
    check_saturation(s, "energy_density");
    return pc_int_.value(s) - pc_int_.total();
}

std::pair<double, double> MediumCurves::phase_pressures(double global_pressure, double s) const
{
    return {global_pressure + g_w(s), global_pressure + g_n(s)};
}

CurvePair::CurvePair(CurveParams fracture, CurveParams matrix)
    : fracture_(Medium::fracture, fracture), matrix_(Medium::matrix, matrix)
{
    const double pf0 = fracture_.pc(0.0);
    const double pm0 = matrix_.pc(0.0);
    if (std::abs(pf0 - pm0) > 1e-12) {
        std::ostringstream msg;
        msg << "A.3: P_{f,c}(0) != P_{m,c}(0) (" << pf0 << " vs " << pm0 << ")";
        throw ConfigError(msg.str());
    }

    constexpr std::size_t samples = 4097;
    const double bmax = fracture_.beta_max();
    double prev = coupling_M(0.0);
    for (std::size_t i = 1; i < samples; ++i) {
        const double b0 = bmax * static_cast<double>(i - 1) / static_cast<double>(samples - 1);
        const double b1 = i + 1 == samples ? bmax : bmax * static_cast<double>(i) / static_cast<double>(samples - 1);
        const double cur = coupling_M(b1);
        lipschitz_M_ = std::max(lipschitz_M_, std::abs(cur - prev) / (b1 - b0));
        prev = cur;
    }
    lipschitz_M_ *= 1.1;
}

double CurvePair::coupling_P(double s_fracture) const
{
    const double p = fracture_.pc(s_fracture);
    return matrix_.pc_inverse(std::clamp(p, 0.0, matrix_.params().entry_pressure));
}

double CurvePair::coupling_P_prime(double s_fracture) const
{
    return fracture_.pc_prime(s_fracture) / matrix_.pc_prime(coupling_P(s_fracture));
}

double CurvePair::coupling_P_inverse(double s_matrix) const
{
    const double p = matrix_.pc(s_matrix);
    return fracture_.pc_inverse(std::clamp(p, 0.0, fracture_.params().entry_pressure));
}

double CurvePair::coupling_M(double b) const
{
    const double s = fracture_.beta_inverse(b);
    return matrix_.beta(coupling_P(s));
}

HolderFit fit_beta_inverse_holder(const MediumCurves& curves, std::size_t samples)
{
    const double bmax = curves.beta_max();
    // Local exponent from the steepest ends of beta^{-1}.
    auto local_exponent = [&](double b_small, double b_large, bool at_top) {
        const double s1 = at_top ? 1.0 - curves.beta_inverse(bmax - b_small)
                                 : curves.beta_inverse(b_small);
        const double s2 = at_top ? 1.0 - curves.beta_inverse(bmax - b_large)
                                 : curves.beta_inverse(b_large);
        return std::log(s2 / s1) / std::log(b_large / b_small);
    };
    HolderFit fit;
    fit.exponent = std::min({local_exponent(1e-12 * bmax, 1e-11 * bmax, false),
                             local_exponent(1e-12 * bmax, 1e-11 * bmax, true), 1.0});

    std::vector<double> bs;
    for (std::size_t i = 0; i <= samples; ++i)
        bs.push_back(i == samples ? bmax : bmax * static_cast<double>(i) / static_cast<double>(samples));
    for (int k = 1; k <= 12; ++k) {
        bs.push_back(bmax * std::pow(10.0, -k));
        bs.push_back(bmax * (1.0 - std::pow(10.0, -k)));
    }
    std::sort(bs.begin(), bs.end());
    std::vector<double> ss(bs.size());
    for (std::size_t i = 0; i < bs.size(); ++i)
        ss[i] = curves.beta_inverse(bs[i]);
    for (std::size_t i = 0; i < bs.size(); ++i)
        for (std::size_t j = i + 1; j < bs.size(); ++j) {
            const double db = bs[j] - bs[i];
            if (db <= 0.0)
                continue;
            fit.constant = std::max(fit.constant, std::abs(ss[j] - ss[i]) / std::pow(db, fit.exponent));
        }
    fit.constant *= 1.05;
    return fit;
}

} // namespace dpflow
