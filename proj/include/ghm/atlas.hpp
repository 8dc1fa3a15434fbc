#pragma once

// Closed-form bifurcation curves, organizing points and the stability
// domain of the generalized Hénon map in the (M, B) plane.
//
//   L+   : M = -(1+B)^2 / (4(1+R))                      multiplier +1
//   L-   : M = (1+B)^2 (3+R) / 4                        multiplier -1
//   Lphi : M = (cos^2 w - cos w (2+R)) / (1+R/2)^2,
//          B = 1 + R cos w / (1+R/2)                    multipliers e^{+-iw}
//   Ln   : Lphi with cos w replaced by alpha > 1        neutral saddle
//
// BT and HT are the w -> 0 and w -> pi endpoints of Lphi.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string_view>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ghm/core.hpp"

namespace ghm {

struct MB {
    double M{0.0};
    double B{0.0};
};

enum class CurveId { Lplus, Lminus, Lphi, Lneutral };

inline const char* to_string(CurveId c) noexcept
{
    switch (c) {
    case CurveId::Lplus: return "Lplus";
    case CurveId::Lminus: return "Lminus";
    case CurveId::Lphi: return "Lphi";
    case CurveId::Lneutral: return "Lneutral";
    }
    return "?";
}

inline std::optional<CurveId> curve_from_string(std::string_view s) noexcept
{
    for (CurveId c : {CurveId::Lplus, CurveId::Lminus, CurveId::Lphi, CurveId::Lneutral})
        if (s == to_string(c))
            return c;
    return std::nullopt;
}

// parameter is B for L+/L-, omega for Lphi, alpha for Ln.
struct CurveSample {
    CurveId curve{CurveId::Lplus};
    double parameter{0.0};
    MB location;
    double R{0.0};
};

enum class PointKind { BT, HT };

struct OrganizingPoint {
    PointKind kind{PointKind::BT};
    MB location;
    double R{0.0};
};

inline double curve_L_plus(double B, double R)
{
    if (R == -1.0)
        throw std::invalid_argument("curve_L_plus: R = -1");
    return -(1.0 + B) * (1.0 + B) / (4.0 * (1.0 + R));
}

inline double curve_L_minus(double B, double R) { return 0.25 * (1.0 + B) * (1.0 + B) * (3.0 + R); }

namespace detail {

inline MB lphi_expression(double c, double R)
{
    const double h = 1.0 + 0.5 * R;
    return {(c * c - c * (2.0 + R)) / (h * h), 1.0 + R * c / h};
}

} // namespace detail

inline MB curve_L_phi(double omega, double R)
{
    if (!(omega > 0.0 && omega < std::numbers::pi))
        throw std::invalid_argument("curve_L_phi: omega must lie in (0, pi)");
    if (R == -2.0)
        throw std::invalid_argument("curve_L_phi: R = -2");
    return detail::lphi_expression(std::cos(omega), R);
}

inline MB curve_L_neutral(double alpha, double R)
{
    if (!(alpha > 1.0))
        throw std::invalid_argument("curve_L_neutral: alpha must exceed 1");
    if (R == -2.0)
        throw std::invalid_argument("curve_L_neutral: R = -2");
    return detail::lphi_expression(alpha, R);
}

inline std::pair<OrganizingPoint, OrganizingPoint> organizing_points(double R)
{
    if (R == -2.0)
        throw std::invalid_argument("organizing_points: R = -2");
    const double h = 1.0 + 0.5 * R;
    OrganizingPoint bt{PointKind::BT, {(-1.0 - R) / (h * h), 1.0 + R / h}, R};
    OrganizingPoint ht{PointKind::HT, {(3.0 + R) / (h * h), (1.0 - 0.5 * R) / h}, R};
    return {bt, ht};
}

// How far the characteristic polynomial mu^2 - t mu + d at the fixed point
// (x, x) is from (mu - sigma)^2, in the sup norm of (t, d). A defective double
// root moves by the square root of a coefficient error, so the roots
// themselves cannot be pinned below about 1.5e-8 from double inputs.
inline double double_multiplier_defect(const GhmParams& p, double x, double sigma)
{
    const double t = -(2.0 + p.R) * x;
    const double d = p.B + p.R * x;
    return std::max(std::abs(t - 2.0 * sigma), std::abs(d - 1.0));
}

// Abscissa of the fixed point whose multipliers put the sample on its curve.
inline double curve_fixed_point_x(const CurveSample& s)
{
    switch (s.curve) {
    case CurveId::Lplus: return -(1.0 + s.location.B) / (2.0 * (1.0 + s.R));
    case CurveId::Lminus: return 0.5 * (1.0 + s.location.B);
    case CurveId::Lphi: return -std::cos(s.parameter) / (1.0 + 0.5 * s.R);
    case CurveId::Lneutral: return -s.parameter / (1.0 + 0.5 * s.R);
    }
    return 0.0;
}

inline CurveSample make_sample(CurveId id, double parameter, double R)
{
    switch (id) {
    case CurveId::Lplus: return {id, parameter, {curve_L_plus(parameter, R), parameter}, R};
    case CurveId::Lminus: return {id, parameter, {curve_L_minus(parameter, R), parameter}, R};
    case CurveId::Lphi: return {id, parameter, curve_L_phi(parameter, R), R};
    case CurveId::Lneutral: return {id, parameter, curve_L_neutral(parameter, R), R};
    }
    throw std::invalid_argument("make_sample: unknown curve");
}

// Checks the CurveSample invariants: the stored location reproduces the
// defining formula, and the associated fixed point has the curve's multipliers.
inline bool sample_is_consistent(const CurveSample& s, double formula_tol = 1e-12,
                                 double multiplier_tol = 1e-10)
{
    CurveSample ref;
    try {
        ref = make_sample(s.curve, s.parameter, s.R);
    } catch (const std::invalid_argument&) {
        return false;
    }
    if (std::abs(ref.location.M - s.location.M) > formula_tol * (1.0 + std::abs(ref.location.M)) ||
        std::abs(ref.location.B - s.location.B) > formula_tol * (1.0 + std::abs(ref.location.B)))
        return false;

    const GhmParams p{s.location.M, s.location.B, s.R};
    const double x = curve_fixed_point_x(s);
    const double t = -(2.0 + s.R) * x;
    const double d = s.location.B + s.R * x;
    const auto mu = multipliers_at(p, x);
    auto near = [&](std::complex<double> z, std::complex<double> target) {
        return std::abs(z - target) <= multiplier_tol;
    };
    switch (s.curve) {
    case CurveId::Lplus: return near(mu[0], 1.0) || near(mu[1], 1.0);
    case CurveId::Lminus: return near(mu[0], -1.0) || near(mu[1], -1.0);
    case CurveId::Lphi:
        return std::abs(d - 1.0) <= multiplier_tol &&
               std::abs(t - 2.0 * std::cos(s.parameter)) <= multiplier_tol;
    case CurveId::Lneutral:
        return std::abs(d - 1.0) <= multiplier_tol && mu[0].imag() == 0.0 && mu[0].real() > 0.0 &&
               mu[1].real() > 0.0;
    }
    return false;
}

// Attracting fixed point present; decided by the multipliers, not by the curves.
inline bool in_stability_domain(const GhmParams& p)
{
    if (p.R == -1.0 || p.R == -2.0)
        throw std::invalid_argument("in_stability_domain: R must differ from -1 and -2");
    for (const auto& fp : fixed_points(p))
        if (fp.stability == Stability::attracting)
            return true;
    return false;
}

inline constexpr double kCurveBRange = 3.0;
inline constexpr double kNeutralAlphaMax = 3.0;

// Samples per curve, ordered Lplus, Lminus, Lphi, Lneutral with ascending parameter.
inline std::vector<CurveSample> trace_curves(double R, int samples_per_curve)
{
    if (samples_per_curve < 2)
        throw std::invalid_argument("trace_curves: at least 2 samples per curve");
    const int n = samples_per_curve;
    std::vector<CurveSample> out;
    out.reserve(4 * static_cast<std::size_t>(n));
    for (CurveId id : {CurveId::Lplus, CurveId::Lminus}) {
        for (int i = 0; i < n; ++i) {
            const double B = -kCurveBRange + 2.0 * kCurveBRange * i / (n - 1);
            out.push_back(make_sample(id, B, R));
        }
    }
    for (int i = 0; i < n; ++i)
        out.push_back(make_sample(CurveId::Lphi, std::numbers::pi * (i + 1) / (n + 1), R));
    for (int i = 0; i < n; ++i)
        out.push_back(make_sample(CurveId::Lneutral,
                                  1.0 + (kNeutralAlphaMax - 1.0) * (i + 1) / n, R));
    return out;
}

enum class BifurcationKind { saddle_node, period_doubling, neimark_sacker };

inline const char* to_string(BifurcationKind k) noexcept
{
    switch (k) {
    case BifurcationKind::saddle_node: return "saddle-node";
    case BifurcationKind::period_doubling: return "period-doubling";
    case BifurcationKind::neimark_sacker: return "neimark-sacker";
    }
    return "?";
}

struct BifurcationCrossing {
    double t{0.0};
    GhmParams params;
    BifurcationKind kind{BifurcationKind::saddle_node};
    Multipliers multipliers{};
};

// Smallest spectral radius over the fixed points, minus one. Negative iff an
// attracting fixed point exists; +1 when there are no fixed points.
inline double stability_margin(const GhmParams& p)
{
    double best = 1.0;
    bool any = false;
    for (const auto& fp : fixed_points(p)) {
        const double rho = std::max(std::abs(fp.multipliers[0]), std::abs(fp.multipliers[1]));
        if (!any || rho - 1.0 < best)
            best = rho - 1.0;
        any = true;
    }
    return best;
}

// Bisects a parameter path between a stable end (an attracting fixed point)
// and an unstable end, and names the crossing by the multiplier that reaches
// the unit circle.
inline BifurcationCrossing locate_fixed_point_bifurcation(const std::function<GhmParams(double)>& path,
                                                          double t_stable, double t_unstable,
                                                          int max_iter = 200)
{
    double a = t_stable, b = t_unstable;
    if (!(stability_margin(path(a)) < 0.0) || !(stability_margin(path(b)) >= 0.0))
        throw std::invalid_argument("locate_fixed_point_bifurcation: endpoints do not bracket a loss of stability");
    for (int i = 0; i < max_iter; ++i) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b)
            break;
        if (stability_margin(path(m)) < 0.0)
            a = m;
        else
            b = m;
    }
    BifurcationCrossing c;
    c.t = a;
    c.params = path(a);
    const auto fps = fixed_points(c.params);
    double best = 1e300;
    for (const auto& fp : fps) {
        const double rho = std::max(std::abs(fp.multipliers[0]), std::abs(fp.multipliers[1]));
        if (std::abs(rho - 1.0) < best) {
            best = std::abs(rho - 1.0);
            c.multipliers = fp.multipliers;
        }
    }
    const auto& lead = c.multipliers[0];
    if (std::abs(lead.imag()) > 1e-6)
        c.kind = BifurcationKind::neimark_sacker;
    else if (lead.real() > 0.0)
        c.kind = BifurcationKind::saddle_node;
    else
        c.kind = BifurcationKind::period_doubling;
    return c;
}

} // namespace ghm
