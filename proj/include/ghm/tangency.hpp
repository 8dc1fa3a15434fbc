#pragma once

// Three-dimensional model diffeomorphism with a saddle of type (2,1) and a
// quadratic homoclinic tangency:
//
//   T0 : (x, y) -> (lambda Rot(phi) x, gamma y)                 local map
//   T1 : x' = x+ + A x + b (y - y-),  y' = mu + c.x + d (y - y-)^2   global map
//
// with first-return maps Tn = T1 o T0^n on the slice sigma_n, and tools to
// compare Tn with the generalized Hénon map it converges to.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghm/atlas.hpp"
#include "ghm/classifier.hpp"
#include "ghm/core.hpp"

namespace ghm::tangency {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2d = Eigen::Matrix2d;
using Mat3d = Eigen::Matrix3d;

inline Mat2d rotation(double angle)
{
    Mat2d r;
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

class SaddleSpectrum {
public:
    // Requires 0 < lambda < 1 < gamma, lambda^2 gamma < 1 < lambda gamma and
    // phi0 in (0, pi).
    static SaddleSpectrum make(double lambda, double phi0, double gamma)
    {
        if (!(lambda > 0.0 && lambda < 1.0) || !(gamma > 1.0))
            throw std::invalid_argument("saddle spectrum: need 0 < lambda < 1 < gamma");
        if (!(lambda * lambda * gamma < 1.0) || !(lambda * gamma > 1.0))
            throw std::invalid_argument("saddle spectrum: need lambda^2*gamma < 1 < lambda*gamma (got lambda^2*gamma=" +
                                        std::to_string(lambda * lambda * gamma) +
                                        ", lambda*gamma=" + std::to_string(lambda * gamma) + ")");
        if (!(phi0 > 0.0 && phi0 < std::numbers::pi))
            throw std::invalid_argument("saddle spectrum: phi0 must lie in (0, pi)");
        return SaddleSpectrum(lambda, phi0, gamma);
    }

    double lambda() const noexcept { return lambda_; }
    double phi0() const noexcept { return phi0_; }
    double gamma() const noexcept { return gamma_; }

private:
    SaddleSpectrum(double l, double p, double g) : lambda_(l), phi0_(p), gamma_(g) {}
    double lambda_;
    double phi0_;
    double gamma_;
};

struct GlobalMapCoeffs {
    Vec2 x_plus{0.3, 0.0};
    double y_minus{0.5};
    Mat2d A{(Mat2d() << 0.9, 0.1, -0.1, 0.8).finished()};
    Vec2 b{0.2, 0.1};
    Vec2 c{1.0, 0.3};
    double d{1.0};
    double mu{0.0};

    // Determinant of the differential of T1 at (0, 0, y-), i.e. of
    // [[A, b], [c^T, 0]], which equals -c^T adj(A) b.
    double J1() const noexcept
    {
        Mat2d adj;
        adj << A(1, 1), -A(0, 1), -A(1, 0), A(0, 0);
        return -c.dot(adj * b);
    }

    void validate() const
    {
        if (!(d != 0.0) || !std::isfinite(d))
            throw std::invalid_argument("global map: quadratic coefficient d must be nonzero");
        if (!(J1() != 0.0))
            throw std::invalid_argument("global map: Jacobian J1 at the tangency vanishes");
        if (c.isZero(0.0))
            throw std::invalid_argument("global map: c must be nonzero");
    }
};

// Model used for the coexistence search: b reversed (J1 = +0.183) and x+
// moved so that the sink-index window meets the circle-index window inside
// phi in [0.5, 1.5].
inline GlobalMapCoeffs coexistence_global()
{
    GlobalMapCoeffs g;
    g.b = -g.b;
    g.x_plus = Vec2{0.1284, 0.0};
    return g;
}

inline constexpr double kSigmaHalfHeight = 0.25; // h in |y - gamma^-n y-| <= gamma^-n h
inline constexpr double kExcludedRadius = 0.25;

struct ReturnMapConfig {
    SaddleSpectrum spectrum;
    GlobalMapCoeffs global;
    int n{1};
    double phi{0.0};
};

// Raw linear saddle; takes the multipliers without the spectrum gate.
inline Vec3 local_map(double lambda, double gamma, double phi, const Vec3& p)
{
    const Vec2 x = lambda * (rotation(phi) * p.head<2>());
    return {x(0), x(1), gamma * p(2)};
}

inline Vec3 local_map(const SaddleSpectrum& s, double phi, const Vec3& p)
{
    return local_map(s.lambda(), s.gamma(), phi, p);
}

// T0^n in closed form.
inline Vec3 local_map_power(const SaddleSpectrum& s, double phi, int n, const Vec3& p)
{
    const Vec2 x = std::pow(s.lambda(), n) * (rotation(n * phi) * p.head<2>());
    return {x(0), x(1), std::pow(s.gamma(), n) * p(2)};
}

inline Vec3 global_map(const GlobalMapCoeffs& g, const Vec3& p)
{
    const Vec2 x = p.head<2>();
    const double dy = p(2) - g.y_minus;
    const Vec2 xo = g.x_plus + g.A * x + g.b * dy;
    return {xo(0), xo(1), g.mu + g.c.dot(x) + g.d * dy * dy};
}

inline Mat3d global_map_jacobian(const GlobalMapCoeffs& g, const Vec3& p)
{
    Mat3d J;
    J.topLeftCorner<2, 2>() = g.A;
    J.topRightCorner<2, 1>() = g.b;
    J.bottomLeftCorner<1, 2>() = g.c.transpose();
    J(2, 2) = 2.0 * g.d * (p(2) - g.y_minus);
    return J;
}

struct SigmaSlice {
    double center{0.0};
    double half_width{0.0};

    double lo() const noexcept { return center - half_width; }
    double hi() const noexcept { return center + half_width; }
};

inline SigmaSlice sigma_slice(const SaddleSpectrum& s, double y_minus, int n, double h = kSigmaHalfHeight)
{
    const double g = std::pow(s.gamma(), -n);
    return {g * y_minus, g * h};
}

inline bool in_sigma(const ReturnMapConfig& cfg, const Vec3& p)
{
    const auto sl = sigma_slice(cfg.spectrum, cfg.global.y_minus, cfg.n);
    return std::abs(p(2) - sl.center) <= sl.half_width;
}

inline std::optional<Vec3> try_return_map(const ReturnMapConfig& cfg, const Vec3& p)
{
    if (!in_sigma(cfg, p))
        return std::nullopt;
    return global_map(cfg.global, local_map_power(cfg.spectrum, cfg.phi, cfg.n, p));
}

inline Vec3 return_map(const ReturnMapConfig& cfg, const Vec3& p)
{
    if (auto q = try_return_map(cfg, p))
        return *q;
    throw std::domain_error("return_map: point outside sigma_n");
}

enum class Provenance { asymptotic, fitted };

struct RescaledParams {
    double M{0.0};
    double B{0.0};
    double R{0.0};
    Provenance provenance{Provenance::asymptotic};
    std::optional<double> fit_residual; // set for fitted values

    GhmParams ghm() const noexcept { return {M, B, R}; }
};

class excluded_target : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Leading-order rescaled parameters: M = gamma^2n mu, B = (lambda gamma)^n
// cos(n phi), R = 2 J1 (lambda^2 gamma)^n / B. Points of the excluded ball,
// and B = 0, are rejected.
inline RescaledParams asymptotic_params(const SaddleSpectrum& s, double mu, double phi, int n, double J1,
                                        double r = kExcludedRadius)
{
    RescaledParams out;
    out.M = std::pow(s.gamma(), 2 * n) * mu;
    out.B = std::pow(s.lambda() * s.gamma(), n) * std::cos(n * phi);
    if (std::hypot(out.M, out.B) < r)
        throw excluded_target("asymptotic_params: (M, B) inside the excluded ball");
    if (out.B == 0.0)
        throw excluded_target("asymptotic_params: B = 0, R undefined");
    out.R = 2.0 * J1 * std::pow(s.lambda() * s.lambda() * s.gamma(), n) / out.B;
    return out;
}

struct WindowParams {
    double mu{0.0};
    double phi{0.0};
};

// Inverse of the leading-order chart on (-10,10)^2 minus the excluded ball.
inline WindowParams window_invert(const SaddleSpectrum& s, int n, MB target, double r = kExcludedRadius)
{
    if (n < 1)
        throw std::invalid_argument("window_invert: n >= 1 required");
    if (!(std::abs(target.M) < 10.0 && std::abs(target.B) < 10.0))
        throw std::invalid_argument("window_invert: target outside (-10,10)^2");
    if (std::hypot(target.M, target.B) < r)
        throw excluded_target("window_invert: target inside the excluded ball");
    const double v = target.B * std::pow(s.lambda() * s.gamma(), -n);
    if (std::abs(v) > 1.0)
        throw excluded_target("window_invert: |B| exceeds (lambda*gamma)^n, unreachable at this n");
    // arccos lies in [0, pi], which is already the branch with n*phi nearest pi/2
    return {target.M * std::pow(s.gamma(), -2 * n), std::acos(v) / n};
}

// ---------------------------------------------------------------------------
// Model chart. Unlike the leading-order chart above, this keeps the signs,
// the factors |c||b|, d and the offsets coming from x+ and y- that the exact
// rescaling of the affine-plus-quadratic model produces:
//   xbar = (I - lambda^n A Rot(n phi))^-1 x+
//   M    = -d gamma^n (gamma^n mu - y- + (lambda gamma)^n c.Rot(n phi) xbar)
//   B    = -(lambda gamma)^n c.Rot(n phi) b
//   R    = 2 J1 (lambda^2 gamma)^n / B

inline Vec2 slow_offset(const ReturnMapConfig& cfg)
{
    const Mat2d Rn = rotation(cfg.n * cfg.phi);
    const Mat2d K = Mat2d::Identity() - std::pow(cfg.spectrum.lambda(), cfg.n) * cfg.global.A * Rn;
    return K.partialPivLu().solve(cfg.global.x_plus);
}

inline RescaledParams model_params(const ReturnMapConfig& cfg)
{
    const auto& s = cfg.spectrum;
    const auto& g = cfg.global;
    const int n = cfg.n;
    const double gn = std::pow(s.gamma(), n);
    const double lgn = std::pow(s.lambda() * s.gamma(), n);
    const Mat2d Rn = rotation(n * cfg.phi);
    const Vec2 xbar = slow_offset(cfg);
    RescaledParams out;
    out.M = -g.d * gn * (gn * g.mu - g.y_minus + lgn * g.c.dot(Rn * xbar));
    out.B = -lgn * g.c.dot(Rn * g.b);
    out.R = out.B != 0.0 ? 2.0 * g.J1() * std::pow(s.lambda() * s.lambda() * s.gamma(), n) / out.B
                         : std::numeric_limits<double>::quiet_NaN();
    return out;
}

// Candidate angles phi with model B equal to target_B, ascending.
inline std::vector<double> window_phi_branches(const SaddleSpectrum& s, const GlobalMapCoeffs& g, int n,
                                               double target_B, double phi_lo, double phi_hi)
{
    const double amp = g.c.norm() * g.b.norm();
    const double ang = std::atan2(g.b(1), g.b(0)) - std::atan2(g.c(1), g.c(0));
    const double v = -target_B / (std::pow(s.lambda() * s.gamma(), n) * amp);
    if (std::abs(v) > 1.0)
        throw excluded_target("window_config: |B| unreachable at this n");
    std::vector<double> out;
    const double two_pi = 2.0 * std::numbers::pi;
    for (double sign : {1.0, -1.0}) {
        const double theta = sign * std::acos(v) - ang;
        const auto k0 = static_cast<long>(std::floor((n * phi_lo - theta) / two_pi));
        const auto k1 = static_cast<long>(std::ceil((n * phi_hi - theta) / two_pi));
        for (long k = k0; k <= k1; ++k) {
            const double phi = (theta + two_pi * static_cast<double>(k)) / n;
            if (phi >= phi_lo && phi <= phi_hi)
                out.push_back(phi);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Solve mu so that the model chart gives target_M at the given n and phi.
inline double window_mu(const SaddleSpectrum& s, const GlobalMapCoeffs& g, int n, double phi, double target_M)
{
    ReturnMapConfig cfg{s, g, n, phi};
    const double gn = std::pow(s.gamma(), n);
    const double lgn = std::pow(s.lambda() * s.gamma(), n);
    const Vec2 xbar = slow_offset(cfg);
    const double K = target_M / (-g.d * gn);
    return (K + g.y_minus - lgn * g.c.dot(rotation(n * phi) * xbar)) / gn;
}

// Configuration whose model chart hits target exactly, with phi the branch
// nearest phi_ref.
inline ReturnMapConfig window_config(const SaddleSpectrum& s, GlobalMapCoeffs g, int n, MB target,
                                     double phi_ref)
{
    g.validate();
    if (n < 1)
        throw std::invalid_argument("window_config: n >= 1 required");
    const double span = std::numbers::pi / n;
    const auto phis = window_phi_branches(s, g, n, target.B, phi_ref - 2.0 * span, phi_ref + 2.0 * span);
    if (phis.empty())
        throw excluded_target("window_config: no phi branch");
    const double phi = *std::min_element(phis.begin(), phis.end(), [&](double a, double b) {
        return std::abs(a - phi_ref) < std::abs(b - phi_ref);
    });
    g.mu = window_mu(s, g, n, phi, target.M);
    return {s, g, n, phi};
}

// ---------------------------------------------------------------------------
// Delay-coordinate fit.

class fit_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DelayFit {
    double M{0.0};
    double B{0.0};
    double R{0.0};
    double kappa{0.0};    // coefficient of u_k^2 before it is conjugated away
    double residual{0.0}; // RMS error of the normalized regression
    std::size_t samples{0};
    // u = (obs - offset) / scale maps a raw observation to the normalized coordinate
    double offset{0.0};
    double scale{1.0};

    GhmParams ghm() const noexcept { return {M, B, R}; }
    double normalize(double obs) const noexcept { return (obs - offset) / scale; }
    double denormalize(double u) const noexcept { return offset + scale * u; }
};

inline constexpr std::size_t kMinFitSamples = 200;

// Least-squares fit of
//   z_{k+2} = c0 + c1 z_k + c2 z_{k+1} + c3 z_{k+1}^2 + c4 z_k z_{k+1} + c5 z_k^2
// on standardized observations, then the affine change z = q + s u that
// makes the z_{k+1}^2 coefficient -1 and removes the z_{k+1} term. The
// remaining u_k^2 term (-kappa u_k^2) is removed to first order by the
// conjugacy u -> u - kappa(...), which shifts R by 2 kappa and scales M by
// (1 - kappa).
inline DelayFit fit_delay_map(const std::vector<std::vector<double>>& segments)
{
    std::size_t rows = 0;
    double mean = 0.0, count = 0.0;
    for (const auto& seg : segments) {
        if (seg.size() >= 3)
            rows += seg.size() - 2;
        for (double v : seg) {
            mean += v;
            count += 1.0;
        }
    }
    if (rows < kMinFitSamples)
        throw fit_error("fit_delay_map: fewer than 200 delay triples");
    mean /= count;
    double var = 0.0;
    for (const auto& seg : segments)
        for (double v : seg)
            var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / count);
    if (!(sd > 0.0))
        throw fit_error("fit_delay_map: observations are constant");

    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows), 6);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (const auto& seg : segments) {
        for (std::size_t k = 0; k + 2 < seg.size(); ++k, ++r) {
            const double u = (seg[k] - mean) / sd;
            const double w = (seg[k + 1] - mean) / sd;
            X.row(r) << 1.0, u, w, w * w, u * w, u * u;
            rhs(r) = (seg[k + 2] - mean) / sd;
        }
    }
    const auto qr = X.colPivHouseholderQr();
    if (qr.rank() < 6)
        throw fit_error("fit_delay_map: regression matrix rank-deficient");
    const Eigen::VectorXd cf = qr.solve(rhs);
    const double c0 = cf(0), c1 = cf(1), c2 = cf(2), c3 = cf(3), c4 = cf(4), c5 = cf(5);
    if (c3 == 0.0 || 2.0 * c3 + c4 == 0.0)
        throw fit_error("fit_delay_map: quadratic normalization undefined");

    const double q = -c2 / (2.0 * c3 + c4);
    const double s = -1.0 / c3;
    DelayFit f;
    f.B = -(c1 + (c4 + 2.0 * c5) * q);
    const double M0 = (c0 + (c1 + c2) * q + (c3 + c4 + c5) * q * q - q) / s;
    const double R0 = -c4 * s;
    f.kappa = -c5 * s;
    f.R = R0 + 2.0 * f.kappa;
    f.M = M0 * (1.0 - f.kappa);
    f.residual = std::sqrt((X * cf - rhs).squaredNorm() / static_cast<double>(rows));
    f.samples = rows;
    f.offset = mean + sd * q;
    f.scale = sd * s;
    return f;
}

struct FitOptions {
    int grid{20};          // seeds per axis
    double u_span{2.0};    // seeds cover center +- u_span in rescaled coordinates
    State2 center{};
    int collapse{6};       // returns discarded before sampling
    int keep{4};           // returns sampled per seed
};

// Seeds near the attracting slow manifold: after one return x sits at
// xbar + b Y_prev, where Y = gamma^n y - y-.
inline Vec3 slow_manifold_point(const ReturnMapConfig& cfg, const Vec2& xbar, double Y_prev, double Y_cur)
{
    const Vec2 x = xbar + cfg.global.b * Y_prev;
    return {x(0), x(1), std::pow(cfg.spectrum.gamma(), -cfg.n) * (cfg.global.y_minus + Y_cur)};
}

inline double unstable_height(const ReturnMapConfig& cfg, const Vec3& p)
{
    return std::pow(cfg.spectrum.gamma(), cfg.n) * p(2) - cfg.global.y_minus;
}

struct GhmFit {
    RescaledParams params;
    DelayFit delay;
    std::size_t seeds_kept{0};
};

// Samples Tn from a grid of slow-manifold seeds, drops the first returns and
// fits the delay map of Y = gamma^n y - y- along each surviving segment.
inline GhmFit fit_ghm(const ReturnMapConfig& cfg, const FitOptions& opt = {})
{
    cfg.global.validate();
    if (opt.grid < 2 || opt.keep < 3 || opt.collapse < 0)
        throw std::invalid_argument("fit_ghm: grid >= 2, keep >= 3, collapse >= 0 required");
    const Vec2 xbar = slow_offset(cfg);
    const double scale = -1.0 / (cfg.global.d * std::pow(cfg.spectrum.gamma(), cfg.n));
    std::vector<std::vector<double>> segments;
    for (int i = 0; i < opt.grid; ++i) {
        for (int j = 0; j < opt.grid; ++j) {
            const double u0 = opt.center.x - opt.u_span + 2.0 * opt.u_span * i / (opt.grid - 1);
            const double u1 = opt.center.y - opt.u_span + 2.0 * opt.u_span * j / (opt.grid - 1);
            Vec3 p = slow_manifold_point(cfg, xbar, scale * u0, scale * u1);
            std::vector<double> seg;
            bool ok = true;
            for (int k = 0; k < opt.collapse + opt.keep && ok; ++k) {
                auto q = try_return_map(cfg, p);
                if (!q || !q->allFinite() || !in_sigma(cfg, *q)) {
                    ok = false;
                    break;
                }
                p = *q;
                if (k >= opt.collapse)
                    seg.push_back(unstable_height(cfg, p));
            }
            if (ok)
                segments.push_back(std::move(seg));
        }
    }
    if (segments.empty())
        throw fit_error("fit_ghm: every seed left sigma_n");
    GhmFit out;
    out.delay = fit_delay_map(segments);
    out.seeds_kept = segments.size();
    out.params = {out.delay.M, out.delay.B, out.delay.R, Provenance::fitted, out.delay.residual};
    return out;
}

// Bypass of the 3D model: the same fit applied to y-observations of exact
// generalized Hénon orbits from a grid of seeds.
inline GhmFit fit_ghm_exact(const GhmParams& p, const FitOptions& opt = {}, double escape = 10.0)
{
    if (opt.grid < 2 || opt.keep < 3 || opt.collapse < 0)
        throw std::invalid_argument("fit_ghm_exact: grid >= 2, keep >= 3, collapse >= 0 required");
    std::vector<std::vector<double>> segments;
    for (int i = 0; i < opt.grid; ++i) {
        for (int j = 0; j < opt.grid; ++j) {
            State2 st{opt.center.x - opt.u_span + 2.0 * opt.u_span * i / (opt.grid - 1),
                      opt.center.y - opt.u_span + 2.0 * opt.u_span * j / (opt.grid - 1)};
            std::vector<double> seg{st.x, st.y};
            bool ok = true;
            for (int k = 0; k < opt.collapse + opt.keep && ok; ++k) {
                st = step(p, st);
                ok = !st.escaped && st.sup_norm() <= escape;
                if (k >= opt.collapse)
                    seg.push_back(st.y);
            }
            if (ok) {
                if (opt.collapse > 0)
                    seg.erase(seg.begin(), seg.begin() + 2);
                segments.push_back(std::move(seg));
            }
        }
    }
    if (segments.empty())
        throw fit_error("fit_ghm_exact: every seed escaped");
    GhmFit out;
    out.delay = fit_delay_map(segments);
    out.seeds_kept = segments.size();
    out.params = {out.delay.M, out.delay.B, out.delay.R, Provenance::fitted, out.delay.residual};
    return out;
}

// sup-norm distance between fitted parameters and the chart prediction at
// the window target.
inline double rescale_discrepancy(const RescaledParams& fit, const RescaledParams& asym)
{
    return std::max({std::abs(fit.M - asym.M), std::abs(fit.B - asym.B), std::abs(fit.R - asym.R)});
}

// ---------------------------------------------------------------------------
// Direct orbits of Tn.

struct ReturnOrbit {
    std::vector<Vec3> points;
    bool left_sigma{false};
    std::size_t exit_step{0};
};

inline ReturnOrbit iterate_return_map(const ReturnMapConfig& cfg, Vec3 p, std::size_t count)
{
    ReturnOrbit o;
    o.points.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        auto q = try_return_map(cfg, p);
        if (!q || !q->allFinite() || !in_sigma(cfg, *q)) {
            o.left_sigma = true;
            o.exit_step = k;
            break;
        }
        p = *q;
        o.points.push_back(p);
    }
    return o;
}

// 3D point on the slow manifold whose delay coordinates equal a GHM state.
inline Vec3 lift_state(const ReturnMapConfig& cfg, const DelayFit& fit, const State2& s)
{
    return slow_manifold_point(cfg, slow_offset(cfg), fit.denormalize(s.x), fit.denormalize(s.y));
}

// ---------------------------------------------------------------------------
// Coexistence search.

struct CoexistenceBox {
    double phi_lo{0.5};
    double phi_hi{1.5};
    std::vector<double> omegas;  // circle targets on Lphi
    std::vector<double> offsets; // signed M offsets from Lphi
    double sink_margin{0.05};    // chart prefilter: required stability margin at n_sink
    int mu_refinements{4};
    std::size_t orbit_returns{20000};

    static CoexistenceBox defaults()
    {
        CoexistenceBox b;
        for (int i = 0; i < 48; ++i)
            b.omegas.push_back(std::numbers::pi * (0.2 + 0.0125 * i));
        b.offsets = {0.02, 0.015, 0.01, -0.02, -0.015, -0.01};
        return b;
    }
};

struct AttractorEvidence {
    int n{0};
    RescaledParams fitted;
    RescaledParams model;
    AttractorClass verdict;
    SigmaSlice sigma;
    double y_lo{0.0}; // y-range of the direct Tn orbit tail
    double y_hi{0.0};
    bool orbit_in_sigma{false};
    std::optional<int> orbit_period; // period of the direct orbit in delay coordinates
};

struct CoexistenceHit {
    double mu{0.0};
    double phi{0.0};
    double omega{0.0};
    double offset{0.0};
    AttractorEvidence sink;
    AttractorEvidence circle;
};

struct CoexistenceProbe {
    double omega{0.0};
    double offset{0.0};
    double phi{0.0};
    double mu{0.0};
    MB sink_model; // model chart at the sink index
    std::optional<GhmParams> circle_fit;
    std::optional<LyapunovSpectrum> circle_lyapunov;
    std::string outcome;
};

struct CoexistenceResult {
    std::optional<CoexistenceHit> hit;
    std::vector<CoexistenceProbe> log;
};

namespace detail {

inline ClassifyOptions coexist_classify_options()
{
    ClassifyOptions o;
    o.span = 200000;
    return o;
}

inline std::optional<double> lphi_omega(double B, double R)
{
    const double c = (B - 1.0) * (1.0 + 0.5 * R) / R;
    if (!(std::abs(c) < 1.0))
        return std::nullopt;
    return std::acos(c);
}

// Direct Tn orbit seeded from the fitted attractor; records containment,
// y-range and period of the delay coordinates.
inline void direct_orbit_check(const ReturnMapConfig& cfg, const GhmFit& fit, std::size_t returns,
                               AttractorEvidence& ev)
{
    const State2 seed = default_seed(fit.params.ghm());
    const auto o = iterate_return_map(cfg, lift_state(cfg, fit.delay, seed), returns);
    ev.orbit_in_sigma = !o.left_sigma;
    if (o.left_sigma || o.points.size() < 1000)
        return;
    const std::size_t tail = 1000;
    ev.y_lo = std::numeric_limits<double>::infinity();
    ev.y_hi = -ev.y_lo;
    std::vector<State2> delay;
    for (std::size_t i = o.points.size() - tail - 1; i < o.points.size(); ++i) {
        const double y = o.points[i](2);
        ev.y_lo = std::min(ev.y_lo, y);
        ev.y_hi = std::max(ev.y_hi, y);
        if (i + 1 < o.points.size())
            delay.push_back({fit.delay.normalize(unstable_height(cfg, o.points[i])),
                             fit.delay.normalize(unstable_height(cfg, o.points[i + 1]))});
    }
    ev.orbit_period = detect_period(delay, 64, 1e-7);
}

} // namespace detail

// Searches for one diffeomorphism of the model with an attracting periodic
// orbit of Tn_sink and an attracting invariant circle of Tn_circle. Probes run
// in lexicographic order (omega, offset, phi branch) and the first verified
// hit is returned together with the full probe log.
inline CoexistenceResult coexistence_search(const SaddleSpectrum& s, const GlobalMapCoeffs& g, int n_sink,
                                            int n_circle, const CoexistenceBox& box,
                                            const FitOptions& fit_opt = {})
{
    if (n_sink == n_circle)
        throw std::invalid_argument("coexistence_search: n_sink and n_circle must differ");
    if (n_sink < 1 || n_circle < 1)
        throw std::invalid_argument("coexistence_search: return indices must be positive");
    g.validate();
    const double J1 = g.J1();
    const double l2g = s.lambda() * s.lambda() * s.gamma();
    const auto copts = detail::coexist_classify_options();

    CoexistenceResult res;
    for (double omega : box.omegas) {
        for (double offset : box.offsets) {
            // model prediction of R at the circle index, B close to 1
            const double R_guess = 2.0 * J1 * std::pow(l2g, n_circle);
            const MB on = curve_L_phi(omega, R_guess);
            std::vector<double> phis;
            try {
                phis = window_phi_branches(s, g, n_circle, on.B, box.phi_lo, box.phi_hi);
            } catch (const excluded_target&) {
            }
            for (double phi : phis) {
                CoexistenceProbe probe{omega, offset, phi, 0.0, {}, std::nullopt, std::nullopt, ""};
                auto log = [&](std::string what) {
                    probe.outcome = std::move(what);
                    res.log.push_back(probe);
                };
                GlobalMapCoeffs gc = g;
                gc.mu = window_mu(s, g, n_circle, phi, on.M + offset);
                probe.mu = gc.mu;

                // cheap prefilter on the model chart at the sink index
                const ReturnMapConfig sink_cfg0{s, gc, n_sink, phi};
                const auto sink_model = model_params(sink_cfg0);
                probe.sink_model = {sink_model.M, sink_model.B};
                if (!std::isfinite(sink_model.R) || std::abs(sink_model.M) > 10.0 ||
                    std::abs(sink_model.B) > 10.0 || sink_model.R == -1.0 || sink_model.R == -2.0 ||
                    !(stability_margin(sink_model.ghm()) < -box.sink_margin)) {
                    log("sink index outside the stability domain (model)");
                    continue;
                }

                // refine mu until the fitted circle-index map sits at the offset from Lphi
                FitOptions copt = fit_opt;
                {
                    const auto cm = model_params({s, gc, n_circle, phi});
                    const auto fps = fixed_points(cm.ghm());
                    if (!fps.empty()) {
                        copt.center = fps.back().point;
                        copt.u_span = std::min(fit_opt.u_span, 0.5);
                    }
                }
                GhmFit cfit;
                bool placed = false;
                std::string why = "circle fit failed";
                try {
                    for (int it = 0; it <= box.mu_refinements; ++it) {
                        cfit = fit_ghm({s, gc, n_circle, phi}, copt);
                        const auto w = detail::lphi_omega(cfit.params.B, cfit.params.R);
                        if (!w) {
                            why = "fitted circle-index B off the Lphi range";
                            break;
                        }
                        const double target = curve_L_phi(*w, cfit.params.R).M + offset;
                        const double err = cfit.params.M - target;
                        if (std::abs(err) < 0.05 * std::abs(offset)) {
                            placed = true;
                            break;
                        }
                        gc.mu += err / (gc.d * std::pow(s.gamma(), 2 * n_circle));
                    }
                } catch (const fit_error& e) {
                    why = e.what();
                }
                probe.mu = gc.mu;
                if (cfit.delay.samples > 0)
                    probe.circle_fit = cfit.params.ghm();
                if (!placed) {
                    log(why);
                    continue;
                }

                const ReturnMapConfig ccfg{s, gc, n_circle, phi};
                const ReturnMapConfig scfg{s, gc, n_sink, phi};
                GhmFit sfit;
                try {
                    sfit = fit_ghm(scfg, fit_opt);
                } catch (const fit_error& e) {
                    log(std::string("sink fit failed: ") + e.what());
                    continue;
                }
                CoexistenceHit hit;
                hit.mu = gc.mu;
                hit.phi = phi;
                hit.omega = omega;
                hit.offset = offset;
                hit.sink.n = n_sink;
                hit.sink.fitted = sfit.params;
                hit.sink.model = model_params(scfg);
                hit.sink.verdict = classify(sfit.params.ghm(), copts);
                hit.sink.sigma = sigma_slice(s, g.y_minus, n_sink);
                if (hit.sink.verdict.verdict != Verdict::sink) {
                    log(std::string("sink index classified ") + to_string(hit.sink.verdict.verdict));
                    continue;
                }
                hit.circle.n = n_circle;
                hit.circle.fitted = cfit.params;
                hit.circle.model = model_params(ccfg);
                hit.circle.verdict = classify(cfit.params.ghm(), copts);
                hit.circle.sigma = sigma_slice(s, g.y_minus, n_circle);
                probe.circle_lyapunov = hit.circle.verdict.lyapunov;
                if (hit.circle.verdict.verdict != Verdict::invariant_circle) {
                    log(std::string("circle index classified ") + to_string(hit.circle.verdict.verdict));
                    continue;
                }
                detail::direct_orbit_check(scfg, sfit, box.orbit_returns, hit.sink);
                detail::direct_orbit_check(ccfg, cfit, box.orbit_returns, hit.circle);
                if (!hit.sink.orbit_in_sigma || !hit.circle.orbit_in_sigma) {
                    log("direct orbit left sigma_n");
                    continue;
                }
                if (!hit.sink.orbit_period) {
                    log("direct sink-index orbit not periodic");
                    continue;
                }
                if (hit.circle.orbit_period) {
                    log("direct circle-index orbit periodic");
                    continue;
                }
                log("hit");
                res.hit = hit;
                return res;
            }
        }
    }
    return res;
}

} // namespace ghm::tangency
