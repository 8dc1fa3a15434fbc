#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "ghm/tangency.hpp"

using namespace ghm;
using namespace ghm::tangency;

namespace {

const SaddleSpectrum kSpec = SaddleSpectrum::make(0.7, 1.0, 1.8);

// Central-difference 3x3 differential of T1.
Mat3d fd_jacobian(const GlobalMapCoeffs& g, const Vec3& p, double h = 1e-6)
{
    Mat3d J;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e(k) = h;
        J.col(k) = (global_map(g, p + e) - global_map(g, p - e)) / (2 * h);
    }
    return J;
}

} // namespace

TEST(Spectrum, GateProperty)
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> l(0.01, 0.99), g(1.01, 6.0), ph(0.05, 3.1);
    int accepted = 0, rejected = 0;
    for (int k = 0; k < 5000; ++k) {
        const double lambda = l(rng), gamma = g(rng);
        const bool ok = lambda * lambda * gamma < 1.0 && lambda * gamma > 1.0;
        if (ok) {
            EXPECT_NO_THROW(SaddleSpectrum::make(lambda, ph(rng), gamma));
            ++accepted;
        } else {
            EXPECT_THROW(SaddleSpectrum::make(lambda, ph(rng), gamma), std::invalid_argument);
            ++rejected;
        }
    }
    EXPECT_GT(accepted, 500);
    EXPECT_GT(rejected, 500);
    EXPECT_THROW(SaddleSpectrum::make(0.7, 0.0, 1.8), std::invalid_argument);
    EXPECT_THROW(SaddleSpectrum::make(0.7, std::numbers::pi, 1.8), std::invalid_argument);
    EXPECT_THROW(SaddleSpectrum::make(0.9, 1.0, 1.5), std::invalid_argument);
}

TEST(LocalMap, Examples)
{
    Vec3 p{1, 0, 0.001};
    p = local_map(0.5, 2.0, std::numbers::pi / 2, p);
    p = local_map(0.5, 2.0, std::numbers::pi / 2, p);
    EXPECT_NEAR(p(0), -0.25, 1e-15);
    EXPECT_NEAR(p(1), 0.0, 1e-15);
    EXPECT_NEAR(p(2), 0.004, 1e-15);

    EXPECT_EQ(local_map(kSpec, 0.3, Vec3::Zero()), Vec3::Zero());

    const Vec3 q{0.3, -0.4, 0.01};
    Vec3 r = q;
    for (int k = 0; k < 9; ++k)
        r = local_map(kSpec, 0.77, r);
    EXPECT_NEAR(r.head<2>().norm(), std::pow(0.7, 9) * 0.5, 1e-15);
    EXPECT_LT((r - local_map_power(kSpec, 0.77, 9, q)).norm(), 1e-15);
}

TEST(GlobalMap, Examples)
{
    GlobalMapCoeffs g;
    const Vec3 pre{0, 0, g.y_minus};
    Vec3 img = global_map(g, pre);
    EXPECT_EQ(img(0), 0.3);
    EXPECT_EQ(img(1), 0.0);
    EXPECT_EQ(img(2), 0.0);
    g.mu = 0.2;
    img = global_map(g, pre);
    EXPECT_EQ(img(2), 0.2);
}

TEST(GlobalMap, JacobianAtTangency)
{
    const GlobalMapCoeffs g;
    const Vec3 pre{0, 0, g.y_minus};
    const Mat3d J = fd_jacobian(g, pre);
    EXPECT_LT((J - global_map_jacobian(g, pre)).norm(), 1e-8);
    const double fd_det = J.determinant();
    EXPECT_NEAR(fd_det, g.J1(), 1e-8);
    EXPECT_NEAR(g.J1(), -0.183, 1e-15);
    EXPECT_EQ(Eigen::FullPivLU<Mat3d>(J).rank(), 3);

    const auto gc = coexistence_global();
    EXPECT_GT(fd_jacobian(gc, {0, 0, gc.y_minus}).determinant(), 0.0);

    GlobalMapCoeffs bad;
    bad.d = 0.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.b = {0.0, 0.0};
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Sigma, Geometry)
{
    const auto s2 = SaddleSpectrum::make(0.6, 1.0, 2.0);
    EXPECT_DOUBLE_EQ(sigma_slice(s2, 0.5, 4).center, 0.03125);
    for (int n = 1; n < 30; ++n) {
        const auto a = sigma_slice(kSpec, 0.5, n), b = sigma_slice(kSpec, 0.5, n + 1);
        EXPECT_NEAR(b.center / a.center, 1.0 / 1.8, 1e-14);
        EXPECT_NEAR(b.half_width / a.half_width, 1.0 / 1.8, 1e-14);
    }
}

TEST(ReturnMap, RejectsPointsOutsideSigma)
{
    const ReturnMapConfig cfg{kSpec, GlobalMapCoeffs{}, 6, 1.0};
    const auto sl = sigma_slice(kSpec, 0.5, 6);
    EXPECT_NO_THROW(return_map(cfg, {0, 0, sl.center}));
    EXPECT_THROW(return_map(cfg, {0, 0, sl.hi() + 1e-9}), std::domain_error);
    EXPECT_FALSE(try_return_map(cfg, {0, 0, sl.lo() - 1e-9}).has_value());
}

TEST(ReturnMap, WindowOrbitStaysInSigma)
{
    const auto cfg = window_config(kSpec, GlobalMapCoeffs{}, 12, {1.0, 0.5}, kSpec.phi0());
    const auto fit = fit_ghm(cfg);
    const auto o = iterate_return_map(cfg, lift_state(cfg, fit.delay, default_seed(fit.params.ghm())), 5000);
    EXPECT_FALSE(o.left_sigma);
    EXPECT_EQ(o.points.size(), 5000u);
}

TEST(Asymptotic, Examples)
{
    EXPECT_EQ(asymptotic_params(kSpec, 0.0, 0.1, 7, 1.0).M, 0.0);
    // n phi = pi/2 puts B at zero, which has no R
    EXPECT_THROW(asymptotic_params(kSpec, 0.0, std::numbers::pi / 20, 10, 1.0), excluded_target);

    const double l2g = 0.7 * 0.7 * 1.8;
    EXPECT_NEAR(l2g, 0.882, 1e-15);
    const double phi = std::acos(std::pow(0.7 * 1.8, -10)) / 10;
    const auto r = asymptotic_params(kSpec, 1e-3, phi, 10, 1.0);
    EXPECT_NEAR(r.B, 1.0, 1e-12);
    EXPECT_NEAR(r.R, 2 * std::pow(0.882, 10), 1e-12);
    EXPECT_EQ(r.provenance, Provenance::asymptotic);
    EXPECT_LT(asymptotic_params(kSpec, 1e-9, phi, 40, 1.0).R, 1e-2);
}

TEST(Window, Examples)
{
    EXPECT_EQ(window_invert(kSpec, 10, {0.0, 2.0}).mu, 0.0);
    EXPECT_NEAR(window_invert(kSpec, 10, {2.0, 0.0}).phi, std::numbers::pi / 20, 1e-15);
    const auto w = window_invert(kSpec, 12, {3.0, 1.0});
    const auto back = asymptotic_params(kSpec, w.mu, w.phi, 12, 1.0);
    EXPECT_NEAR(back.M, 3.0, 1e-12);
    EXPECT_NEAR(back.B, 1.0, 1e-12);

    EXPECT_THROW(window_invert(kSpec, 10, {0.1, 0.1}), excluded_target);
    EXPECT_THROW(window_invert(kSpec, 10, {10.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(window_invert(kSpec, 2, {1.0, 5.0}), excluded_target);
    EXPECT_THROW(window_invert(kSpec, 0, {1.0, 1.0}), std::invalid_argument);
}

TEST(Window, RoundTripIsIdentity)
{
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int n : {5, 10, 20}) {
        const double reach = std::pow(0.7 * 1.8, n);
        int round_trips = 0;
        for (int k = 0; k < 1000;) {
            const MB t{u(rng), u(rng)};
            if (std::hypot(t.M, t.B) < kExcludedRadius || std::abs(t.M) >= 10 || std::abs(t.B) >= 10)
                continue;
            ++k;
            if (std::abs(t.B) > reach) {
                EXPECT_THROW(window_invert(kSpec, n, t), excluded_target);
                continue;
            }
            const auto w = window_invert(kSpec, n, t);
            const auto back = asymptotic_params(kSpec, w.mu, w.phi, n, 1.0);
            EXPECT_NEAR(back.M, t.M, 1e-12);
            EXPECT_NEAR(back.B, t.B, 1e-12);
            ++round_trips;
        }
        EXPECT_GT(round_trips, 250) << n;
    }
}

TEST(ModelChart, WindowConfigHitsTarget)
{
    for (int n : {8, 12, 16}) {
        const auto cfg = window_config(kSpec, GlobalMapCoeffs{}, n, {1.0, 0.5}, kSpec.phi0());
        const auto m = model_params(cfg);
        EXPECT_NEAR(m.M, 1.0, 1e-9);
        EXPECT_NEAR(m.B, 0.5, 1e-12);
        EXPECT_NEAR(m.R, 2 * GlobalMapCoeffs{}.J1() * std::pow(0.882, n) / 0.5, 1e-12);
        EXPECT_LT(std::abs(cfg.phi - kSpec.phi0()), 2 * std::numbers::pi / n);
    }
}

TEST(Fit, RecoversExactGhm)
{
    for (const GhmParams p : {GhmParams{1.0, 0.5, -0.02}, GhmParams{0.3, -0.4, 0.2}, GhmParams{1.2, 0.3, 0.0}}) {
        FitOptions o;
        o.u_span = 0.8;
        o.collapse = 0;
        const auto f = fit_ghm_exact(p, o);
        EXPECT_NEAR(f.params.M, p.M, 1e-10);
        EXPECT_NEAR(f.params.B, p.B, 1e-10);
        EXPECT_NEAR(f.params.R, p.R, 1e-10);
        EXPECT_LT(f.delay.residual, 1e-12);
        EXPECT_EQ(f.params.provenance, Provenance::fitted);
        ASSERT_TRUE(f.params.fit_residual);
    }
}

TEST(Fit, TooFewSamplesIsAnError)
{
    EXPECT_THROW(fit_delay_map({{1, 2, 3, 4}}), fit_error);
    FitOptions o;
    o.grid = 3;
    EXPECT_THROW(fit_ghm_exact({1, 0.5, 0}, o), fit_error);
}

TEST(Fit, ConvergesTowardsChart)
{
    const GlobalMapCoeffs g;
    double prev = 1e300;
    for (int n : {8, 12, 16}) {
        const auto cfg = window_config(kSpec, g, n, {1.0, 0.5}, kSpec.phi0());
        const auto f = fit_ghm(cfg);
        RescaledParams pred;
        pred.M = 1.0;
        pred.B = 0.5;
        pred.R = 2 * g.J1() * std::pow(0.882, n) / 0.5;
        const double delta = rescale_discrepancy(f.params, pred);
        EXPECT_LT(delta, prev) << n;
        prev = delta;
        EXPECT_LT(f.params.R, 0.0);
    }
    EXPECT_LT(prev, 0.1);
}

TEST(Fit, SignOfRFollowsJ1ForBothSignsOfD)
{
    for (double d : {1.0, -1.0}) {
        GlobalMapCoeffs g;
        g.d = d;
        for (double bsign : {1.0, -1.0}) {
            GlobalMapCoeffs h = g;
            h.b = bsign * g.b;
            const Mat3d J = fd_jacobian(h, {0, 0, h.y_minus});
            const double j1 = J.determinant();
            const auto cfg = window_config(kSpec, h, 12, {1.0, 0.5}, kSpec.phi0());
            const auto f = fit_ghm(cfg);
            EXPECT_EQ(std::signbit(f.params.R), std::signbit(j1)) << "d=" << d << " b sign " << bsign;
        }
    }
}

TEST(Coexistence, EqualIndicesRejected)
{
    EXPECT_THROW(coexistence_search(kSpec, coexistence_global(), 10, 10, CoexistenceBox::defaults()),
                 std::invalid_argument);
}

TEST(Coexistence, HitHasDisjointSlices)
{
    auto box = CoexistenceBox::defaults();
    box.omegas = {std::numbers::pi * 0.3375};
    box.offsets = {0.02};
    const auto r = coexistence_search(kSpec, coexistence_global(), 10, 14, box);
    ASSERT_TRUE(r.hit);
    ASSERT_FALSE(r.log.empty());
    EXPECT_EQ(r.log.back().outcome, "hit");
    const auto& h = *r.hit;
    EXPECT_EQ(h.sink.verdict.verdict, Verdict::sink);
    EXPECT_EQ(h.circle.verdict.verdict, Verdict::invariant_circle);
    EXPECT_NEAR(h.sink.sigma.center / h.circle.sigma.center, std::pow(1.8, 4), 1e-9);
    EXPECT_LT(h.circle.sigma.hi(), h.sink.sigma.lo());
    EXPECT_TRUE(h.sink.orbit_in_sigma);
    EXPECT_TRUE(h.circle.orbit_in_sigma);
    EXPECT_LT(h.circle.y_hi, h.sink.y_lo);
}
