// Acceptance gate: one [PASS]/[FAIL] line per criterion, exit status 1 if
// any criterion fails.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ghm/atlas.hpp"
#include "ghm/classifier.hpp"
#include "ghm/cli.hpp"
#include "ghm/core.hpp"
#include "ghm/tangency.hpp"

using namespace ghm;
namespace tg = ghm::tangency;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

template <class... Args>
std::string fmt(const char* f, Args... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// Multipliers from a dense eigen-solver, as an oracle independent of the
// closed-form 2x2 roots in the library.
std::array<std::complex<double>, 2> oracle_multipliers(const GhmParams& p, double x)
{
    const Mat2 J = jacobian(p, {x, x});
    Eigen::Matrix2d m;
    m << J[0][0], J[0][1], J[1][0], J[1][1];
    const Eigen::Vector2cd ev = Eigen::EigenSolver<Eigen::Matrix2d>(m).eigenvalues();
    return {ev(0), ev(1)};
}

double dist_to(const std::array<std::complex<double>, 2>& mu, std::complex<double> target)
{
    return std::min(std::abs(mu[0] - target), std::abs(mu[1] - target));
}

Outcome curve_multiplier_identity()
{
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> rr(-0.3, 0.3), bb(-3.0, 3.0), om(1e-3, std::numbers::pi - 1e-3),
        al(1.0, 3.0);
    double worst[4] = {0, 0, 0, 0};
    for (int k = 0; k < 1000; ++k) {
        const double R = rr(rng);
        const CurveSample plus = make_sample(CurveId::Lplus, bb(rng), R);
        const CurveSample minus = make_sample(CurveId::Lminus, bb(rng), R);
        const double omega = om(rng);
        const CurveSample phi = make_sample(CurveId::Lphi, omega, R);
        const CurveSample neutral = make_sample(CurveId::Lneutral, al(rng), R);

        auto both = [&](const CurveSample& s, auto&& err) {
            const GhmParams p{s.location.M, s.location.B, s.R};
            const double x = curve_fixed_point_x(s);
            return std::max(err(multipliers_at(p, x)), err(oracle_multipliers(p, x)));
        };
        worst[0] = std::max(worst[0], both(plus, [](const auto& mu) { return dist_to(mu, 1.0); }));
        worst[1] = std::max(worst[1], both(minus, [](const auto& mu) { return dist_to(mu, -1.0); }));
        worst[2] = std::max(worst[2], both(phi, [&](const auto& mu) {
            return std::max(dist_to(mu, std::polar(1.0, omega)), dist_to(mu, std::polar(1.0, -omega)));
        }));
        worst[3] = std::max(worst[3], both(neutral, [](const auto& mu) { return std::abs(mu[0] * mu[1] - 1.0); }));
    }
    const double w = *std::max_element(worst, worst + 4);
    return {w < 1e-9, fmt("max deviation L+ %.2e, L- %.2e, Lphi %.2e, Ln product %.2e", worst[0], worst[1],
                          worst[2], worst[3])};
}

Outcome organizing_point_checks()
{
    const auto [bt, ht] = organizing_points(0.0);
    bool ok = bt.location.M == -1.0 && bt.location.B == 1.0 && ht.location.M == 3.0 && ht.location.B == 1.0;
    std::string detail = fmt("R=0: BT=(%g,%g) HT=(%g,%g)", bt.location.M, bt.location.B, ht.location.M,
                             ht.location.B);
    for (double R : {-0.1, 0.1}) {
        const auto [b, h] = organizing_points(R);
        const double s = 1.0 + 0.5 * R;
        const GhmParams pb{b.location.M, b.location.B, R}, ph{h.location.M, h.location.B, R};
        const double cb = double_multiplier_defect(pb, -1.0 / s, +1.0);
        const double ch = double_multiplier_defect(ph, 1.0 / s, -1.0);
        const auto mb = multipliers_at(pb, -1.0 / s);
        const auto mh = multipliers_at(ph, 1.0 / s);
        const double eb = std::max(std::abs(mb[0] - 1.0), std::abs(mb[1] - 1.0));
        const double eh = std::max(std::abs(mh[0] + 1.0), std::abs(mh[1] + 1.0));
        ok = ok && cb <= 1e-8 && ch <= 1e-8;
        detail += fmt("; R=%+.1f: (mu-1)^2 defect at BT %.1e (roots %.1e), (mu+1)^2 defect at HT %.1e (roots %.1e)",
                      R, cb, eb, ch, eh);
    }
    return {ok, detail};
}

Outcome one_dimensional_reduction()
{
    auto path = [](double M) { return GhmParams{M, 0.0, 0.0}; };
    const auto sn = locate_fixed_point_bifurcation(path, 0.0, -0.5);
    const auto pd = locate_fixed_point_bifurcation(path, 0.0, 1.0);
    const double esn = std::abs(sn.t - curve_L_plus(0.0, 0.0));
    const double epd = std::abs(pd.t - curve_L_minus(0.0, 0.0));
    const bool ok = sn.kind == BifurcationKind::saddle_node && pd.kind == BifurcationKind::period_doubling &&
                    std::abs(sn.t + 0.25) <= 1e-9 && std::abs(pd.t - 0.75) <= 1e-9 && esn <= 1e-9 && epd <= 1e-9;
    return {ok, fmt("%s at M=%.12f, %s at M=%.12f", to_string(sn.kind), sn.t, to_string(pd.kind), pd.t)};
}

Outcome stability_domain_sweep()
{
    bool ok = true;
    std::string detail;
    for (double R : {-0.05, 0.0, 0.05}) {
        const GridSpec g{-2.0, 4.0, -1.5, 1.5, 200, 200, R};
        const auto s = sweep(g, {}, worker_count());
        int inside = 0, sink1 = 0, below = 0, diverged = 0;
        for (std::size_t i = 0; i < s.cells.size(); ++i) {
            const auto p = s.params(i);
            const auto& c = s.cells[i];
            if (stability_margin(p) <= -0.02) {
                ++inside;
                sink1 += c.verdict == Verdict::sink && c.period == 1;
            }
            if (std::abs(p.B) <= 1.0 && p.M < curve_L_plus(p.B, R) - 0.05) {
                ++below;
                diverged += c.verdict == Verdict::divergent;
            }
        }
        const double frac = static_cast<double>(sink1) / inside;
        ok = ok && frac >= 0.99 && diverged == below;
        detail += fmt("%sR=%+.2f: Sink(1) %d/%d (%.4f), Divergent %d/%d", detail.empty() ? "" : "; ", R, sink1,
                      inside, frac, diverged, below);
    }
    return {ok, detail};
}

Outcome circle_sign_test()
{
    const auto plus = probe_neimark_sacker(std::numbers::pi / 3, 0.1, 0.01);
    const auto minus = probe_neimark_sacker(std::numbers::pi / 3, -0.1, 0.01);
    const auto& c = plus.plus_side;
    const bool found = plus.circle_side && *plus.circle_side == +1 && c.verdict == Verdict::invariant_circle;
    const bool small = found && c.evidence.circle_residual < 1e-3;
    const bool mirrored = !minus.circle_side;
    return {found && small && mirrored,
            fmt("R=+0.1: %s (residual/radius %.2e, rotation %.4f); R=-0.1: sides %s / %s", to_string(c.verdict),
                c.evidence.circle_residual, c.rotation_number.value_or(kNaN), to_string(minus.plus_side.verdict),
                to_string(minus.minus_side.verdict))};
}

Outcome rescaling_convergence()
{
    const auto spec = tg::SaddleSpectrum::make(0.7, 1.0, 1.8);
    const tg::GlobalMapCoeffs g;
    const auto rows = cli::rescale_rows(spec, g, {1.0, 0.5}, {8, 12, 16}, cli::RescaleMode::model);
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!r.delta) {
            ok = false;
            detail += fmt(" n=%d fit failed;", r.n);
            continue;
        }
        if (i > 0 && rows[i - 1].delta && !(*r.delta < *rows[i - 1].delta))
            ok = false;
        if (std::signbit(r.fit->R) != std::signbit(g.J1()))
            ok = false;
        detail += fmt(" n=%d delta=%.4f R_fit=%+.3e;", r.n, *r.delta, r.fit->R);
    }
    ok = ok && rows.back().delta && *rows.back().delta < 0.1;
    detail += fmt(" J1=%+.3f", g.J1());
    return {ok, detail};
}

Outcome window_round_trip()
{
    const auto spec = tg::SaddleSpectrum::make(0.7, 1.0, 1.8);
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    bool ok = true;
    std::string detail;
    for (int n : {5, 10, 20}) {
        const double reach = std::pow(0.7 * 1.8, n);
        double worst = 0.0;
        int inverted = 0, unreachable = 0;
        for (int k = 0; k < 1000;) {
            const MB t{u(rng), u(rng)};
            if (std::hypot(t.M, t.B) < tg::kExcludedRadius)
                continue;
            ++k;
            try {
                const auto w = tg::window_invert(spec, n, t);
                const auto back = tg::asymptotic_params(spec, w.mu, w.phi, n, 1.0);
                worst = std::max({worst, std::abs(back.M - t.M), std::abs(back.B - t.B)});
                ++inverted;
                ok = ok && std::abs(t.B) <= reach;
            } catch (const tg::excluded_target&) {
                ++unreachable;
                ok = ok && std::abs(t.B) > reach;
            }
        }
        ok = ok && worst <= 1e-12;
        detail += fmt("%sn=%d: %d inverted (max err %.1e), %d beyond |B|>%.2f", detail.empty() ? "" : "; ", n,
                      inverted, worst, unreachable, reach);
    }
    return {ok, detail};
}

Outcome coexistence()
{
    const auto spec = tg::SaddleSpectrum::make(0.7, 1.0, 1.8);
    const auto r = tg::coexistence_search(spec, tg::coexistence_global(), 10, 14, tg::CoexistenceBox::defaults());
    if (!r.hit)
        return {false, fmt("none found after %zu probes", r.log.size())};
    const auto& h = *r.hit;
    const bool ok = h.sink.verdict.verdict == Verdict::sink && h.circle.verdict.verdict == Verdict::invariant_circle &&
                    h.sink.n != h.circle.n && h.sink.orbit_in_sigma && h.circle.orbit_in_sigma;
    return {ok, fmt("mu=%.6e phi=%.6f: n=10 %s(period %d), n=14 %s (l1 %.1e, l2 %.1e); %zu probes", h.mu, h.phi,
                    to_string(h.sink.verdict.verdict), h.sink.verdict.period, to_string(h.circle.verdict.verdict),
                    h.circle.verdict.lyapunov.l1, h.circle.verdict.lyapunov.l2, r.log.size())};
}

Outcome sweep_determinism()
{
    auto run = [](const char* threads) {
        const char* argv[] = {"ghm_atlas", "sweep", "--nx", "60", "--ny", "60", "--R", "0.05", "--threads", threads};
        std::ostringstream out, err;
        const int code = cli::run(10, argv, out, err);
        return std::make_pair(code, out.str());
    };
    const auto a = run("1");
    const auto b = run("8");
    const bool ok = a.first == 0 && b.first == 0 && a.second == b.second && !a.second.empty();
    return {ok, fmt("%zu bytes, %s", a.second.size(), a.second == b.second ? "identical" : "different")};
}

Outcome chaotic_control()
{
    ClassifyOptions o;
    o.span = 1000000;
    const auto c = classify({1.4, -0.3, 0.0}, o);
    const bool ok = c.verdict == Verdict::chaotic && std::abs(c.lyapunov.l1 - 0.419) <= 0.01;
    return {ok, fmt("%s, lambda1=%.4f lambda2=%.4f", to_string(c.verdict), c.lyapunov.l1, c.lyapunov.l2)};
}

struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria = {
        {"1 curve-multiplier identity", 5, curve_multiplier_identity},
        {"2 organizing points", 1, organizing_point_checks},
        {"3 one-dimensional reduction", 1, one_dimensional_reduction},
        {"4 stability-domain sweep", 300, stability_domain_sweep},
        {"5 invariant circle and sign of R", 30, circle_sign_test},
        {"6 rescaling convergence", 120, rescaling_convergence},
        {"7 window round trip", 1, window_round_trip},
        {"8 coexistence of sink and circle", 600, coexistence},
        {"9 sweep determinism", 300, sweep_determinism},
        {"10 chaotic control point", 30, chaotic_control},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("[%s] %s: %s (%.2f s of %.0f s)\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                    c.budget_s);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
