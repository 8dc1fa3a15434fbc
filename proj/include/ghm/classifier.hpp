#pragma once

// Long-run attractor classification for the generalized Hénon map and
// parameter-plane sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ghm/atlas.hpp"
#include "ghm/core.hpp"

namespace ghm {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LyapunovSpectrum {
    double l1{kNaN}; // nats per iterate, l1 >= l2
    double l2{kNaN};
};

namespace detail {

// Tangent dynamics in the plane: one tracked direction gives the top
// exponent, and the area factor |det J| gives the sum.
class TangentTracker {
public:
    void push(const Mat2& J) noexcept
    {
        double wx = J[0][0] * vx_ + J[0][1] * vy_;
        double wy = J[1][0] * vx_ + J[1][1] * vy_;
        double n = std::hypot(wx, wy);
        if (n == 0.0) {
            // v fell into the kernel; follow the orthogonal direction
            wx = -J[0][0] * vy_ + J[0][1] * vx_;
            wy = -J[1][0] * vy_ + J[1][1] * vx_;
            n = std::hypot(wx, wy);
        }
        const double ad = std::abs(det(J));
        log_top_ += std::log(n);
        log_det_ += std::log(ad);
        if (n > 0.0) {
            vx_ = wx / n;
            vy_ = wy / n;
        }
        ++steps_;
    }

    LyapunovSpectrum spectrum() const noexcept
    {
        const double l1 = log_top_ / static_cast<double>(steps_);
        const double sum = log_det_ / static_cast<double>(steps_);
        return {l1, sum - l1};
    }

    double mean_log_det() const noexcept { return log_det_ / static_cast<double>(steps_); }

private:
    double vx_{0.8506508083520399}; // generic unit start direction
    double vy_{0.5257311121191336};
    double log_top_{0.0};
    double log_det_{0.0};
    std::size_t steps_{0};
};

inline bool escaped(const State2& s, double radius) noexcept
{
    return s.escaped || s.sup_norm() > radius;
}

} // namespace detail

// Exponents along the orbit of s0 after burn_in iterates, averaged over span
// iterates. Returns nullopt when the orbit escapes.
inline std::optional<LyapunovSpectrum> lyapunov_exponents(const GhmParams& p, State2 s,
                                                          std::size_t burn_in, std::size_t span,
                                                          double escape_radius = kDefaultEscapeRadius)
{
    if (span < 1000)
        throw std::invalid_argument("lyapunov_exponents: span must be at least 1000");
    for (std::size_t k = 0; k < burn_in; ++k) {
        s = step(p, s);
        if (detail::escaped(s, escape_radius))
            return std::nullopt;
    }
    detail::TangentTracker tt;
    for (std::size_t k = 0; k < span; ++k) {
        tt.push(jacobian(p, s));
        s = step(p, s);
        if (detail::escaped(s, escape_radius))
            return std::nullopt;
    }
    return tt.spectrum();
}

// Smallest k <= max_period with |s_{i+k} - s_i|_inf < tol over the tail.
inline std::optional<int> detect_period(std::span<const State2> tail, int max_period, double tol)
{
    if (max_period < 1 || tail.size() < 4 * static_cast<std::size_t>(max_period))
        throw std::invalid_argument("detect_period: tail must hold at least 4*max_period states");
    for (int k = 1; k <= max_period; ++k) {
        bool ok = true;
        for (std::size_t i = 0; i + k < tail.size() && ok; ++i) {
            const double dx = std::abs(tail[i + k].x - tail[i].x);
            const double dy = std::abs(tail[i + k].y - tail[i].y);
            ok = dx < tol && dy < tol;
        }
        if (ok)
            return k;
    }
    return std::nullopt;
}

struct CircleReport {
    bool closed{false};        // false when angular coverage has a gap
    double max_gap_deg{kNaN};
    State2 center;
    double mean_radius{kNaN};
    double radial_deviation{kNaN}; // (r_max - r_min) / (r_max + r_min) of the curve
    double rotation_number{kNaN};
    double invariance_residual{kNaN};
    std::vector<State2> curve; // closed polygon, ascending angle

    double relative_residual() const noexcept { return invariance_residual / mean_radius; }
};

inline constexpr std::size_t kCircleMinPoints = 2000;
inline constexpr double kCircleMaxGapDeg = 10.0;
inline constexpr int kCircleBins = 180;

namespace detail {

inline double segment_distance(const State2& q, const State2& a, const State2& b) noexcept
{
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0.0 ? ((q.x - a.x) * ex + (q.y - a.y) * ey) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(q.x - (a.x + t * ex), q.y - (a.y + t * ey));
}

inline double polygon_distance(const State2& q, std::span<const State2> poly) noexcept
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poly.size(); ++i)
        best = std::min(best, segment_distance(q, poly[i], poly[(i + 1) % poly.size()]));
    return best;
}

} // namespace detail

// Polygonal fit of a closed invariant curve through angular-bin means about
// the centroid. The residual is the largest distance from the image of a
// curve vertex under `map` to the curve.
template <class StepFn>
CircleReport fit_invariant_circle(std::span<const State2> tail, StepFn&& map)
{
    if (tail.size() < kCircleMinPoints)
        throw std::invalid_argument("fit_invariant_circle: at least 2000 points required");
    CircleReport rep;
    double cx = 0.0, cy = 0.0;
    for (const auto& s : tail) {
        cx += s.x;
        cy += s.y;
    }
    cx /= static_cast<double>(tail.size());
    cy /= static_cast<double>(tail.size());
    rep.center = {cx, cy};

    std::vector<double> angles(tail.size());
    double rsum = 0.0;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        angles[i] = std::atan2(tail[i].y - cy, tail[i].x - cx);
        rsum += std::hypot(tail[i].x - cx, tail[i].y - cy);
    }
    rep.mean_radius = rsum / static_cast<double>(tail.size());

    std::vector<double> sorted = angles;
    std::sort(sorted.begin(), sorted.end());
    double gap = sorted.front() + 2.0 * std::numbers::pi - sorted.back();
    for (std::size_t i = 1; i < sorted.size(); ++i)
        gap = std::max(gap, sorted[i] - sorted[i - 1]);
    rep.max_gap_deg = gap * 180.0 / std::numbers::pi;
    if (rep.max_gap_deg > kCircleMaxGapDeg || !(rep.mean_radius > 0.0))
        return rep;
    rep.closed = true;

    std::vector<double> bx(kCircleBins, 0.0), by(kCircleBins, 0.0);
    std::vector<std::size_t> bn(kCircleBins, 0);
    for (std::size_t i = 0; i < tail.size(); ++i) {
        auto b = static_cast<int>((angles[i] + std::numbers::pi) / (2.0 * std::numbers::pi) * kCircleBins);
        b = std::clamp(b, 0, kCircleBins - 1);
        bx[b] += tail[i].x;
        by[b] += tail[i].y;
        ++bn[b];
    }
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (int b = 0; b < kCircleBins; ++b) {
        if (bn[b] == 0)
            continue;
        const State2 v{bx[b] / bn[b], by[b] / bn[b]};
        const double r = std::hypot(v.x - cx, v.y - cy);
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        rep.curve.push_back(v);
    }
    rep.radial_deviation = (rmax - rmin) / (rmax + rmin);

    double turn = 0.0;
    for (std::size_t i = 1; i < angles.size(); ++i) {
        double d = angles[i] - angles[i - 1];
        d = std::remainder(d, 2.0 * std::numbers::pi);
        turn += d;
    }
    rep.rotation_number = std::abs(turn / static_cast<double>(angles.size() - 1)) / (2.0 * std::numbers::pi);

    double res = 0.0;
    for (const auto& v : rep.curve)
        res = std::max(res, detail::polygon_distance(map(v), rep.curve));
    rep.invariance_residual = res;
    return rep;
}

inline CircleReport fit_invariant_circle(std::span<const State2> tail, const GhmParams& p)
{
    return fit_invariant_circle(tail, [&](const State2& s) { return step(p, s); });
}

enum class Verdict { sink, invariant_circle, chaotic, divergent, undecided };

inline const char* to_string(Verdict v) noexcept
{
    switch (v) {
    case Verdict::sink: return "sink";
    case Verdict::invariant_circle: return "circle";
    case Verdict::chaotic: return "chaotic";
    case Verdict::divergent: return "divergent";
    case Verdict::undecided: return "undecided";
    }
    return "?";
}

struct Evidence {
    double period_residual{kNaN};  // max |s_{i+k} - s_i| over the tail
    double cycle_radius{kNaN};     // spectral radius of the k-cycle multiplier matrix
    double mean_log_det{kNaN};     // orbit average of ln|det J|
    double circle_residual{kNaN};  // invariance residual / mean radius
    double circle_gap_deg{kNaN};
    std::size_t escape_step{0};
};

struct AttractorClass {
    Verdict verdict{Verdict::undecided};
    int period{0};        // sink only
    int circle_period{0}; // invariant_circle only: 1, or 2 for a two-piece circle
    LyapunovSpectrum lyapunov;
    std::optional<double> rotation_number;
    Evidence evidence;
};

struct ClassifyOptions {
    double eps_lyap{1e-3};
    std::size_t burn_in{10000};
    std::size_t span{100000};
    int max_period{64};
    double period_tol{1e-8};
    double escape_radius{kDefaultEscapeRadius};
    std::size_t circle_points{4000};
    double circle_tol{1e-3}; // relative to mean radius
    std::optional<State2> seed;
};

// Attracting fixed point -> tiny offset; unstable fixed point -> 1e-2 offset
// from the one with larger x; no fixed point -> origin.
inline State2 default_seed(const GhmParams& p)
{
    std::vector<FixedPointReport> fps;
    try {
        fps = fixed_points(p);
    } catch (const degenerate_fixed_points&) {
    }
    for (const auto& fp : fps)
        if (fp.stability == Stability::attracting)
            return {fp.point.x + 1e-6, fp.point.y};
    if (!fps.empty())
        return {fps.front().point.x + 1e-2, fps.front().point.y};
    return {0.0, 0.0};
}

namespace detail {

inline double period_residual(std::span<const State2> tail, int k)
{
    double r = 0.0;
    for (std::size_t i = 0; i + k < tail.size(); ++i)
        r = std::max({r, std::abs(tail[i + k].x - tail[i].x), std::abs(tail[i + k].y - tail[i].y)});
    return r;
}

// Sink(k) when the cycle through the last k tail points is attracting.
inline bool certify_cycle(const GhmParams& p, std::span<const State2> tail, int k, AttractorClass& out)
{
    Mat2 P{{{1.0, 0.0}, {0.0, 1.0}}};
    const std::size_t start = tail.size() - static_cast<std::size_t>(k);
    for (std::size_t i = start; i < tail.size(); ++i)
        P = jacobian(p, tail[i]) * P;
    const auto mu = eigenvalues(P);
    const double rho = std::abs(mu[0]);
    out.evidence.cycle_radius = rho;
    out.evidence.period_residual = period_residual(tail, k);
    if (classify_multipliers(mu) != Stability::attracting)
        return false;
    out.verdict = Verdict::sink;
    out.period = k;
    out.lyapunov = {std::log(std::abs(mu[0])) / k, std::log(std::abs(mu[1])) / k};
    out.evidence.mean_log_det = std::log(std::abs(det(P))) / k;
    return true;
}

} // namespace detail

inline AttractorClass classify(const GhmParams& p, const ClassifyOptions& opts = {})
{
    if (opts.max_period < 1 || opts.circle_points < kCircleMinPoints)
        throw std::invalid_argument("classify: max_period >= 1 and circle_points >= 2000 required");
    const std::size_t tail_len = 4 * static_cast<std::size_t>(opts.max_period);
    const std::size_t keep = std::max(2 * opts.circle_points, tail_len);
    if (opts.span < keep)
        throw std::invalid_argument("classify: span shorter than twice the circle window");
    AttractorClass out;
    State2 s = opts.seed.value_or(default_seed(p));
    const double rad = opts.escape_radius;

    std::size_t k = 0;
    auto advance = [&]() {
        s = step(p, s);
        ++k;
        return !detail::escaped(s, rad);
    };
    auto divergent = [&]() {
        out.verdict = Verdict::divergent;
        out.evidence.escape_step = k;
        return out;
    };

    for (std::size_t i = 0; i < opts.burn_in; ++i)
        if (!advance())
            return divergent();

    std::vector<State2> tail;
    tail.reserve(tail_len);
    for (std::size_t i = 0; i < tail_len; ++i) {
        if (!advance())
            return divergent();
        tail.push_back(s);
    }
    if (auto per = detect_period(tail, opts.max_period, opts.period_tol))
        if (detail::certify_cycle(p, tail, *per, out))
            return out;

    // Non-periodic (or uncertified) tail: exponents and the recent orbit.
    std::vector<State2> ring(keep);
    detail::TangentTracker tt;
    for (std::size_t i = 0; i < opts.span; ++i) {
        tt.push(jacobian(p, s));
        if (!advance())
            return divergent();
        ring[i % keep] = s;
    }
    std::rotate(ring.begin(), ring.begin() + static_cast<std::ptrdiff_t>(opts.span % keep), ring.end());

    out.lyapunov = tt.spectrum();
    out.evidence.mean_log_det = tt.mean_log_det();
    const double l1 = out.lyapunov.l1, l2 = out.lyapunov.l2;
    const double eps = opts.eps_lyap;

    if (l1 > eps) {
        out.verdict = Verdict::chaotic;
        return out;
    }
    const std::span<const State2> recent(ring.data() + ring.size() - tail_len, tail_len);
    if (auto per = detect_period(recent, opts.max_period, opts.period_tol)) {
        AttractorClass sink = out;
        if (detail::certify_cycle(p, recent, *per, sink))
            return sink;
        out.evidence = sink.evidence;
        out.verdict = Verdict::undecided;
        return out;
    }
    if (std::abs(l1) <= eps && l2 < -eps) {
        // A circle of the k-th iterate (k = 1, 2) is fitted on every k-th point.
        for (int k = 1; k <= 2; ++k) {
            const std::size_t len = opts.circle_points * static_cast<std::size_t>(k);
            if (len > ring.size())
                break;
            std::vector<State2> pts;
            pts.reserve(opts.circle_points);
            for (std::size_t i = ring.size() - len; i < ring.size(); i += static_cast<std::size_t>(k))
                pts.push_back(ring[i]);
            const auto rep = fit_invariant_circle(pts, [&](State2 v) {
                for (int r = 0; r < k; ++r)
                    v = step(p, v);
                return v;
            });
            out.evidence.circle_gap_deg = rep.max_gap_deg;
            if (!rep.closed)
                continue;
            out.evidence.circle_residual = rep.relative_residual();
            if (rep.relative_residual() < opts.circle_tol) {
                out.verdict = Verdict::invariant_circle;
                out.circle_period = k;
                out.rotation_number = rep.rotation_number;
                return out;
            }
            break;
        }
    }
    out.verdict = Verdict::undecided;
    return out;
}

inline AttractorClass classify_from(const GhmParams& p, State2 seed, ClassifyOptions opts = {})
{
    opts.seed = seed;
    return classify(p, opts);
}

struct NeimarkSackerProbe {
    MB on_curve;
    double offset{0.0};
    AttractorClass plus_side;  // M + offset
    AttractorClass minus_side; // M - offset
    std::optional<int> circle_side; // +1 / -1 when a stable circle was found
};

// Classifies both sides of Lphi(omega, R) at +-offset in M.
inline NeimarkSackerProbe probe_neimark_sacker(double omega, double R, double offset,
                                               const ClassifyOptions& opts = {})
{
    NeimarkSackerProbe pr;
    pr.on_curve = curve_L_phi(omega, R);
    pr.offset = offset;
    pr.plus_side = classify({pr.on_curve.M + offset, pr.on_curve.B, R}, opts);
    pr.minus_side = classify({pr.on_curve.M - offset, pr.on_curve.B, R}, opts);
    if (pr.plus_side.verdict == Verdict::invariant_circle)
        pr.circle_side = +1;
    else if (pr.minus_side.verdict == Verdict::invariant_circle)
        pr.circle_side = -1;
    return pr;
}

struct GridSpec {
    double m_min{-2.0}, m_max{4.0};
    double b_min{-1.5}, b_max{1.5};
    int nx{50}, ny{50};
    double R{0.0};

    void validate() const
    {
        if (nx < 2 || ny < 2)
            throw std::invalid_argument("grid: nx and ny must be at least 2");
        if (!(m_max > m_min) || !(b_max > b_min))
            throw std::invalid_argument("grid: empty parameter range");
        if (!std::isfinite(R) || R == -1.0 || R == -2.0)
            throw std::invalid_argument("grid: R must be finite and differ from -1, -2");
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    // Row-major: index = j * nx + i, i along M, j along B.
    GhmParams cell(std::size_t index) const noexcept
    {
        const auto i = static_cast<int>(index % static_cast<std::size_t>(nx));
        const auto j = static_cast<int>(index / static_cast<std::size_t>(nx));
        return {m_min + (m_max - m_min) * i / (nx - 1), b_min + (b_max - b_min) * j / (ny - 1), R};
    }
};

struct SweepGrid {
    GridSpec spec;
    std::vector<AttractorClass> cells;

    GhmParams params(std::size_t index) const noexcept { return spec.cell(index); }
};

// Cells are independent; workers pull indices from a shared counter and write
// to their own slot, so the result does not depend on the schedule.
inline SweepGrid sweep(const GridSpec& spec, const ClassifyOptions& opts = {}, unsigned threads = 1)
{
    spec.validate();
    SweepGrid g{spec, std::vector<AttractorClass>(spec.size())};
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < g.cells.size(); i = next++)
            g.cells[i] = classify(spec.cell(i), opts);
    };
    const unsigned n = std::max(1u, threads);
    if (n == 1) {
        work();
        return g;
    }
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t)
        pool.emplace_back(work);
    pool.clear();
    return g;
}

} // namespace ghm
