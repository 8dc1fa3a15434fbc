#pragma once

// Generalized Hénon map
//
//     x' = y,    y' = M - B x - y^2 - R x y
//
// together with its Jacobian, fixed points and their multipliers.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ghm {

inline constexpr double kUnitCircleTol = 1e-9;
inline constexpr double kDefaultEscapeRadius = 1e6;

struct GhmParams {
    double M{0.0};
    double B{0.0};
    double R{0.0};

    bool finite() const noexcept
    {
        return std::isfinite(M) && std::isfinite(B) && std::isfinite(R);
    }
};

struct State2 {
    double x{0.0};
    double y{0.0};
    bool escaped{false};

    double sup_norm() const noexcept { return std::max(std::abs(x), std::abs(y)); }
};

// Row-major 2x2 matrix.
using Mat2 = std::array<std::array<double, 2>, 2>;

// Always a pair, even for real multipliers (imaginary part 0).
using Multipliers = std::array<std::complex<double>, 2>;

enum class Stability { attracting, repelling, saddle, non_hyperbolic };

inline const char* to_string(Stability s) noexcept
{
    switch (s) {
    case Stability::attracting: return "attracting";
    case Stability::repelling: return "repelling";
    case Stability::saddle: return "saddle";
    case Stability::non_hyperbolic: return "non-hyperbolic";
    }
    return "?";
}

struct FixedPointReport {
    State2 point;
    Multipliers multipliers;
    Stability stability;
};

// Thrown for R = -1, B = -1, where the fixed-point equation collapses to M = 0.
class degenerate_fixed_points : public std::domain_error {
public:
    degenerate_fixed_points()
        : std::domain_error("fixed-point equation degenerate (R = -1 and B = -1)")
    {
    }
};

inline State2 step(const GhmParams& p, const State2& s) noexcept
{
    State2 out{s.y, p.M - p.B * s.x - s.y * s.y - p.R * s.x * s.y, s.escaped};
    if (!std::isfinite(out.x) || !std::isfinite(out.y))
        out.escaped = true;
    return out;
}

inline Mat2 jacobian(const GhmParams& p, const State2& s) noexcept
{
    return Mat2{{{0.0, 1.0}, {-p.B - p.R * s.y, -2.0 * s.y - p.R * s.x}}};
}

inline double det(const Mat2& m) noexcept { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
inline double trace(const Mat2& m) noexcept { return m[0][0] + m[1][1]; }

inline Mat2 operator*(const Mat2& a, const Mat2& b) noexcept
{
    Mat2 c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return c;
}

// Roots of z^2 - t z + d, ordered by modulus then argument, descending.
inline Multipliers eigenvalues(double t, double d) noexcept
{
    using C = std::complex<double>;
    const double disc = t * t - 4.0 * d;
    Multipliers z;
    if (disc >= 0.0) {
        const double q = 0.5 * (t + std::copysign(std::sqrt(disc), t));
        const double r1 = q;
        const double r2 = (q != 0.0) ? d / q : 0.0;
        z = {C{r1, 0.0}, C{r2, 0.0}};
    } else {
        const double im = 0.5 * std::sqrt(-disc);
        z = {C{0.5 * t, im}, C{0.5 * t, -im}};
    }
    auto key_greater = [](const C& a, const C& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb)
            return ma > mb;
        return std::arg(a) > std::arg(b);
    };
    if (key_greater(z[1], z[0]))
        std::swap(z[0], z[1]);
    return z;
}

inline Multipliers eigenvalues(const Mat2& m) noexcept { return eigenvalues(trace(m), det(m)); }

inline Stability classify_multipliers(const Multipliers& mu, double tol = kUnitCircleTol) noexcept
{
    const double a = std::abs(mu[0]), b = std::abs(mu[1]);
    if (std::abs(a - 1.0) <= tol || std::abs(b - 1.0) <= tol)
        return Stability::non_hyperbolic;
    if (a < 1.0 && b < 1.0)
        return Stability::attracting;
    if (a > 1.0 && b > 1.0)
        return Stability::repelling;
    return Stability::saddle;
}

// Multipliers of the fixed point (x, x): trace -(2+R)x, determinant B+Rx.
inline Multipliers multipliers_at(const GhmParams& p, double x) noexcept
{
    return eigenvalues(-(2.0 + p.R) * x, p.B + p.R * x);
}

// Fixed points lie on the diagonal and solve (1+R) x^2 + (1+B) x - M = 0.
// Returned in descending x; a double root is reported once.
inline std::vector<FixedPointReport> fixed_points(const GhmParams& p)
{
    const double a = 1.0 + p.R;
    const double b = 1.0 + p.B;
    std::vector<double> xs;

    if (a == 0.0) {
        if (b == 0.0)
            throw degenerate_fixed_points{};
        xs.push_back(p.M / b);
    } else {
        const double disc = b * b + 4.0 * a * p.M;
        const double scale = b * b + 4.0 * std::abs(a * p.M);
        const double dtol = 64.0 * std::numeric_limits<double>::epsilon() * scale;
        if (std::abs(disc) <= dtol) {
            xs.push_back(-b / (2.0 * a));
        } else if (disc > 0.0) {
            const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
            xs.push_back(q / a);
            xs.push_back(-p.M / q);
        }
    }

    std::vector<FixedPointReport> out;
    out.reserve(xs.size());
    for (double x : xs) {
        // one Newton step on the scalar equation tightens the residual
        const double f = a * x * x + b * x - p.M;
        const double fp = 2.0 * a * x + b;
        if (xs.size() == 2 && fp != 0.0 && std::abs(f / fp) < 1e-6 * (1.0 + std::abs(x)))
            x -= f / fp;
        const auto mu = multipliers_at(p, x);
        out.push_back({State2{x, x}, mu, classify_multipliers(mu)});
    }
    std::sort(out.begin(), out.end(),
              [](const auto& l, const auto& r) { return l.point.x > r.point.x; });
    return out;
}

struct Orbit {
    std::vector<State2> points; // iterates 1..k, excluding the escaping one
    bool escaped{false};
    std::size_t escape_step{0}; // 1-based index of the first iterate outside the radius
};

inline Orbit orbit(const GhmParams& p, State2 s, std::size_t count,
                   double escape_radius = kDefaultEscapeRadius)
{
    if (count < 1 || !(escape_radius > 0.0))
        throw std::invalid_argument("orbit: count >= 1 and escape_radius > 0 required");
    Orbit o;
    o.points.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        s = step(p, s);
        if (s.escaped || s.sup_norm() > escape_radius) {
            o.escaped = true;
            o.escape_step = k;
            break;
        }
        o.points.push_back(s);
    }
    return o;
}

} // namespace ghm
