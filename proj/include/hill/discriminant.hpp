#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "hill/common.hpp"
#include "hill/dop853.hpp"
#include "hill/potential.hpp"

namespace hill {

inline constexpr double default_ode_tol = 1e-12;

// Monodromy data at one spectral parameter. The second derivative is only
// filled when requested (it costs four extra complex states).
struct DiscriminantSample {
    cplx lambda;
    cplx theta1, phi1, dtheta1, dphi1;
    cplx F, dF, d2F;
    double ode_tolerance = 0.0;
    double wronskian_defect = 0.0;  // |theta phi' - theta' phi - 1|
    int steps = 0;
};

namespace detail {

// Variation of constants around the free solutions c = cos(kx), s = sin(kx)/k,
// k^2 = lambda: y = a c + b s, y' = -lambda a s + b c, with
// a' = -s f, b' = c f and f = q y (plus -y, -2 y_lambda for the lambda-derivatives).
// The free oscillation is evaluated in closed form at every x, so phase
// round-off does not accumulate and the states vary only at the scale of q.
// Each (a, b) pair is stored rescaled by powers of max(1, |k|) so that every
// stored component contributes at unit weight to F, dF, d2F and a single
// absolute tolerance is meaningful.
template <int Order>
struct Variational {
    static constexpr int blocks = 2 * (Order + 1);  // theta, phi, then lambda-derivatives
    static constexpr int dim = 4 * blocks;
    using state = std::array<double, dim>;

    const PotentialSpec* p;
    cplx lambda;
    cplx k;
    double sa[blocks], sb[blocks];

    Variational(const PotentialSpec* pot, cplx lam) : p(pot), lambda(lam), k(std::sqrt(lam))
    {
        const double sigma = std::max(1.0, std::abs(k));
        for (int b = 0; b < blocks; ++b) {
            const int e = b / 2 + b % 2;
            sa[b] = std::pow(sigma, e);
            sb[b] = std::pow(sigma, e - 1);
        }
    }

    static cplx get(const state& s, int i) { return {s[2 * i], s[2 * i + 1]}; }
    static void put(state& s, int i, cplx v)
    {
        s[2 * i] = v.real();
        s[2 * i + 1] = v.imag();
    }
    cplx a(const state& s, int b) const { return get(s, 2 * b) / sa[b]; }
    cplx b(const state& s, int b) const { return get(s, 2 * b + 1) / sb[b]; }
    void set(state& s, int blk, cplx av, cplx bv) const
    {
        put(s, 2 * blk, av * sa[blk]);
        put(s, 2 * blk + 1, bv * sb[blk]);
    }

    // cos(kx) and sin(kx)/k, even in k.
    void free_pair(double x, cplx& c, cplx& s) const
    {
        const cplx z = k * x;
        c = std::cos(z);
        if (std::abs(z) < 1e-4) {
            const cplx z2 = z * z;
            s = x * (1.0 - z2 / 6.0 * (1.0 - z2 / 20.0));
        } else {
            s = std::sin(z) / k;
        }
    }

    void operator()(const state& st, state& ds, double x) const
    {
        const cplx qx = (*p)(x);
        cplx c, s;
        free_pair(x, c, s);
        cplx y[blocks];
        for (int blk = 0; blk < blocks; ++blk) {
            y[blk] = a(st, blk) * c + b(st, blk) * s;
            cplx f = qx * y[blk];
            // d/dlambda of y'' = (q - lambda) y adds -y; the second derivative adds -2 y_lambda.
            if (blk >= 2)
                f -= double(blk / 2) * y[blk - 2];
            set(ds, blk, -s * f, c * f);
        }
    }

    cplx value(const state& st, int blk, cplx c, cplx s) const { return a(st, blk) * c + b(st, blk) * s; }
    cplx slope(const state& st, int blk, cplx c, cplx s) const
    {
        return -lambda * a(st, blk) * s + b(st, blk) * c;
    }
};

template <int Order>
DiscriminantSample integrate_monodromy(const PotentialSpec& p, cplx lambda, double tol)
{
    using V = Variational<Order>;
    using state = typename V::state;
    if (!(tol > 0.0))
        throw ValidationError("ODE tolerance must be positive");
    if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()))
        throw ValidationError("spectral parameter must be finite");

    V sys(&p, lambda);
    state s{};
    sys.set(s, 0, 1.0, 0.0);  // theta
    sys.set(s, 1, 0.0, 1.0);  // phi

    // Highest frequency in the right-hand side: q times products of c and s.
    const double omega = two_pi * p.support_bound() + 2.0 * std::abs(sys.k.real()) + two_pi;
    int steps = 0;
    // With q = 0 only the forced lambda-derivatives need integrating.
    if (!p.is_zero() || Order >= 1) {
        const auto st = dop853::integrate(sys, s, 0.0, 1.0, tol, tol, 1.0 / omega, 2.0 / omega);
        steps = st.accepted;
    }

    cplx c1, s1;
    sys.free_pair(1.0, c1, s1);
    auto value = [&](int blk) { return sys.value(s, blk, c1, s1); };
    auto slope = [&](int blk) { return sys.slope(s, blk, c1, s1); };

    DiscriminantSample r;
    r.lambda = lambda;
    r.theta1 = value(0);
    r.dtheta1 = slope(0);
    r.phi1 = value(1);
    r.dphi1 = slope(1);
    r.F = r.dphi1 + r.theta1;
    // The lambda-derivatives carry their own (a, b) representation.
    if constexpr (Order >= 1)
        r.dF = value(2) + slope(3);
    if constexpr (Order >= 2)
        r.d2F = value(4) + slope(5);
    r.ode_tolerance = tol;
    r.wronskian_defect = std::abs(r.theta1 * r.dphi1 - r.dtheta1 * r.phi1 - 1.0);
    r.steps = steps;
    return r;
}

}  // namespace detail

// theta, phi with theta(0)=phi'(0)=1, theta'(0)=phi(0)=0; F = theta(1) + phi'(1).
inline DiscriminantSample monodromy(const PotentialSpec& p, cplx lambda, double tol = default_ode_tol)
{
    return detail::integrate_monodromy<1>(p, lambda, tol);
}

inline DiscriminantSample monodromy_with_curvature(const PotentialSpec& p, cplx lambda,
                                                   double tol = default_ode_tol)
{
    return detail::integrate_monodromy<2>(p, lambda, tol);
}

inline DiscriminantSample discriminant_value(const PotentialSpec& p, cplx lambda, double tol = default_ode_tol)
{
    return detail::integrate_monodromy<0>(p, lambda, tol);
}

enum class Multiplicity { simple, double_suspected };

inline const char* to_string(Multiplicity m) { return m == Multiplicity::simple ? "simple" : "double-suspected"; }

struct RootResult {
    cplx lambda;
    Multiplicity multiplicity_flag = Multiplicity::simple;
    double residual = 0.0;
    int iterations = 0;
    cplx dF, d2F;
    double separation = 0.0;  // distance to the second root of the local quadratic model
    double resolution = 0.0;  // smallest separation distinguishable from a double root
};

struct RootOptions {
    double tol = 1e-10;
    double ode_tol = default_ode_tol;
    int max_iter = 60;
};

// Noise level of F at a sample: the Wronskian defect plus accumulated round-off.
inline double discriminant_noise(const DiscriminantSample& s)
{
    const double roundoff = std::sqrt(double(s.steps) + 1.0) * std::numeric_limits<double>::epsilon();
    return 10.0 * (s.wronskian_defect + roundoff) * (1.0 + std::abs(s.F));
}

// Newton iteration on G = F - 2 cos t using the local quadratic model
// G + G' h + G'' h^2 / 2 = 0 (nearest root), which stays convergent at
// near-double roots.
inline RootResult solve_characteristic(const PotentialSpec& p, double t, cplx seed, const RootOptions& opt = {})
{
    if (!std::isfinite(seed.real()) || !std::isfinite(seed.imag()))
        throw ValidationError("seed must be finite");
    if (!(opt.tol > 0.0))
        throw ValidationError("root tolerance must be positive");
    const double target = 2.0 * std::cos(t);
    cplx lam = seed;
    DiscriminantSample s;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        s = monodromy_with_curvature(p, lam, opt.ode_tol);
        const cplx G = s.F - target;
        const cplx G1 = s.dF, G2 = s.d2F;
        const double floor = discriminant_noise(s);
        if (std::abs(G) <= floor)
            break;
        cplx h;
        const cplx disc = std::sqrt(G1 * G1 - 2.0 * G * G2);
        const cplx den = std::abs(G1 + disc) >= std::abs(G1 - disc) ? G1 + disc : G1 - disc;
        if (std::abs(den) == 0.0) {
            if (std::abs(G2) == 0.0)
                throw std::runtime_error("derivative breakdown in characteristic solve");
            h = -std::sqrt(-2.0 * G / G2);
        } else {
            h = -2.0 * G / den;
        }
        lam += h;
        if (std::abs(h) <= 1e-15 * (1.0 + std::abs(lam)) || (std::abs(G) <= 1e-2 * opt.tol && std::abs(h) <= 1e-12 * (1.0 + std::abs(lam)))) {
            s = monodromy_with_curvature(p, lam, opt.ode_tol);
            ++it;
            break;
        }
    }
    RootResult r;
    r.lambda = lam;
    r.iterations = it;
    r.residual = std::abs(s.F - target);
    r.dF = s.dF;
    r.d2F = s.d2F;
    if (!(r.residual < opt.tol))
        throw std::runtime_error("characteristic equation did not converge (residual " + std::to_string(r.residual) + ")");
    // A double root of G is only resolved to sqrt(noise / |G''|); a pair closer
    // than a few resolutions cannot be told apart from a double root.
    const double g2 = std::abs(s.d2F);
    const double noise = discriminant_noise(s);
    if (g2 > 0.0) {
        r.separation = 2.0 * std::abs(std::sqrt(s.dF * s.dF - 2.0 * (s.F - target) * s.d2F)) / g2;
        r.resolution = 2.0 * std::sqrt(2.0 * noise / g2);
        r.multiplicity_flag = r.separation < 2.0 * r.resolution ? Multiplicity::double_suspected : Multiplicity::simple;
        // The pair centre (F' = 0) is conditioned by the noise on F', not on F, so
        // report it for a suspected double root.
        if (r.multiplicity_flag == Multiplicity::double_suspected) {
            cplx c = lam;
            for (int k = 0; k < 4; ++k) {
                const auto sc = monodromy_with_curvature(p, c, opt.ode_tol);
                if (std::abs(sc.d2F) == 0.0)
                    break;
                const cplx step = -sc.dF / sc.d2F;
                if (std::abs(c + step - lam) > 2.0 * r.resolution)
                    break;
                c += step;
                if (std::abs(step) <= 1e-15 * (1.0 + std::abs(c)))
                    break;
            }
            if (c != lam) {
                const auto sc = monodromy_with_curvature(p, c, opt.ode_tol);
                if (std::abs(sc.F - target) < opt.tol) {
                    r.lambda = c;
                    r.residual = std::abs(sc.F - target);
                    r.dF = sc.dF;
                    r.d2F = sc.d2F;
                }
            }
        }
    } else {
        r.separation = std::numeric_limits<double>::infinity();
        r.multiplicity_flag = std::abs(s.dF) < noise ? Multiplicity::double_suspected : Multiplicity::simple;
    }
    return r;
}

struct WindingResult {
    int count = 0;
    double raw = 0.0;        // pre-rounding value
    double min_modulus = 0.0;  // min |F - 2 cos t| on the contour
};

// Argument principle on the circle |lambda - center| = radius, trapezoid rule.
inline WindingResult winding_number(const PotentialSpec& p, double t, cplx center, double radius,
                                    int quad_points = 256, double ode_tol = 1e-10)
{
    if (quad_points < 256)
        throw ValidationError("winding-number quadrature needs at least 256 points");
    if (!(radius > 0.0))
        throw ValidationError("radius must be positive");
    const double target = 2.0 * std::cos(t);
    cplx acc{};
    double minmod = std::numeric_limits<double>::infinity();
    double scale = 0.0;
    for (int k = 0; k < quad_points; ++k) {
        const double th = two_pi * k / quad_points;
        const cplx e{std::cos(th), std::sin(th)};
        const auto s = monodromy(p, center + radius * e, ode_tol);
        const cplx G = s.F - target;
        minmod = std::min(minmod, std::abs(G));
        scale = std::max(scale, std::abs(s.F) + 2.0);
        acc += s.dF / G * radius * e;
    }
    WindingResult w;
    w.raw = (acc / double(quad_points)).real();
    w.min_modulus = minmod;
    if (minmod < 1e-6 * scale)
        throw std::domain_error("contour too close to a root; perturb the radius");
    w.count = int(std::lround(w.raw));
    if (std::abs(w.raw - w.count) > 0.1 || std::abs((acc / double(quad_points)).imag()) > 0.1)
        throw std::domain_error("winding number not near an integer (" + std::to_string(w.raw) +
                                "); increase quadrature points");
    return w;
}

inline int count_roots_in_disk(const PotentialSpec& p, double t, cplx center, double radius, int quad_points = 256)
{
    return winding_number(p, t, center, radius, quad_points).count;
}

// Centre and radius of D(n,t,rho) = {|lambda - (2 pi n + t)^2| < 15 pi n rho}.
inline std::pair<cplx, double> pair_disk(int n, double t, double rho = default_rho)
{
    const double c = two_pi * n + t;
    return {cplx{c * c, 0.0}, 15.0 * pi * n * rho};
}

}  // namespace hill
