#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hill/common.hpp"
#include "hill/discriminant.hpp"
#include "hill/potential.hpp"

namespace hill {

inline constexpr int default_k_max = 3;
inline constexpr double resonance_floor_rel = 1e-6;
inline constexpr double alpha_denominator_floor = 1e-12;
inline constexpr double branch_ambiguity_rel = 1e-12;
inline constexpr double default_series_budget = 1e7;

enum class Side { even, odd };
enum class Region { near_zero, middle, near_pi };

inline const char* to_string(Side s) { return s == Side::even ? "even" : "odd"; }
inline const char* to_string(Region r)
{
    switch (r) {
    case Region::near_zero: return "near-zero";
    case Region::middle: return "middle";
    default: return "near-pi";
    }
}

inline Region region_of(double t, double rho = default_rho)
{
    if (t <= rho)
        return Region::near_zero;
    if (t >= pi - rho)
        return Region::near_pi;
    return Region::middle;
}

// The two interacting basis indices. On the even side these are n and -n; on the
// odd side n and -(n+1). "a" carries the frequency 2 pi n + t.
struct PairIndices {
    long long a, b;
};

inline PairIndices pair_indices(int n, Side side)
{
    return side == Side::even ? PairIndices{n, -static_cast<long long>(n)}
                              : PairIndices{n, -static_cast<long long>(n) - 1};
}

inline double basis_energy(long long m, double t)
{
    const double w = two_pi * double(m) + t;
    return w * w;
}

// Half the splitting of the unperturbed pair: 4 pi n t on the even side,
// 2 pi (2n+1)(t - pi) on the odd side.
inline double half_splitting(int n, double t, Side side)
{
    return side == Side::even ? 4.0 * pi * n * t : two_pi * (2.0 * n + 1.0) * (t - pi);
}

namespace detail {

// Path sums through the potential. Starting at index s0, each step moves to m'
// with weight q_{n_s} / (lambda - w(m')^2), never visiting s0 or the partner.
// g[k-1] holds the sums over paths of k steps, by endpoint.
struct PathTable {
    long long lo = 0;                       // index of entry 0
    std::vector<std::vector<cplx>> g;       // g[k-1][m - lo]
};

inline void check_budget(double& work, double budget)
{
    if (work > budget)
        throw BudgetExceeded("series work " + std::to_string(static_cast<long long>(work)) +
                             " exceeds budget " + std::to_string(static_cast<long long>(budget)));
}

// dir = +1 steps m -> m - n_s as in the series; dir = -1 steps m -> m + n_s,
// which is the eigenvector recursion (lambda - w(m)^2) c_m = sum q_{m-m'} c_{m'}.
inline PathTable path_sums(const PotentialSpec& p, long long s0, long long partner, cplx lambda, double t, int k_max,
                           double budget, double& work, int dir = +1)
{
    const long long K = p.support_bound();
    PathTable T;
    T.lo = s0 - static_cast<long long>(k_max) * K;
    const long long width = 2 * static_cast<long long>(k_max) * K + 1;
    const double floor = resonance_floor_rel * (1.0 + std::abs(lambda));
    std::vector<cplx> inv(width, cplx{});
    for (long long i = 0; i < width; ++i) {
        const long long m = T.lo + i;
        if (m == s0 || m == partner)
            continue;
        const cplx d = lambda - basis_energy(m, t);
        if (std::abs(d) < floor)
            throw ResonanceError("resonant denominator at partial sum " + std::to_string(s0 - m) +
                                     " (|lambda - (2 pi m + t)^2| below floor)",
                                 s0 - m);
        inv[i] = 1.0 / d;
    }
    const auto& coeffs = p.coeffs();
    std::vector<cplx> cur(width, cplx{});
    cur[s0 - T.lo] = 1.0;  // start: unit at s0 (not itself a path node)
    for (int k = 1; k <= k_max; ++k) {
        std::vector<cplx> nxt(width, cplx{});
        long long live = 0;
        for (long long i = 0; i < width; ++i) {
            if (cur[i] == cplx{})
                continue;
            ++live;
            const long long m = T.lo + i;
            for (const auto& [j, qj] : coeffs) {
                const long long m2 = m - dir * j;
                const long long i2 = m2 - T.lo;
                if (i2 < 0 || i2 >= width || inv[i2] == cplx{})
                    continue;
                nxt[i2] += qj * cur[i] * inv[i2];
            }
        }
        work += double(live) * double(coeffs.size());
        check_budget(work, budget);
        T.g.push_back(nxt);
        cur = std::move(nxt);
    }
    return T;
}

}  // namespace detail

// Terms of one series family. "Unprimed" families start at the pair index a
// and return to a (a_k) or jump to b (b_k); primed ones start at b.
struct SeriesTerms {
    std::vector<cplx> a, b;  // a[k-1], b[k-1]
};

inline SeriesTerms series_terms(const PotentialSpec& p, long long s0, long long partner, cplx lambda, double t,
                                int k_max, double budget, double& work)
{
    SeriesTerms out;
    if (p.is_zero()) {
        out.a.assign(k_max, cplx{});
        out.b.assign(k_max, cplx{});
        return out;
    }
    // after k steps the partial sum is s0 - m; a_k closes with q_{-P}, b_k with q_{s0-partner-P}
    const auto T = detail::path_sums(p, s0, partner, lambda, t, k_max, budget, work);
    for (int k = 1; k <= k_max; ++k) {
        cplx ak{}, bk{};
        const auto& g = T.g[k - 1];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] == cplx{})
                continue;
            const long long m = T.lo + static_cast<long long>(i);
            ak += g[i] * p[m - s0];
            bk += g[i] * p[m - partner];
        }
        out.a.push_back(ak);
        out.b.push_back(bk);
    }
    return out;
}

struct SeriesEvaluation {
    int n = 0;
    double t = 0.0;
    cplx lambda;
    int k_max = default_k_max;
    Side side = Side::even;
    cplx A, Aprime, B, Bprime, C, D, D1, D2;
    cplx q_ab, q_ba;  // q_{a-b} and q_{b-a}: q_{2n}, q_{-2n} (even) or q_{2n+1}, q_{-2n-1} (odd)
    double X = 0.0;   // half splitting
    std::vector<cplx> a, b, ap, bp;  // term table
    double work = 0.0;
};

inline SeriesEvaluation eval_series(const PotentialSpec& p, int n, cplx lambda, double t, int k_max = default_k_max,
                                    Side side = Side::even, double budget = default_series_budget)
{
    if (k_max < 1)
        throw ValidationError("k_max must be at least 1");
    if (side == Side::even && n < 1)
        throw ValidationError("even-side series need n >= 1");
    if (side == Side::odd && n < 0)
        throw ValidationError("odd-side series need n >= 0");
    SeriesEvaluation e;
    e.n = n;
    e.t = t;
    e.lambda = lambda;
    e.k_max = k_max;
    e.side = side;
    const auto [ia, ib] = pair_indices(n, side);
    // unprimed: intermediate index a - (n_1 + ... + n_s)
    auto un = series_terms(p, ia, ib, lambda, t, k_max, budget, e.work);
    // primed: b - (n_1 + ... + n_s)
    auto pr = series_terms(p, ib, ia, lambda, t, k_max, budget, e.work);
    e.a = un.a;
    e.b = un.b;
    e.ap = pr.a;
    e.bp = pr.b;
    for (int k = 0; k < k_max; ++k) {
        e.A += e.a[k];
        e.B += e.b[k];
        e.Aprime += e.ap[k];
        e.Bprime += e.bp[k];
    }
    e.q_ab = p[ia - ib];
    e.q_ba = p[ib - ia];
    e.X = half_splitting(n, t, side);
    e.C = 0.5 * (e.A - e.Aprime);
    e.D1 = 2.0 * e.X * e.C + e.C * e.C;
    e.D2 = e.q_ab * e.Bprime + e.q_ba * e.B + e.B * e.Bprime;
    e.D = e.X * e.X + e.q_ab * e.q_ba + e.D1 + e.D2;
    return e;
}

// Single term of a series family; which = a, b, a', b' on the even side, and
// the tilde versions (odd side) when tilde is set.
inline cplx series_term(const PotentialSpec& p, char which, bool primed, bool tilde, int k, int n, cplx lambda, double t,
                        double budget = default_series_budget)
{
    if (k < 1)
        throw ValidationError("term index must be at least 1");
    if (which != 'a' && which != 'b')
        throw ValidationError("series family must be a or b");
    const auto [ia, ib] = pair_indices(n, tilde ? Side::odd : Side::even);
    double work = 0.0;
    const auto T = primed ? series_terms(p, ib, ia, lambda, t, k, budget, work)
                          : series_terms(p, ia, ib, lambda, t, k, budget, work);
    return which == 'a' ? T.a[k - 1] : T.b[k - 1];
}

// Branch sign and unit position for (n, j, side). On the even side j = 2 puts
// the unit at 2 pi n + t and takes +sqrt(D); on the odd side j = 2 keeps the
// unit at 2 pi n + t, which is the -sqrt(D) branch because X < 0 there.
struct BranchChoice {
    int sigma;
    bool unit_at_a;
};

inline BranchChoice branch_choice(int j, Side side)
{
    if (j != 1 && j != 2)
        throw ValidationError("branch j must be 1 or 2");
    if (side == Side::even)
        return j == 2 ? BranchChoice{+1, true} : BranchChoice{-1, false};
    return j == 2 ? BranchChoice{-1, true} : BranchChoice{+1, false};
}

struct BranchValue {
    cplx lambda;
    cplx sqrtD;
    bool ambiguous = false;
};

inline BranchValue branch_value(const SeriesEvaluation& e, int j)
{
    const auto bc = branch_choice(j, e.side);
    const auto [ia, ib] = pair_indices(e.n, e.side);
    const double mid = 0.5 * (basis_energy(ia, e.t) + basis_energy(ib, e.t));
    BranchValue v;
    v.sqrtD = sqrt_re_nonneg(e.D);
    v.ambiguous = std::abs(v.sqrtD.real()) <= branch_ambiguity_rel * std::abs(v.sqrtD);
    v.lambda = mid + 0.5 * (e.A + e.Aprime) + double(bc.sigma) * v.sqrtD;
    return v;
}

inline Side side_for(double t, double rho = default_rho) { return t >= pi - rho ? Side::odd : Side::even; }

inline void check_t(double t)
{
    if (!(t >= 0.0 && t <= pi))
        throw ValidationError("t must lie in [0, pi]");
}

inline cplx first_order_eigenvalue(const PotentialSpec& p, int n, int j, double t, double rho = default_rho)
{
    check_t(t);
    if (n < 1)
        throw ValidationError("n must be at least 1");
    const Region r = region_of(t, rho);
    if (r == Region::middle) {
        const double w = j == 2 ? two_pi * n + t : two_pi * n - t;
        return w * w;
    }
    const Side side = r == Region::near_zero ? Side::even : Side::odd;
    const auto [ia, ib] = pair_indices(n, side);
    const double X = half_splitting(n, t, side);
    const double mid = 0.5 * (basis_energy(ia, t) + basis_energy(ib, t));
    const cplx D = X * X + p[ia - ib] * p[ib - ia];
    return mid + double(branch_choice(j, side).sigma) * sqrt_re_nonneg(D);
}

struct AsymptoticEigenpair {
    int n = 0, j = 2;
    double t = 0.0;
    int m = 1;
    int k_max = default_k_max;
    Region region = Region::near_zero;
    Side side = Side::even;
    cplx lambda;
    cplx alpha;
    std::map<long long, cplx> profile;  // basis index k -> coefficient of e^{i(2 pi k + t)x}
    std::vector<cplx> iterates;         // F_{n,j,1}, ..., F_{n,j,m}
    std::vector<double> steps;          // |F_{k+1} - F_k|
    bool branch_ambiguous = false;
    long long unit_index = 0, partner_index = 0;
    SeriesEvaluation last;              // series at F_{n,j,m-1} (empty for m = 1)
};

inline AsymptoticEigenpair fixed_point_eigenvalue(const PotentialSpec& p, int n, int j, double t, int m,
                                                  int k_max = default_k_max, double rho = default_rho,
                                                  std::optional<Side> forced_side = std::nullopt)
{
    check_t(t);
    if (m < 1)
        throw ValidationError("order m must be at least 1");
    if (n < 1)
        throw ValidationError("n must be at least 1");
    AsymptoticEigenpair r;
    r.n = n;
    r.j = j;
    r.t = t;
    r.m = m;
    r.k_max = k_max;
    r.region = region_of(t, rho);
    const auto bc = branch_choice(j, Side::even);
    if (r.region == Region::middle && !forced_side) {
        const cplx seed = first_order_eigenvalue(p, n, j, t, rho);
        const auto root = solve_characteristic(p, t, seed);
        r.iterates = {seed, root.lambda};
        r.steps = {std::abs(root.lambda - seed)};
        r.lambda = root.lambda;
        r.unit_index = bc.unit_at_a ? n : -n;
        r.partner_index = -r.unit_index;
        return r;
    }
    r.side = forced_side ? *forced_side : (r.region == Region::near_pi ? Side::odd : Side::even);
    const auto pi_ = pair_indices(n, r.side);
    const auto bcs = branch_choice(j, r.side);
    r.unit_index = bcs.unit_at_a ? pi_.a : pi_.b;
    r.partner_index = bcs.unit_at_a ? pi_.b : pi_.a;

    const double X = half_splitting(n, t, r.side);
    const double mid = 0.5 * (basis_energy(pi_.a, t) + basis_energy(pi_.b, t));
    const cplx D0 = X * X + p[pi_.a - pi_.b] * p[pi_.b - pi_.a];
    const cplx s0 = sqrt_re_nonneg(D0);
    r.branch_ambiguous = std::abs(s0.real()) <= branch_ambiguity_rel * std::abs(s0);
    cplx F = mid + double(bcs.sigma) * s0;
    r.iterates.push_back(F);
    for (int it = 1; it < m; ++it) {
        r.last = eval_series(p, n, F, t, k_max, r.side);
        const auto bv = branch_value(r.last, j);
        r.branch_ambiguous = bv.ambiguous;
        r.steps.push_back(std::abs(bv.lambda - F));
        F = bv.lambda;
        r.iterates.push_back(F);
    }
    r.lambda = F;
    return r;
}

// alpha from the closed 2x2 system at the series evaluated at lambda.
inline cplx branch_alpha(const SeriesEvaluation& e, int j)
{
    const auto bc = branch_choice(j, e.side);
    const cplx sq = double(bc.sigma) * sqrt_re_nonneg(e.D);
    if (bc.unit_at_a) {
        const cplx den = e.q_ab + e.B;
        if (std::abs(den) < alpha_denominator_floor)
            throw DefectiveEigenvalue("conditions violated at this index: q_{a-b} + B vanishes");
        return (-e.X - e.C + sq) / den;
    }
    const cplx den = e.q_ba + e.Bprime;
    if (std::abs(den) < alpha_denominator_floor)
        throw DefectiveEigenvalue("conditions violated at this index: q_{b-a} + B' vanishes");
    return (e.X + e.C + sq) / den;
}

inline AsymptoticEigenpair eigenfunction_profile(const PotentialSpec& p, int n, int j, double t, int m,
                                                 int k_max = default_k_max, double rho = default_rho,
                                                 std::optional<Side> forced_side = std::nullopt)
{
    auto r = fixed_point_eigenvalue(p, n, j, t, m, k_max, rho, forced_side);
    if (r.region == Region::middle && !forced_side)
        throw ValidationError("eigenfunction profile needs t near 0 or near pi");
    const auto e = eval_series(p, n, r.lambda, t, k_max, r.side);
    r.alpha = branch_alpha(e, j);
    r.profile[r.unit_index] = 1.0;
    r.profile[r.partner_index] = r.alpha;
    if (!p.is_zero()) {
        double work = 0.0;
        for (int which = 0; which < 2; ++which) {
            const long long s0 = which == 0 ? r.unit_index : r.partner_index;
            const long long other = which == 0 ? r.partner_index : r.unit_index;
            const cplx w = which == 0 ? cplx{1.0} : r.alpha;
            // Paths of length <= m from the unit (A*) and from the partner (B*).
            const auto T = detail::path_sums(p, s0, other, r.lambda, t, m, default_series_budget, work, -1);
            for (int k = 0; k < m; ++k)
                for (std::size_t i = 0; i < T.g[k].size(); ++i)
                    if (T.g[k][i] != cplx{})
                        r.profile[T.lo + static_cast<long long>(i)] += w * T.g[k][i];
        }
    }
    return r;
}

}  // namespace hill
