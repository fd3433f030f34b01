#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hill/common.hpp"

namespace hill {

// q_n = amplitude * |n|^(-sigma), used for condition checks beyond the table.
struct DecayLaw {
    cplx amplitude{1.0, 0.0};
    double sigma = 2.0;
    cplx at(int n) const { return n == 0 ? cplx{} : amplitude * std::pow(std::abs(double(n)), -sigma); }
};

// Finite Fourier table of a 1-periodic potential, q(x) = sum_n q_n e^{i 2 pi n x}.
class PotentialSpec {
public:
    PotentialSpec() = default;

    PotentialSpec(std::map<int, cplx> table, int smoothness, std::string name,
                  std::optional<DecayLaw> law = std::nullopt, bool is_truncation = false)
        : coeffs_(std::move(table)), smoothness_(smoothness), label_(std::move(name)),
          decay_(law), truncated_(is_truncation)
    {
        for (auto it = coeffs_.begin(); it != coeffs_.end();) {
            if (!std::isfinite(it->second.real()) || !std::isfinite(it->second.imag()))
                throw ValidationError("non-finite coefficient at frequency " + std::to_string(it->first));
            if (it->second == cplx{}) {
                it = coeffs_.erase(it);
                continue;
            }
            if (it->first == 0)
                throw ValidationError("q_0 must vanish");
            ++it;
        }
        if (smoothness_ < 0)
            throw ValidationError("smoothness index must be nonnegative");
        support_ = 0;
        for (const auto& [n, v] : coeffs_)
            support_ = std::max(support_, std::abs(n));
        pos_.assign(support_ + 1, cplx{});
        neg_.assign(support_ + 1, cplx{});
        for (const auto& [n, v] : coeffs_)
            (n > 0 ? pos_[n] : neg_[-n]) = v;
    }

    const std::map<int, cplx>& coeffs() const { return coeffs_; }
    int support_bound() const { return support_; }
    int smoothness_s() const { return smoothness_; }
    const std::string& label() const { return label_; }
    const std::optional<DecayLaw>& decay_law() const { return decay_; }
    bool truncated() const { return truncated_; }
    bool is_zero() const { return coeffs_.empty(); }

    cplx operator[](long long n) const
    {
        if (n == 0 || std::llabs(n) > support_)
            return {};
        return n > 0 ? pos_[n] : neg_[-n];
    }

    // Table value inside the support, decay law outside it when one is attached.
    cplx extended(long long n) const
    {
        if (std::llabs(n) > support_ && decay_)
            return decay_->at(int(n));
        return (*this)[n];
    }

    // Horner evaluation in z = e^{i 2 pi x}; x is real so conj(z) = 1/z.
    cplx operator()(double x) const
    {
        if (support_ == 0)
            return {};
        const cplx z{std::cos(two_pi * x), std::sin(two_pi * x)};
        const cplx zb = std::conj(z);
        cplx p{}, m{};
        for (int k = support_; k >= 1; --k) {
            p = (p + pos_[k]) * z;
            m = (m + neg_[k]) * zb;
        }
        return p + m;
    }

    // Coefficients of the adjoint potential conj(q): n -> conj(q_{-n}).
    PotentialSpec adjoint() const
    {
        std::map<int, cplx> t;
        for (const auto& [n, v] : coeffs_)
            t[-n] = std::conj(v);
        std::optional<DecayLaw> law;
        if (decay_)
            law = DecayLaw{std::conj(decay_->amplitude), decay_->sigma};
        return PotentialSpec(std::move(t), smoothness_, label_ + "*", law, truncated_);
    }

private:
    std::map<int, cplx> coeffs_;
    int support_ = 0;
    int smoothness_ = 0;
    std::string label_;
    std::optional<DecayLaw> decay_;
    bool truncated_ = false;
    std::vector<cplx> pos_, neg_;
};

inline PotentialSpec from_fourier(const std::vector<std::pair<int, cplx>>& entries, int smoothness_s = 0,
                                  std::string label = "fourier")
{
    std::map<int, cplx> t;
    for (const auto& [n, v] : entries) {
        if (!t.emplace(n, v).second)
            throw ValidationError("duplicate frequency " + std::to_string(n));
        if (n == 0 && v != cplx{})
            throw ValidationError("q_0 must vanish");
    }
    PotentialSpec p(std::move(t), smoothness_s, label);
    if (p.is_zero())
        return PotentialSpec({}, smoothness_s, "free");
    return p;
}

inline PotentialSpec free_potential() { return PotentialSpec({}, 0, "free"); }

inline PotentialSpec gasymov(cplx c)
{
    if (c == cplx{})
        throw ValidationError("gasymov amplitude must be nonzero");
    return PotentialSpec({{1, c}}, 0, "gasymov");
}

inline PotentialSpec cosine(int k, cplx a)
{
    if (k <= 0)
        throw ValidationError("cosine frequency must be positive");
    if (a == cplx{})
        throw ValidationError("cosine amplitude must be nonzero");
    return PotentialSpec({{k, a}, {-k, a}}, 0, "cosine");
}

inline PotentialSpec decay(cplx a, double sigma, int K, int smoothness_s = 1)
{
    if (K <= 0)
        throw ValidationError("decay cutoff must be positive");
    if (a == cplx{})
        throw ValidationError("decay amplitude must be nonzero");
    DecayLaw law{a, sigma};
    std::map<int, cplx> t;
    for (int n = 1; n <= K; ++n) {
        t[n] = law.at(n);
        t[-n] = law.at(-n);
    }
    return PotentialSpec(std::move(t), smoothness_s, "decay", law, true);
}

// Accepts "re" or "re,im".
inline cplx parse_complex(const std::string& s)
{
    std::string txt = s;
    std::replace(txt.begin(), txt.end(), ',', ' ');
    std::istringstream in(txt);
    double re = 0.0, im = 0.0;
    if (!(in >> re))
        throw ValidationError("cannot parse complex value '" + s + "'");
    if (!(in >> im))
        im = 0.0;
    std::string rest;
    if (in >> rest)
        throw ValidationError("trailing characters in complex value '" + s + "'");
    return {re, im};
}

// Lines "n re im"; '#' starts a comment.
inline PotentialSpec read_potential(std::istream& in, int smoothness_s = 0, std::string label = "file")
{
    std::vector<std::pair<int, cplx>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        std::istringstream ls(line);
        long long n;
        if (!(ls >> n))
            continue;
        double re = 0.0, im = 0.0;
        if (!(ls >> re >> im))
            throw ValidationError("line " + std::to_string(lineno) + ": expected 'n re im'");
        std::string extra;
        if (ls >> extra)
            throw ValidationError("line " + std::to_string(lineno) + ": trailing data");
        entries.emplace_back(int(n), cplx{re, im});
    }
    return from_fourier(entries, smoothness_s, std::move(label));
}

inline PotentialSpec load_potential(const std::string& path, int smoothness_s = 0)
{
    std::ifstream f(path);
    if (!f)
        throw ValidationError("cannot open potential file " + path);
    return read_potential(f, smoothness_s, path);
}

// free | gasymov:c | cosine:k:a | decay:a:sigma:K | file:PATH
inline PotentialSpec parse_preset(const std::string& spec, int smoothness_s = 1)
{
    std::vector<std::string> f;
    std::string kind = spec, rest;
    if (auto c = spec.find(':'); c != std::string::npos) {
        kind = spec.substr(0, c);
        rest = spec.substr(c + 1);
    }
    if (kind == "file")
        return load_potential(rest, smoothness_s);
    std::istringstream in(rest);
    for (std::string tok; std::getline(in, tok, ':');)
        f.push_back(tok);
    auto need = [&](std::size_t k) {
        if (f.size() != k)
            throw ValidationError("preset '" + spec + "' expects " + std::to_string(k) + " parameters");
    };
    if (kind == "free") {
        need(0);
        return free_potential();
    }
    if (kind == "gasymov") {
        need(1);
        return gasymov(parse_complex(f[0]));
    }
    if (kind == "cosine") {
        need(2);
        return cosine(std::stoi(f[0]), parse_complex(f[1]));
    }
    if (kind == "decay") {
        need(3);
        return decay(parse_complex(f[0]), std::stod(f[1]), std::stoi(f[2]), smoothness_s);
    }
    throw ValidationError("unknown potential preset '" + kind + "'");
}

struct DerivedCoeffs {
    cplx Q_n;   // Fourier coefficient of Q(x) = int_0^x q
    cplx S_n;   // Fourier coefficient of S = Q^2
    cplx p_2n;  // principal root of q_{2n} q_{-2n}
};

// Q has no linear part because q_0 = 0, so it is the trigonometric polynomial
// Q_0 + sum_{m != 0} q_m/(i 2 pi m) e^{i 2 pi m x}, with Q_0 = sum_m i q_m/(2 pi m).
inline cplx Q_coeff(const PotentialSpec& p, long long n)
{
    const cplx I{0.0, 1.0};
    if (n != 0)
        return p[n] / (I * two_pi * double(n));
    cplx s{};
    for (const auto& [m, v] : p.coeffs())
        s += I * v / (two_pi * double(m));
    return s;
}

inline cplx S_coeff(const PotentialSpec& p, long long n)
{
    if (p.is_zero())
        return {};
    const long long K = p.support_bound();
    cplx s{};
    for (long long k = -K; k <= K; ++k) {
        if (std::llabs(n - k) > K)
            continue;
        s += Q_coeff(p, k) * Q_coeff(p, n - k);
    }
    return s;
}

inline DerivedCoeffs derived_coeffs(const PotentialSpec& p, long long n)
{
    return {Q_coeff(p, n), S_coeff(p, n), std::sqrt(p[2 * n] * p[-2 * n])};
}

// q_m - S_m + 2 Q_0 Q_m, the quantity entering the Riesz-basis criteria.
inline cplx riesz_quantity(const PotentialSpec& p, long long m)
{
    return p[m] - S_coeff(p, m) + 2.0 * Q_coeff(p, 0) * Q_coeff(p, m);
}

struct Verdict {
    bool holds = false;
    double margin = 0.0;  // worst signed margin over the range; >= 0 when the verdict holds
};

struct ConditionRow {
    int n = 0;
    cplx q_plus, q_minus;        // q_{2n}, q_{-2n}
    cplx q_odd_plus, q_odd_minus;  // q_{2n+1}, q_{-2n-1}
    double log_ratio = 0.0;             // |ln n / (n q_{2n})|
    double ratio = 0.0;          // max(|q_{2n}/q_{-2n}|, reciprocal)
    double ratio_odd = 0.0;
    double margin_lower = 0.0, margin_product_re = 0.0, margin_product_im = 0.0;
    double margin_odd_lower = 0.0, margin_odd_product_re = 0.0, margin_odd_product_im = 0.0;
    bool ok_lower = false, ok_product_re = false, ok_product_im = false, ok_odd_lower = false, ok_odd_product_re = false, ok_odd_product_im = false;
    cplx riesz_plus, riesz_minus;  // q_{+-2n} - S_{+-2n} + 2 Q_0 Q_{+-2n}
    double margin_riesz_plus = 0.0, margin_riesz_minus = 0.0;
};

struct ConditionReport {
    int n_min = 0, n_max = 0;
    double eps_probe = 0.0, c_probe = 0.0, similarity_bound = 10.0;
    std::vector<ConditionRow> rows;
    bool smoothness_periodic = false;  // q^{(k)}(0) = q^{(k)}(1), k < s
    Verdict log_ratio;                        // monotone decrease of |ln n/(n q_{2n})|
    double log_ratio_slope = 0.0;             // log-log slope of the same quantity
    Verdict similar, lower_bound, product_re, product_im, product_sector;
    Verdict odd_lower_bound, odd_product_re, odd_product_im, odd_product_sector;
    Verdict riesz_plus_bound, riesz_minus_bound;
    bool riesz_similar = false;  // the two Riesz quantities are similar
    double realized_c = 0.0;    // min |q_{+-2n}| n^{s+1}
    double realized_eps = 0.0;  // min |Im q_{2n}q_{-2n}| / |q_{2n}q_{-2n}|
    double max_ratio = 0.0, max_ratio_odd = 0.0;
    bool overall = false;
};

namespace detail {

inline double sim_ratio(cplx a, cplx b)
{
    const double x = std::abs(a), y = std::abs(b);
    if (x == 0.0 && y == 0.0)
        return std::numeric_limits<double>::infinity();
    if (x == 0.0 || y == 0.0)
        return std::numeric_limits<double>::infinity();
    return std::max(x / y, y / x);
}

inline void fold(Verdict& v, bool ok, double margin, bool first)
{
    if (first) {
        v = {ok, margin};
        return;
    }
    v.holds = v.holds && ok;
    v.margin = std::min(v.margin, margin);
}

}  // namespace detail

inline ConditionReport check_conditions(const PotentialSpec& p, int n_min, int n_max, double eps_probe,
                                        double c_probe, double similarity_bound = 10.0)
{
    if (n_min < 1 || n_max < n_min)
        throw ValidationError("condition range must satisfy 1 <= n_min <= n_max");
    if (!(eps_probe > 0.0) || !(c_probe > 0.0) || !(similarity_bound >= 1.0))
        throw ValidationError("probe constants must be positive and the similarity bound at least 1");
    if (p.truncated() && !p.decay_law() && 2LL * n_max + 1 > p.support_bound())
        throw InsufficientSupport("insufficient support: range reaches frequency " +
                                  std::to_string(2 * n_max + 1) + " beyond the truncated table (K = " +
                                  std::to_string(p.support_bound()) + ") and no decay law is attached");

    ConditionReport r;
    r.n_min = n_min;
    r.n_max = n_max;
    r.eps_probe = eps_probe;
    r.c_probe = c_probe;
    r.similarity_bound = similarity_bound;
    const double s = p.smoothness_s();
    r.smoothness_periodic = !p.decay_law() || p.decay_law()->sigma > s + 1.0;

    const cplx Q0 = Q_coeff(p, 0);
    auto Qx = [&](long long m) {
        return std::llabs(m) > p.support_bound() ? p.extended(m) / (cplx{0, 1} * two_pi * double(m)) : Q_coeff(p, m);
    };
    auto riesz = [&](long long m) {
        const cplx S = std::llabs(m) > 2LL * p.support_bound() ? cplx{} : S_coeff(p, m);
        return p.extended(m) - S + 2.0 * Q0 * Qx(m);
    };

    double realized_c = std::numeric_limits<double>::infinity();
    double realized_eps = std::numeric_limits<double>::infinity();
    std::vector<double> logn, log_log_ratio;
    double prev_log_ratio = -1.0;
    bool log_ratio_mono = true;
    for (int n = n_min; n <= n_max; ++n) {
        ConditionRow row;
        row.n = n;
        row.q_plus = p.extended(2LL * n);
        row.q_minus = p.extended(-2LL * n);
        row.q_odd_plus = p.extended(2LL * n + 1);
        row.q_odd_minus = p.extended(-2LL * n - 1);
        const bool first = n == n_min;
        const double lower = c_probe * std::pow(double(n), -s - 1.0);

        row.log_ratio = std::abs(row.q_plus) == 0.0 ? std::numeric_limits<double>::infinity()
                                             : std::log(double(n)) / (double(n) * std::abs(row.q_plus));
        if (n >= 2) {
            if (prev_log_ratio >= 0.0 && !(row.log_ratio <= prev_log_ratio))
                log_ratio_mono = false;
            prev_log_ratio = row.log_ratio;
            if (std::isfinite(row.log_ratio)) {
                logn.push_back(std::log(double(n)));
                log_log_ratio.push_back(std::log(row.log_ratio));
            }
        }

        row.ratio = detail::sim_ratio(row.q_plus, row.q_minus);
        row.ratio_odd = detail::sim_ratio(row.q_odd_plus, row.q_odd_minus);

        const double amin = std::min(std::abs(row.q_plus), std::abs(row.q_minus));
        row.margin_lower = amin - lower;
        row.ok_lower = amin > lower;
        realized_c = std::min(realized_c, amin * std::pow(double(n), s + 1.0));

        const cplx prod = row.q_plus * row.q_minus;
        row.margin_product_re = prod.real();
        row.ok_product_re = prod.real() >= 0.0 && prod != cplx{};
        row.margin_product_im = std::abs(prod.imag()) - eps_probe * std::abs(prod);
        row.ok_product_im = row.margin_product_im >= 0.0 && prod != cplx{};
        if (prod != cplx{})
            realized_eps = std::min(realized_eps, std::abs(prod.imag()) / std::abs(prod));
        else
            realized_eps = 0.0;

        const double amin_odd = std::min(std::abs(row.q_odd_plus), std::abs(row.q_odd_minus));
        row.margin_odd_lower = std::min(amin_odd - lower, similarity_bound - row.ratio_odd);
        row.ok_odd_lower = amin_odd > lower && row.ratio_odd <= similarity_bound;
        const cplx prod_odd = row.q_odd_plus * row.q_odd_minus;
        row.margin_odd_product_re = prod_odd.real();
        row.ok_odd_product_re = prod_odd.real() >= 0.0 && prod_odd != cplx{};
        row.margin_odd_product_im = std::abs(prod_odd.imag()) - eps_probe * std::abs(prod_odd);
        row.ok_odd_product_im = row.margin_odd_product_im >= 0.0 && prod_odd != cplx{};

        row.riesz_plus = riesz(2LL * n);
        row.riesz_minus = riesz(-2LL * n);
        const double rlow = eps_probe * std::pow(double(n), -s - 2.0);
        row.margin_riesz_plus = std::abs(row.riesz_plus) - rlow;
        row.margin_riesz_minus = std::abs(row.riesz_minus) - rlow;

        detail::fold(r.similar, row.ratio <= similarity_bound, similarity_bound - row.ratio, first);
        detail::fold(r.lower_bound, row.ok_lower, row.margin_lower, first);
        detail::fold(r.product_re, row.ok_product_re, row.margin_product_re, first);
        detail::fold(r.product_im, row.ok_product_im, row.margin_product_im, first);
        detail::fold(r.product_sector, row.ok_product_re || row.ok_product_im, std::max(row.margin_product_re, row.margin_product_im), first);
        detail::fold(r.odd_lower_bound, row.ok_odd_lower, row.margin_odd_lower, first);
        detail::fold(r.odd_product_re, row.ok_odd_product_re, row.margin_odd_product_re, first);
        detail::fold(r.odd_product_im, row.ok_odd_product_im, row.margin_odd_product_im, first);
        detail::fold(r.odd_product_sector, row.ok_odd_product_re || row.ok_odd_product_im, std::max(row.margin_odd_product_re, row.margin_odd_product_im), first);
        detail::fold(r.riesz_plus_bound, row.margin_riesz_plus >= 0.0, row.margin_riesz_plus, first);
        detail::fold(r.riesz_minus_bound, row.margin_riesz_minus >= 0.0, row.margin_riesz_minus, first);
        r.max_ratio = std::max(r.max_ratio, row.ratio);
        r.max_ratio_odd = std::max(r.max_ratio_odd, row.ratio_odd);
        r.rows.push_back(row);
    }

    // Least-squares slope of log log_ratio against log n.
    if (logn.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < logn.size(); ++i) {
            mx += logn[i];
            my += log_log_ratio[i];
        }
        mx /= double(logn.size());
        my /= double(logn.size());
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < logn.size(); ++i) {
            sxy += (logn[i] - mx) * (log_log_ratio[i] - my);
            sxx += (logn[i] - mx) * (logn[i] - mx);
        }
        r.log_ratio_slope = sxy / sxx;
    }
    const bool log_ratio_finite = logn.size() + 1 >= std::size_t(n_max - std::max(n_min, 2) + 2);
    r.log_ratio = {log_ratio_mono && log_ratio_finite && r.log_ratio_slope < 0.0, -r.log_ratio_slope};

    double rr = 0.0;
    for (const auto& row : r.rows)
        rr = std::max(rr, detail::sim_ratio(row.riesz_plus, row.riesz_minus));
    r.riesz_similar = rr <= similarity_bound;

    r.realized_c = realized_c;
    r.realized_eps = std::isfinite(realized_eps) ? realized_eps : 0.0;
    r.overall = r.similar.holds && r.lower_bound.holds && r.product_sector.holds && r.odd_lower_bound.holds && r.odd_product_sector.holds;
    return r;
}

}  // namespace hill
