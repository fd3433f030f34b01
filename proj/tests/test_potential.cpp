#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "hill/potential.hpp"

using namespace hill;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
template <class F>
cplx simpson(F f, double a, double b, int n = 2000)
{
    const double h = (b - a) / n;
    cplx s = f(a) + f(b);
    for (int i = 1; i < n; ++i)
        s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

// Fourier coefficient of a 1-periodic function by the trapezoid rule on N points
// (exact for trigonometric polynomials of degree < N/2).
template <class F>
cplx dft_coeff(F f, long long n, int N = 512)
{
    cplx s{};
    for (int i = 0; i < N; ++i) {
        const double x = double(i) / N;
        s += f(x) * std::exp(cplx{0.0, -two_pi * double(n) * x});
    }
    return s / double(N);
}

PotentialSpec random_potential(std::mt19937& rng, int K)
{
    std::normal_distribution<double> g;
    std::vector<std::pair<int, cplx>> e;
    for (int n = -K; n <= K; ++n)
        if (n != 0)
            e.push_back({n, {g(rng), g(rng)}});
    return from_fourier(e, 1, "random");
}

}  // namespace

TEST(Potential, EmptyTableIsFree)
{
    const auto p = from_fourier({});
    EXPECT_TRUE(p.is_zero());
    EXPECT_EQ(p.label(), "free");
    EXPECT_EQ(p.support_bound(), 0);
    EXPECT_EQ(p[3], cplx{});
    EXPECT_EQ(p(0.3), cplx{});
}

TEST(Potential, GasymovSingleEntry)
{
    const auto p = from_fourier({{1, {1.0, 0.0}}});
    EXPECT_EQ(p[1], cplx(1.0, 0.0));
    for (int n = -5; n <= 5; ++n) {
        if (n != 1) {
            EXPECT_EQ(p[n], cplx{});
        }
    }
    const auto g = gasymov(1.0);
    EXPECT_EQ(g.coeffs(), p.coeffs());
}

TEST(Potential, DecayLawValues)
{
    const auto p = decay(1.0, 2.0, 64);
    EXPECT_DOUBLE_EQ(p[5].real(), 0.04);
    EXPECT_DOUBLE_EQ(p[-5].real(), 0.04);
    EXPECT_EQ(p[65], cplx{});
    EXPECT_EQ(p.support_bound(), 64);
    // beyond the table the attached law continues
    EXPECT_DOUBLE_EQ(p.extended(100).real(), 1e-4);
}

TEST(Potential, CosinePreset)
{
    const auto p = cosine(2, 1.0);
    EXPECT_EQ(p[2], cplx(1.0));
    EXPECT_EQ(p[-2], cplx(1.0));
    EXPECT_EQ(p[1], cplx{});
}

TEST(Potential, ValidationErrors)
{
    EXPECT_THROW(from_fourier({{1, 1.0}, {1, 2.0}}), ValidationError);
    EXPECT_THROW(from_fourier({{0, 1.0}}), ValidationError);
    EXPECT_NO_THROW(from_fourier({{0, 0.0}, {2, 1.0}}));
    EXPECT_THROW(from_fourier({{1, cplx(std::nan(""), 0.0)}}), ValidationError);
    EXPECT_THROW(parse_preset("decay:1:2"), ValidationError);
    EXPECT_THROW(parse_preset("bogus"), ValidationError);
}

TEST(Potential, PresetParsing)
{
    EXPECT_TRUE(parse_preset("free").is_zero());
    EXPECT_EQ(parse_preset("gasymov:2,1")[1], cplx(2.0, 1.0));
    EXPECT_EQ(parse_preset("cosine:3:0.5")[-3], cplx(0.5));
    EXPECT_DOUBLE_EQ(parse_preset("decay:1:2:64")[10].real(), 0.01);
}

TEST(Potential, FileFormat)
{
    std::istringstream in("# comment\n1 1 0\n-2 0.5 -0.25  # trailing\n\n");
    const auto p = read_potential(in);
    EXPECT_EQ(p[1], cplx(1.0, 0.0));
    EXPECT_EQ(p[-2], cplx(0.5, -0.25));
    std::istringstream bad("1 1\n");
    EXPECT_THROW(read_potential(bad), ValidationError);
}

TEST(Potential, DerivedCoefficientsFree)
{
    const auto d = derived_coeffs(free_potential(), 3);
    EXPECT_EQ(d.Q_n, cplx{});
    EXPECT_EQ(d.S_n, cplx{});
    EXPECT_EQ(d.p_2n, cplx{});
}

TEST(Potential, GasymovQ0ByQuadrature)
{
    const auto p = gasymov(1.0);
    // Q(x) = int_0^x q, then Q_0 = int_0^1 Q(x) dx, both by quadrature of the samples
    auto Q = [&](double x) { return simpson([&](double y) { return p(y); }, 0.0, x, 400); };
    const cplx q0 = simpson(Q, 0.0, 1.0, 400);
    EXPECT_NEAR(std::abs(q0 - cplx(0.0, 1.0 / two_pi)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(derived_coeffs(p, 0).Q_n - cplx(0.0, 1.0 / two_pi)), 0.0, 1e-15);
    EXPECT_NEAR(derived_coeffs(p, 0).Q_n.imag(), 0.15915494309189535, 1e-15);
}

TEST(Potential, DecayP10)
{
    EXPECT_NEAR(std::abs(derived_coeffs(decay(1.0, 2.0, 64), 5).p_2n - 0.01), 0.0, 1e-16);
}

TEST(Potential, QandSMatchQuadrature)
{
    std::mt19937 rng(7);
    const auto p = random_potential(rng, 3);
    // Q has a closed-form antiderivative per term: int_0^x e^{i2pi n y} dy
    auto Q = [&](double x) {
        cplx s{};
        for (const auto& [n, v] : p.coeffs())
            s += v * (std::exp(cplx{0.0, two_pi * n * x}) - 1.0) / cplx{0.0, two_pi * n};
        return s;
    };
    for (long long n = -7; n <= 7; ++n) {
        EXPECT_NEAR(std::abs(Q_coeff(p, n) - dft_coeff(Q, n, 64)), 0.0, 1e-12) << n;
        EXPECT_NEAR(std::abs(S_coeff(p, n) - dft_coeff([&](double x) { return Q(x) * Q(x); }, n, 64)), 0.0, 1e-11)
            << n;
    }
}

TEST(Potential, CoefficientReextraction)
{
    std::mt19937 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const auto p = random_potential(rng, 1 + trial * 3);
        for (long long n = -20; n <= 20; ++n)
            EXPECT_NEAR(std::abs(dft_coeff(p, n) - p[n]), 0.0, 1e-13) << trial << " " << n;
    }
    const auto d = decay(1.0, 2.0, 64);
    for (long long n : {-64, -7, 1, 5, 63})
        EXPECT_NEAR(std::abs(dft_coeff(d, n, 256) - d[n]), 0.0, 1e-13);
}

TEST(Conditions, DecayHoldsWithinRange)
{
    const auto p = decay(1.0, 2.0, 64);
    // c = 0.2 needs n >= 5 on the odd side: (2n+1)^{-2} > 0.2 n^{-2}
    const auto r = check_conditions(p, 5, 30, 0.1, 0.2);
    EXPECT_TRUE(r.overall);
    EXPECT_TRUE(r.similar.holds);
    EXPECT_TRUE(r.lower_bound.holds);
    EXPECT_TRUE(r.product_re.holds);
    for (const auto& row : r.rows)
        EXPECT_NEAR(row.margin_product_re, std::pow(2.0 * row.n, -4.0), 1e-18);
    EXPECT_TRUE(check_conditions(p, 1, 30, 0.1, 0.1).overall);
    const auto r1 = check_conditions(p, 1, 30, 0.1, 0.2);
    EXPECT_FALSE(r1.overall);
    EXPECT_FALSE(r1.odd_lower_bound.holds);
    EXPECT_TRUE(r1.lower_bound.holds);
}

TEST(Conditions, GasymovNotSimilar)
{
    const auto r = check_conditions(gasymov(1.0), 1, 30, 0.1, 0.2);
    EXPECT_FALSE(r.similar.holds);
    EXPECT_FALSE(r.overall);
    EXPECT_EQ(r.rows.size(), 30u);  // margins reported even when false
}

TEST(Conditions, ImaginaryProductsFailSectorTests)
{
    std::vector<std::pair<int, cplx>> e;
    for (int n = 1; n <= 64; ++n) {
        e.push_back({n, cplx(0.0, std::pow(n, -2.0))});
        e.push_back({-n, cplx(0.0, std::pow(n, -2.0))});
    }
    const auto r = check_conditions(from_fourier(e, 1), 1, 30, 0.1, 0.1);
    EXPECT_FALSE(r.product_re.holds);
    EXPECT_FALSE(r.product_im.holds);
    EXPECT_FALSE(r.overall);
    for (const auto& row : r.rows)
        EXPECT_NEAR((row.q_plus * row.q_minus).real(), -std::pow(2.0 * row.n, -4.0), 1e-18);
}

TEST(Conditions, InsufficientSupport)
{
    const PotentialSpec p({{1, 1.0}, {-1, 1.0}, {2, 0.5}, {-2, 0.5}}, 1, "cut", std::nullopt, true);
    EXPECT_THROW(check_conditions(p, 1, 5, 0.1, 0.1), InsufficientSupport);
    EXPECT_NO_THROW(check_conditions(decay(1.0, 2.0, 8), 1, 30, 0.1, 0.1));
    EXPECT_THROW(check_conditions(p, 0, 5, 0.1, 0.1), ValidationError);
    EXPECT_THROW(check_conditions(decay(1.0, 2.0, 64), 1, 5, -1.0, 0.1), ValidationError);
}

TEST(Conditions, AdjointDuality)
{
    std::mt19937 rng(3);
    std::vector<PotentialSpec> ps{decay(1.0, 2.0, 64), gasymov(1.0), decay(cplx(1.0, 0.5), 2.0, 64),
                                  random_potential(rng, 80)};
    for (const auto& p : ps)
        for (double c : {0.05, 0.2})
            EXPECT_EQ(check_conditions(p, 2, 30, 0.1, c).overall, check_conditions(p.adjoint(), 2, 30, 0.1, c).overall)
                << p.label();
}

TEST(Conditions, DeterministicReports)
{
    const auto p = decay(cplx(1.0, 0.3), 2.0, 64);
    const auto a = check_conditions(p, 1, 30, 0.1, 0.2);
    const auto b = check_conditions(p, 1, 30, 0.1, 0.2);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(std::memcmp(&a.rows[i].margin_lower, &b.rows[i].margin_lower, sizeof(double)), 0);
        EXPECT_EQ(std::memcmp(&a.rows[i].margin_product_im, &b.rows[i].margin_product_im, sizeof(double)), 0);
        EXPECT_EQ(a.rows[i].riesz_plus, b.rows[i].riesz_plus);
    }
    EXPECT_EQ(a.overall, b.overall);
    EXPECT_EQ(a.realized_c, b.realized_c);
}

TEST(Conditions, RieszQuantities)
{
    const auto p = cosine(1, 1.0);
    for (long long m : {-2, 2, 4})
        EXPECT_EQ(riesz_quantity(p, m), p[m] - S_coeff(p, m) + 2.0 * Q_coeff(p, 0) * Q_coeff(p, m));
}
