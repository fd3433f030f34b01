#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hill {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Default width of the near-endpoint regions |t| <= rho and |t - pi| <= rho.
inline constexpr double default_rho = 0.1;

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InsufficientSupport : std::domain_error {
    using std::domain_error::domain_error;
};

struct IntegrationError : std::runtime_error {
    double x;
    IntegrationError(const std::string& what, double where)
        : std::runtime_error(what), x(where) {}
};

struct ResonanceError : std::domain_error {
    long long partial_sum;
    ResonanceError(const std::string& what, long long s)
        : std::domain_error(what), partial_sum(s) {}
};

struct BudgetExceeded : std::length_error {
    using std::length_error::length_error;
};

struct NotCertified : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DefectiveEigenvalue : std::domain_error {
    using std::domain_error::domain_error;
};

// Principal branch has Re >= 0; on the negative real axis pick +i|z|^(1/2).
inline cplx sqrt_re_nonneg(cplx z)
{
    cplx r = std::sqrt(z);
    if (r.real() < 0.0 || (r.real() == 0.0 && r.imag() < 0.0))
        r = -r;
    return r;
}

inline double rel_err(cplx a, cplx b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

}  // namespace hill
