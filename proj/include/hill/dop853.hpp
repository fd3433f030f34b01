#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "hill/common.hpp"

// Dormand-Prince 8(5,3) embedded pair with the Hairer-Wanner step control.
// Its error estimate stays honest for nearly quadrature-like right-hand sides,
// where the Fehlberg 7(8) estimate degenerates.
namespace hill::dop853 {

namespace coeff {
    inline constexpr double c[12] = {0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0};
    inline constexpr double a[13][12] = {
        {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0},
        {0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0},
        {0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0},
        {-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0},
        {2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0},
        {0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259},
    };
    inline constexpr double e3[13] = {-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082, 0.0};
    inline constexpr double e5[13] = {0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294, 0.0};
}  // namespace coeff

struct Stats {
    int accepted = 0;
    int rejected = 0;
};

// Integrates y' = f(x, y) from x0 to x1 in place; f(y, dydx, x). h_max bounds the
// step so oscillatory content cannot alias past the error estimate.
template <std::size_t N, class Rhs>
Stats integrate(const Rhs& f, std::array<double, N>& y, double x0, double x1, double atol, double rtol,
                double h0, double h_max, int max_steps = 1000000)
{
    using vec = std::array<double, N>;
    constexpr int stages = 12;
    std::array<vec, stages + 1> k;
    vec ytmp, ynew;
    Stats st;
    double x = x0;
    double h = std::min({h0, h_max, x1 - x0});
    f(y, k[0], x);
    bool rejected_last = false;
    while (x < x1) {
        if (st.accepted + st.rejected > max_steps)
            throw IntegrationError("step budget exhausted", x);
        if (h < 1e-14 * std::max(1.0, std::abs(x)))
            throw IntegrationError("step size underflow", x);
        if (x + h > x1)
            h = x1 - x;
        for (int s = 1; s <= stages; ++s) {
            for (std::size_t i = 0; i < N; ++i) {
                double acc = 0.0;
                for (int j = 0; j < s; ++j)
                    acc += coeff::a[s][j] * k[j][i];
                ytmp[i] = y[i] + h * acc;
            }
            if (s < stages)
                f(ytmp, k[s], x + coeff::c[s] * h);
            else
                ynew = ytmp;  // row 12 holds the eighth-order weights
        }
        double e5 = 0.0, e3 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double r5 = 0.0, r3 = 0.0;
            for (int j = 0; j < stages; ++j) {
                r5 += coeff::e5[j] * k[j][i];
                r3 += coeff::e3[j] * k[j][i];
            }
            const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            e5 += (r5 / sc) * (r5 / sc);
            e3 += (r3 / sc) * (r3 / sc);
        }
        double err = 0.0;
        if (e5 > 0.0 || e3 > 0.0)
            err = std::abs(h) * e5 / std::sqrt((e5 + 0.01 * e3) * double(N));
        if (err <= 1.0) {
            x = (x1 - (x + h) < 1e-15) ? x1 : x + h;
            y = ynew;
            f(y, k[0], x);
            ++st.accepted;
            double fac = err == 0.0 ? 10.0 : std::min(10.0, 0.9 * std::pow(err, -1.0 / 8.0));
            if (rejected_last)
                fac = std::min(1.0, fac);
            h = std::min(h * fac, h_max);
            rejected_last = false;
        } else {
            ++st.rejected;
            h *= std::max(0.2, 0.9 * std::pow(err, -1.0 / 8.0));
            rejected_last = true;
        }
    }
    return st;
}

}  // namespace hill::dop853
