// Test-only oracles, kept independent of the library's numerical routes:
// - the kernel-equation residual uses Boost tanh-sinh / Gauss-Legendre
//   quadrature instead of the solver's closed-form product weights;
// - golden-section search provides an argmax route independent of the
//   closed-form estimators.
#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>

#include "mixedsde/kernel.hpp"

namespace oracles {

/// | g(s_i) + H(2H-1) Int_0^{t_k} |s_i - r|^{2H-2} g_hat(r) dr - 1 | where
/// g_hat is the piecewise-linear interpolant of the solved row k. Smooth
/// subintervals use 30-point Gauss-Legendre; the two subintervals touching
/// the singular point use tanh-sinh, which absorbs integrable endpoint
/// singularities.
inline double kernel_residual_fine(const mixedsde::KernelTable& table, int k, int i) {
    const auto& grid = table.grid();
    const double hurst = table.hurst();
    const double coef = hurst * (2 * hurst - 1);
    const double power = 2 * hurst - 2;
    const double s = grid.t(i);
    const auto row = table.row(k);

    boost::math::quadrature::tanh_sinh<double> singular(12);
    double integral = 0;
    for (int m = 0; m < k; ++m) {
        const double a = grid.t(m);
        const double b = grid.t(m + 1);
        const double width = b - a;
        const double ga = row[static_cast<std::size_t>(m)];
        const double gb = row[static_cast<std::size_t>(m) + 1];
        if (s == a) {
            // shift so the singular point is exactly 0; tanh-sinh node offsets
            // from a zero endpoint never collapse onto it
            auto f = [&](double tau) {
                const double lin = ga + (gb - ga) * tau / width;
                return coef * std::pow(tau, power) * lin;
            };
            integral += singular.integrate(f, 0.0, width, 1e-12);
        } else if (s == b) {
            auto f = [&](double tau) {
                const double lin = gb + (ga - gb) * tau / width;
                return coef * std::pow(tau, power) * lin;
            };
            integral += singular.integrate(f, 0.0, width, 1e-12);
        } else {
            auto f = [&](double r) {
                const double lin = ga + (gb - ga) * (r - a) / width;
                return coef * std::pow(std::abs(s - r), power) * lin;
            };
            integral += boost::math::quadrature::gauss<double, 30>::integrate(f, a, b);
        }
    }
    return std::abs(row[static_cast<std::size_t>(i)] + integral - 1.0);
}

/// Golden-section maximizer of a unimodal function on [lo, hi].
inline double golden_section_argmax(const std::function<double(double)>& f, double lo, double hi, double xtol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace oracles
