#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "mixedsde/errors.hpp"
#include "mixedsde/likelihood.hpp"
#include "mixedsde/transform.hpp"
#include "support/quadrature.hpp"

using namespace mixedsde;

TEST_CASE("sufficient statistics in closed-form cases") {
    const TimeGrid grid(1.0, 40);
    const double hurst = 0.7;
    const auto table = KernelTable::solve(grid, hurst);
    const auto panel = simulate_panel(grid, hurst, builtin_drift("zero"), DegenerateEffect{0.0}, 3, {61, 0});

    SUBCASE("zero base drift gives zero statistics") {
        const auto stats = compute_stats(panel, table, builtin_drift("zero"));
        for (int i = 0; i < stats.subjects(); ++i) {
            CHECK(stats.u[static_cast<std::size_t>(i)] == 0.0);
            CHECK(stats.v[static_cast<std::size_t>(i)] == 0.0);
        }
    }
    SUBCASE("constant base drift reduces to the bracket and the endpoint transform") {
        const double c = 1.7;
        const auto stats = compute_stats(panel, table, builtin_drift("constant:1.7"));
        const int n = grid.n_steps();
        for (int i = 0; i < stats.subjects(); ++i) {
            const auto z = transform_values(panel.paths[static_cast<std::size_t>(i)], table);
            CHECK(stats.v[static_cast<std::size_t>(i)] == doctest::Approx(c * c * table.w(n)).epsilon(1e-12));
            CHECK(stats.u[static_cast<std::size_t>(i)] ==
                  doctest::Approx(c * z[static_cast<std::size_t>(n)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conditional mean identity E[U] = psi E[V] under a degenerate effect") {
    const TimeGrid grid(1.0, 50);
    const double hurst = 0.7, psi = 0.8;
    const auto table = KernelTable::solve(grid, hurst);
    const auto drift = builtin_drift("identity");
    const int reps = 5000;
    double sum_diff = 0, sumsq_diff = 0;
    for (int r = 0; r < reps; ++r) {
        const auto panel =
            simulate_panel(grid, hurst, DriftSpec{drift}, DegenerateEffect{psi}, 1,
                           {static_cast<std::uint64_t>(2000 + r), 0});
        const auto [u, v] = subject_stats(panel.paths[0], table, drift);
        const double d = u - psi * v;
        sum_diff += d;
        sumsq_diff += d * d;
    }
    const double mean_diff = sum_diff / reps;
    const double se = std::sqrt((sumsq_diff / reps - mean_diff * mean_diff) / reps);
    CHECK(std::abs(mean_diff) < 4 * se);
    CHECK(se > 0);
}

TEST_CASE("log_lambda closed forms and edge cases") {
    SUBCASE("any proper mixing density integrates to one at u = v = 0") {
        CHECK(log_lambda(0, 0, GaussianEffect{0.7, 1.3}) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(log_lambda(0, 0, DegenerateEffect{2.0}) == 0.0);
        CHECK(log_lambda(0, 0, TabulatedDensity{{-1.0, 2.0}, {0.5, 0.5}}) == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("degenerate Gaussian mixing") {
        CHECK(log_lambda(2.0, 3.0, GaussianEffect{1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("point mass equals the fixed-effect log-likelihood ratio bit for bit") {
        CHECK(log_lambda(1.3, 2.1, DegenerateEffect{0.7}) == loglik_ratio_fixed_effect(1.3, 2.1, 0.7));
    }
    SUBCASE("negative V is rejected") { CHECK_THROWS_AS(log_lambda(1.0, -0.1, DegenerateEffect{0.0}), std::invalid_argument); }
}

TEST_CASE("Gaussian closed form matches the quadrature oracle") {
    SUBCASE("single spec fixture") {
        const double closed = log_lambda(1.3, 2.1, GaussianEffect{0.5, 0.8});
        const double quad = oracles::log_lambda_gauss_quadrature(1.3, 2.1, 0.5, 0.8);
        CHECK(std::abs(closed - quad) <= 1e-8 * std::max(1.0, std::abs(quad)));
    }
    SUBCASE("lattice sweep") {
        for (double u : {-2.0, -0.5, 1.0, 3.0, 10.0})
            for (double v : {0.0, 0.5, 2.0, 10.0, 50.0})
                for (double mu : {-1.0, 0.5})
                    for (double s2 : {0.0, 0.8}) {
                        const double closed = log_lambda(u, v, GaussianEffect{mu, s2});
                        const double reference = s2 == 0.0
                                                     ? mu * u - 0.5 * mu * mu * v
                                                     : oracles::log_lambda_gauss_quadrature(u, v, mu, s2);
                        CHECK(std::abs(closed - reference) <= 1e-8 * std::max(1.0, std::abs(reference)));
                    }
    }
}

TEST_CASE("log_lambda is monotone decreasing in V for positive mean and zero variance") {
    const double u = 2.0, mu = 1.5;
    double previous = log_lambda(u, 0.0, GaussianEffect{mu, 0.0});
    for (double v : {0.5, 1.0, 5.0, 20.0, 100.0}) {
        const double current = log_lambda(u, v, GaussianEffect{mu, 0.0});
        CHECK(current < previous);
        previous = current;
    }
}

TEST_CASE("log-domain evaluation survives huge V") {
    for (double v : {1e6, 1e9, 1e12}) {
        CHECK(std::isfinite(log_lambda(3.0, v, GaussianEffect{1.0, 2.0})));
        CHECK(std::isfinite(log_lambda(3.0, v, TabulatedDensity{{-1.0, 1.0}, {0.5, 0.5}})));
    }
    // with sigma2 > 0 the penalty grows only logarithmically
    CHECK(log_lambda(0.0, 1e12, GaussianEffect{0.0, 1.0}) == doctest::Approx(-0.5 * std::log(1e12)).epsilon(1e-9));
}

TEST_CASE("panel log-likelihood is additive") {
    SufficientStats one{{1.0}, {2.0}};
    SufficientStats two{{-0.5, 1.5}, {0.7, 3.0}};
    SufficientStats all{{1.0, -0.5, 1.5}, {2.0, 0.7, 3.0}};
    const GaussianEffect dist{0.3, 0.9};
    CHECK(panel_loglik(one, dist) == log_lambda(1.0, 2.0, dist));
    CHECK(panel_loglik(all, dist) == doctest::Approx(panel_loglik(one, dist) + panel_loglik(two, dist)).epsilon(1e-15));
    SufficientStats zeros{{0.0, 0.0}, {0.0, 0.0}};
    CHECK(panel_loglik(zeros, dist) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("fixed-effect ratio maximizer is u/v") {
    const double u = 1.8, v = 2.6;
    const double best = u / v;
    const double at_best = loglik_ratio_fixed_effect(u, v, best);
    for (double psi : {-1.0, 0.0, 0.5, best - 1e-3, best + 1e-3, 2.0})
        CHECK(loglik_ratio_fixed_effect(u, v, psi) <= at_best);
    CHECK(loglik_ratio_fixed_effect(u, v, 0.0) == 0.0);
}

TEST_CASE("tabulated Gauss-Hermite nodes reproduce a Gaussian mixing density") {
    const double mu = 0.4, s2 = 0.6;
    const auto tab = tabulate_density(
        [&](double psi) {
            return std::exp(-(psi - mu) * (psi - mu) / (2 * s2)) / std::sqrt(2 * M_PI * s2);
        },
        mu, std::sqrt(s2), 64);
    for (double u : {-1.0, 0.5, 2.0})
        for (double v : {0.0, 0.8, 4.0})
            CHECK(log_lambda(u, v, tab) == doctest::Approx(log_lambda(u, v, GaussianEffect{mu, s2})).epsilon(1e-9));
}

TEST_CASE("stats CSV round-trips exactly") {
    SufficientStats stats{{1.0 / 3.0, -2.7e-13, 4.0}, {0.125, 17.0 / 7.0, 0.0}};
    const std::string path = "test_stats_roundtrip.csv";
    write_stats_csv(path, stats);
    const auto back = read_stats_csv(path);
    CHECK(back.u == stats.u);
    CHECK(back.v == stats.v);
    std::remove(path.c_str());
}
