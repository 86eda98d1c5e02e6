// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavy Monte Carlo sections share one kernel table and one
// large-sample limits run; every tolerance is pinned here, in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mixedsde/csv.hpp"
#include "mixedsde/estimate.hpp"
#include "mixedsde/kernel.hpp"
#include "mixedsde/likelihood.hpp"
#include "mixedsde/mcstudy.hpp"
#include "mixedsde/parallel.hpp"
#include "mixedsde/sim.hpp"
#include "mixedsde/stats.hpp"
#include "mixedsde/transform.hpp"
#include "support/oracles.hpp"
#include "support/quadrature.hpp"

using namespace mixedsde;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool condition, const std::string& msg) {
        if (!condition && ok) {
            ok = false;
            detail = msg;
        }
    }
};

int g_threads = default_thread_count();

// the Monte Carlo model shared by criteria 6-8
struct CltModel {
    TimeGrid grid{1.0, 200};
    double hurst = 0.7;
    LinearMultiplierDrift drift = builtin_drift("invquad");
    GaussianEffect effect{1.0, 0.25};
    double sigma0_sq = 0.25;  // known to the estimator
    std::uint64_t seed = 20240807;
};

const CltModel& model() {
    static CltModel m;
    return m;
}

const KernelTable& shared_table() {
    static KernelTable table = [] {
        KernelSolverConfig cfg;
        cfg.threads = g_threads;
        return KernelTable::solve(model().grid, model().hurst, cfg);
    }();
    return table;
}

const LimitsEstimate& shared_limits() {
    static LimitsEstimate limits = [] {
        StudyConfig sc;
        sc.grid = model().grid;
        sc.hurst = model().hurst;
        sc.drift = model().drift;
        sc.effect = model().effect;
        sc.estimator.kind = EstimatorKind::MuKnownVar;
        sc.estimator.sigma0_sq = model().sigma0_sq;
        sc.seed = model().seed;
        sc.threads = g_threads;
        return estimate_limits(sc, 50000, shared_table());
    }();
    return limits;
}

// per-replicate estimates of the CLT model at subject-count prefixes
struct ReplicateEstimates {
    std::vector<double> mu_by_n;  // one entry per requested prefix
    double se_full = 0;           // standard error at the largest prefix
};

std::vector<ReplicateEstimates> run_replicates(int replicates, const std::vector<int>& subject_prefixes,
                                               std::uint64_t seed_offset) {
    const auto& m = model();
    const int n_max = subject_prefixes.back();
    std::vector<ReplicateEstimates> out(static_cast<std::size_t>(replicates));
    parallel_for(static_cast<std::size_t>(replicates), g_threads, [&](std::size_t r) {
        const StreamKey key{m.seed + seed_offset, r + 1};
        const auto panel = simulate_panel(m.grid, m.hurst, DriftSpec{m.drift}, m.effect, n_max, key);
        const auto stats = compute_stats(panel, shared_table(), m.drift);
        ReplicateEstimates est;
        for (int n : subject_prefixes) {
            SufficientStats prefix;
            prefix.u.assign(stats.u.begin(), stats.u.begin() + n);
            prefix.v.assign(stats.v.begin(), stats.v.begin() + n);
            est.mu_by_n.push_back(mle_mu_known_var(prefix, m.sigma0_sq));
            if (n == n_max) est.se_full = mu_std_err(prefix, est.mu_by_n.back(), m.sigma0_sq);
        }
        out[r] = est;
    });
    return out;
}

// ---------------------------------------------------------------------------

Check criterion1_kernel() {
    Check c;
    {
        const TimeGrid grid(1.0, 200);
        const auto table = KernelTable::solve(grid, 0.5);
        double worst_g = 0, worst_w = 0;
        for (int k = 1; k <= 200; ++k) {
            for (int j = 0; j <= k; ++j) worst_g = std::max(worst_g, std::abs(table.g(k, j) - 0.5));
            worst_w = std::max(worst_w, std::abs(table.w(k) - grid.t(k) / 2));
        }
        c.expect(worst_g <= 1e-8, "H=0.5 g deviates by " + format_g17(worst_g));
        c.expect(worst_w <= 1e-8, "H=0.5 w deviates by " + format_g17(worst_w));
    }
    for (double hurst : {0.55, 0.6, 0.7, 0.8, 0.9}) {
        const TimeGrid grid(1.0, 200);
        KernelSolverConfig cfg;
        cfg.threads = g_threads;
        const auto table = KernelTable::solve(grid, hurst, cfg);
        c.expect(table.residual_norm() <= 1e-8,
                 "H=" + format_g17(hurst) + " residual " + format_g17(table.residual_norm()));
        double worst = 0;
        for (int k : {100, 200})
            for (int i = 1; i < k; ++i) worst = std::max(worst, oracles::kernel_residual_fine(table, k, i));
        c.expect(worst <= 1e-6, "H=" + format_g17(hurst) + " fine-quadrature residual " + format_g17(worst));
    }
    return c;
}

Check criterion2_simulation_law() {
    Check c;
    const TimeGrid grid(1.0, 32);
    const int paths = 20000;
    const int nodes = grid.n_steps();
    for (double hurst : {0.6, 0.75}) {
        const FbmIncrementFactor factor(grid, hurst);

        // fBm level covariance, all node pairs
        std::vector<double> sum(static_cast<std::size_t>(nodes * nodes), 0.0);
        std::vector<double> sumsq(static_cast<std::size_t>(nodes * nodes), 0.0);
        std::vector<double> mix_sum(static_cast<std::size_t>(nodes), 0.0);
        std::vector<double> mix_sq(static_cast<std::size_t>(nodes), 0.0);
        std::vector<double> mix_q4(static_cast<std::size_t>(nodes), 0.0);
        std::mutex merge;
        parallel_for(static_cast<std::size_t>(g_threads), g_threads, [&](std::size_t worker) {
            std::vector<double> lsum(sum.size(), 0.0), lsumsq(sum.size(), 0.0);
            std::vector<double> lmix(static_cast<std::size_t>(nodes), 0.0), lmix2(static_cast<std::size_t>(nodes), 0.0),
                lmix4(static_cast<std::size_t>(nodes), 0.0);
            for (int m = static_cast<int>(worker); m < paths; m += g_threads) {
                const auto fbm = simulate_fbm(factor, {91, 0}, static_cast<std::uint64_t>(m) + 1);
                for (int i = 0; i < nodes; ++i)
                    for (int j = 0; j < nodes; ++j) {
                        const double prod = fbm.values[static_cast<std::size_t>(i) + 1] *
                                            fbm.values[static_cast<std::size_t>(j) + 1];
                        lsum[static_cast<std::size_t>(i * nodes + j)] += prod;
                        lsumsq[static_cast<std::size_t>(i * nodes + j)] += prod * prod;
                    }
                const auto mixed = simulate_mixed_fbm(factor, {92, 0}, static_cast<std::uint64_t>(m) + 1);
                for (int i = 0; i < nodes; ++i) {
                    const double x = mixed.values[static_cast<std::size_t>(i) + 1];
                    lmix[static_cast<std::size_t>(i)] += x;
                    lmix2[static_cast<std::size_t>(i)] += x * x;
                    lmix4[static_cast<std::size_t>(i)] += x * x * x * x;
                }
            }
            std::lock_guard<std::mutex> lock(merge);
            for (std::size_t k = 0; k < sum.size(); ++k) {
                sum[k] += lsum[k];
                sumsq[k] += lsumsq[k];
            }
            for (std::size_t k = 0; k < mix_sum.size(); ++k) {
                mix_sum[k] += lmix[k];
                mix_sq[k] += lmix2[k];
                mix_q4[k] += lmix4[k];
            }
        });

        double worst_z = 0;
        for (int i = 0; i < nodes; ++i)
            for (int j = 0; j < nodes; ++j) {
                const std::size_t k = static_cast<std::size_t>(i * nodes + j);
                const double est = sum[k] / paths;
                const double se = std::sqrt(std::max(sumsq[k] / paths - est * est, 1e-300) / paths);
                const double truth = fbm_covariance(grid.t(i + 1), grid.t(j + 1), hurst);
                worst_z = std::max(worst_z, std::abs(est - truth) / se);
            }
        c.expect(worst_z < 4, "H=" + format_g17(hurst) + " fBm covariance max |z| = " + format_g17(worst_z));

        double worst_mix = 0;
        for (int i = 0; i < nodes; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const double m1 = mix_sum[k] / paths;
            const double var = mix_sq[k] / paths - m1 * m1;
            const double m4 = mix_q4[k] / paths;
            const double se = std::sqrt(std::max(m4 - var * var, 1e-300) / paths);
            const double t = grid.t(i + 1);
            const double truth = t + std::pow(t, 2 * hurst);
            worst_mix = std::max(worst_mix, std::abs(var - truth) / se);
        }
        c.expect(worst_mix < 4, "H=" + format_g17(hurst) + " mixed variance max |z| = " + format_g17(worst_mix));
    }
    return c;
}

Check criterion3_martingale() {
    Check c;
    const auto& m = model();
    const auto& table = shared_table();
    const int n = m.grid.n_steps();
    const int paths = 5000;

    std::vector<double> z_end(static_cast<std::size_t>(paths));
    std::vector<double> s1(static_cast<std::size_t>(n), 0.0), s2(static_cast<std::size_t>(n), 0.0);
    std::vector<double> cross(static_cast<std::size_t>(n) - 1, 0.0), cross_sq(static_cast<std::size_t>(n) - 1, 0.0);
    std::mutex merge;
    const FbmIncrementFactor factor(m.grid, m.hurst);
    parallel_for(static_cast<std::size_t>(g_threads), g_threads, [&](std::size_t worker) {
        std::vector<double> ls1(s1.size(), 0.0), ls2(s2.size(), 0.0), lcross(cross.size(), 0.0),
            lcross_sq(cross.size(), 0.0);
        for (int p = static_cast<int>(worker); p < paths; p += g_threads) {
            const auto driver = simulate_mixed_fbm(factor, {93, 0}, static_cast<std::uint64_t>(p) + 1);
            const auto z = transform_values(driver.values, table);
            z_end[static_cast<std::size_t>(p)] = z.back();
            double prev = 0;
            for (int k = 1; k <= n; ++k) {
                const double dz = z[static_cast<std::size_t>(k)] - z[static_cast<std::size_t>(k) - 1];
                ls1[static_cast<std::size_t>(k) - 1] += dz;
                ls2[static_cast<std::size_t>(k) - 1] += dz * dz;
                if (k > 1) {
                    lcross[static_cast<std::size_t>(k) - 2] += prev * dz;
                    lcross_sq[static_cast<std::size_t>(k) - 2] += prev * dz * prev * dz;
                }
                prev = dz;
            }
        }
        std::lock_guard<std::mutex> lock(merge);
        for (std::size_t k = 0; k < s1.size(); ++k) {
            s1[k] += ls1[k];
            s2[k] += ls2[k];
        }
        for (std::size_t k = 0; k < cross.size(); ++k) {
            cross[k] += lcross[k];
            cross_sq[k] += lcross_sq[k];
        }
    });

    const double mean_z = mean(z_end);
    double var_z = 0, m4 = 0;
    for (double z : z_end) {
        var_z += (z - mean_z) * (z - mean_z);
        m4 += std::pow(z - mean_z, 4);
    }
    var_z /= paths;
    m4 /= paths;
    const double se_var = std::sqrt((m4 - var_z * var_z) / paths);
    c.expect(std::abs(var_z - table.w(n)) < 4 * se_var,
             "Var(Z_T)=" + format_g17(var_z) + " vs w(T)=" + format_g17(table.w(n)) + " (se " +
                 format_g17(se_var) + ")");

    double worst_corr = 0;
    for (int k = 0; k + 1 < n; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const double ma = s1[ks] / paths, mb = s1[ks + 1] / paths;
        const double va = s2[ks] / paths - ma * ma, vb = s2[ks + 1] / paths - mb * mb;
        const double cov = cross[ks] / paths - ma * mb;
        worst_corr = std::max(worst_corr, std::abs(cov / std::sqrt(va * vb)));
    }
    c.expect(worst_corr < 4.0 / std::sqrt(static_cast<double>(paths)),
             "max lag-1 increment correlation " + format_g17(worst_corr));
    return c;
}

Check criterion4_likelihood_identity() {
    Check c;
    double worst = 0;
    for (double u : {-2.0, -0.5, 1.0, 3.0, 10.0})
        for (double v : {0.0, 0.5, 2.0, 10.0, 50.0})
            for (double mu : {-1.0, 0.5})
                for (double s2 : {0.0, 0.8}) {
                    const double closed = log_lambda(u, v, GaussianEffect{mu, s2});
                    const double reference = s2 == 0.0 ? mu * u - 0.5 * mu * mu * v
                                                       : oracles::log_lambda_gauss_quadrature(u, v, mu, s2);
                    worst = std::max(worst, std::abs(closed - reference) / std::max(1.0, std::abs(reference)));
                }
    c.expect(worst <= 1e-8, "worst relative log-likelihood gap " + format_g17(worst));
    return c;
}

Check criterion5_estimator_identity() {
    Check c;
    // 20 random fixtures: closed form vs golden-section argmax
    std::mt19937_64 eng(1234);
    std::normal_distribution<double> normal;
    std::gamma_distribution<double> gamma(3.0, 0.6);
    for (int f = 0; f < 20; ++f) {
        SufficientStats stats;
        const int n = 20 + 15 * (f % 5);
        const double mu_true = -1.0 + 0.2 * f;
        const double s2 = 0.1 + 0.25 * (f % 4);
        for (int i = 0; i < n; ++i) {
            const double v = gamma(eng);
            const double psi = mu_true + std::sqrt(s2) * normal(eng);
            stats.v.push_back(v);
            stats.u.push_back(psi * v + std::sqrt(v) * normal(eng));
        }
        const double closed = mle_mu_known_var(stats, s2);
        const double numeric = oracles::golden_section_argmax(
            [&](double mu) { return panel_loglik(stats, GaussianEffect{mu, s2}); }, closed - 3.0, closed + 3.0, 1e-9);
        c.expect(std::abs(closed - numeric) <= 1e-6,
                 "fixture " + std::to_string(f) + " closed-form vs argmax gap " + format_g17(closed - numeric));

        const auto joint = mle_joint(stats);
        if (!joint.at_boundary) {
            c.expect(std::abs(joint.equation_residuals[0]) <= 1e-8,
                     "fixture " + std::to_string(f) + " mean-equation residual");
            c.expect(std::abs(joint.equation_residuals[1]) <= 1e-8,
                     "fixture " + std::to_string(f) + " variance-equation residual");
        }
    }

    // grid dominance on a simulated panel, N=500, true (mu, s2) = (1, 0.5)
    const auto& m = model();
    const auto panel = simulate_panel(m.grid, m.hurst, DriftSpec{m.drift}, GaussianEffect{1.0, 0.5}, 500,
                                      {m.seed + 5, 1});
    const auto stats = compute_stats(panel, shared_table(), m.drift);
    const auto joint = mle_joint(stats);
    c.expect(std::abs(joint.equation_residuals[0]) <= 1e-8, "panel mean-equation residual");
    if (!joint.at_boundary) c.expect(std::abs(joint.equation_residuals[1]) <= 1e-8, "panel variance-equation residual");
    double best_grid = -1e300;
    for (int i = 0; i <= 100; ++i)
        for (int j = 0; j <= 100; ++j)
            best_grid = std::max(best_grid, panel_loglik(stats, GaussianEffect{2.0 * i / 100, 2.0 * j / 100}));
    c.expect(best_grid <= joint.loglik_at_max + 1e-6,
             "grid search found a better point by " + format_g17(best_grid - joint.loglik_at_max));
    return c;
}

Check criterion6_slln() {
    Check c;
    const auto& limits = shared_limits();
    const auto estimates = run_replicates(200, {50, 100, 200}, 0);

    std::vector<double> gaps, se_means;
    for (std::size_t which = 0; which < 3; ++which) {
        std::vector<double> mu;
        for (const auto& est : estimates) mu.push_back(est.mu_by_n[which]);
        gaps.push_back(std::abs(mean(mu) - limits.gamma0));
        se_means.push_back(std_dev(mu) / std::sqrt(static_cast<double>(mu.size())));
    }
    c.expect(gaps[1] < gaps[0], "gap did not shrink from N=50 to N=100: " + format_g17(gaps[0]) + " -> " +
                                    format_g17(gaps[1]));
    c.expect(gaps[2] < gaps[1], "gap did not shrink from N=100 to N=200: " + format_g17(gaps[1]) + " -> " +
                                    format_g17(gaps[2]));
    const double combined = std::hypot(se_means[2], limits.gamma0_se);
    c.expect(gaps[2] <= 3 * combined,
             "final gap " + format_g17(gaps[2]) + " exceeds 3 combined se " + format_g17(combined));
    return c;
}

struct CltRun {
    std::vector<double> mu;
    std::vector<double> se;
};

const CltRun& clt_run() {
    static CltRun run = [] {
        CltRun r;
        const auto estimates = run_replicates(500, {200}, 1000);
        for (const auto& est : estimates) {
            r.mu.push_back(est.mu_by_n[0]);
            r.se.push_back(est.se_full);
        }
        return r;
    }();
    return run;
}

Check criterion7_clt() {
    Check c;
    const auto& limits = shared_limits();
    const auto& run = clt_run();
    const auto ks = normality_test(run.mu);
    c.expect(ks.p_value >= 0.01, "KS normality p = " + format_g17(ks.p_value));

    const double scaled_var = 200.0 * variance(run.mu);  // Var of sqrt(N) mu_hat
    const double predicted = limits.var_num / (limits.beta0 * limits.beta0);
    c.expect(std::abs(scaled_var - predicted) <= 0.15 * predicted,
             "N Var(mu_hat) = " + format_g17(scaled_var) + " vs predicted " + format_g17(predicted));
    return c;
}

Check criterion8_coverage() {
    Check c;
    const auto& limits = shared_limits();
    const auto& run = clt_run();
    int covered = 0;
    for (std::size_t r = 0; r < run.mu.size(); ++r)
        covered += std::abs(run.mu[r] - limits.gamma0) <= 1.959963984540054 * run.se[r];
    const double rate = static_cast<double>(covered) / static_cast<double>(run.mu.size());
    c.expect(rate >= 0.92 && rate <= 0.98, "coverage " + format_g17(rate) + " outside [0.92, 0.98]");
    return c;
}

Check criterion9_determinism() {
    Check c;
    const fs::path base = fs::temp_directory_path() / "msde_acceptance_det";
    fs::remove_all(base);

    StudyConfig cfg;
    cfg.grid = TimeGrid(1.0, 32);
    cfg.hurst = 0.7;
    cfg.drift = builtin_drift("invquad");
    cfg.effect = GaussianEffect{1.0, 0.25};
    cfg.subjects = 10;
    cfg.replicates = 8;
    cfg.seed = 31337;
    cfg.estimator.kind = EstimatorKind::MuKnownVar;
    cfg.estimator.sigma0_sq = 0.25;
    cfg.limits_subjects = 500;
    cfg.out_dir = (base / "t1").string();
    cfg.threads = 1;
    run_study(cfg);
    StudyConfig cfg4 = cfg;
    cfg4.out_dir = (base / "t4").string();
    cfg4.threads = 4;
    run_study(cfg4);
    for (const char* name : {"replicates.csv", "summary.json", "hist.csv", "qq.csv"}) {
        const auto a = read_text_file((fs::path(cfg.out_dir) / name).string());
        const auto b = read_text_file((fs::path(cfg4.out_dir) / name).string());
        c.expect(a == b, std::string(name) + " differs across thread counts");
    }

    PanelOptions opt1;
    opt1.threads = 1;
    PanelOptions opt3;
    opt3.threads = 3;
    const auto p1 = simulate_panel(cfg.grid, cfg.hurst, cfg.drift, cfg.effect, 7, {1, 0}, opt1);
    const auto p2 = simulate_panel(cfg.grid, cfg.hurst, cfg.drift, cfg.effect, 7, {1, 0}, opt3);
    write_panel_csv((base / "p1.csv").string(), p1);
    write_panel_csv((base / "p2.csv").string(), p2);
    c.expect(read_text_file((base / "p1.csv").string()) == read_text_file((base / "p2.csv").string()),
             "panel CSV differs across thread counts");
    fs::remove_all(base);
    return c;
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "kernel correctness", 60, criterion1_kernel},
        {2, "simulation law", 120, criterion2_simulation_law},
        {3, "martingale property", 180, criterion3_martingale},
        {4, "likelihood identity", 10, criterion4_likelihood_identity},
        {5, "estimator identity", 60, criterion5_estimator_identity},
        {6, "SLLN", 1800, criterion6_slln},
        {7, "CLT", 2700, criterion7_clt},
        {8, "Fisher coverage", 2700, criterion8_coverage},
        {9, "determinism", 300, criterion9_determinism},
    };

    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), criterion.id) == selected.end())
            continue;
        const auto start = std::chrono::steady_clock::now();
        Check check;
        try {
            check = criterion.run();
        } catch (const std::exception& e) {
            check.ok = false;
            check.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count() /
            1000.0;
        if (seconds > criterion.budget_seconds) {
            check.ok = false;
            check.detail = "runtime " + format_g17(seconds) + " s exceeds budget";
        }
        std::printf("criterion %d %s  %s (%.1f s)%s%s\n", criterion.id, check.ok ? "PASS" : "FAIL", criterion.name,
                    seconds, check.detail.empty() ? "" : " -- ", check.detail.c_str());
        std::fflush(stdout);
        failures += !check.ok;
    }
    return failures == 0 ? 0 : 1;
}
