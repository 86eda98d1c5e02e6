#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixedsde/estimate.hpp"
#include "mixedsde/kernel.hpp"
#include "mixedsde/sim.hpp"
#include "mixedsde/stats.hpp"

namespace mixedsde {

enum class EstimatorKind { MuKnownVar, Joint, Direct };

struct EstimatorChoice {
    EstimatorKind kind = EstimatorKind::MuKnownVar;
    double sigma0_sq = 0.0;  // the known effect variance for MuKnownVar
    JointConfig joint;
    DirectConfig direct;
    double direct_mu_lo = -10.0;  // Gaussian-family box for Direct
    double direct_mu_hi = 10.0;
    double direct_s2_max = 100.0;
};

struct StudyConfig {
    TimeGrid grid{1.0, 100};
    double hurst = 0.7;
    DriftSpec drift = LinearMultiplierDrift{"zero", [](double) { return 0.0; }};
    EffectDistribution effect = GaussianEffect{0.0, 1.0};
    int subjects = 50;       // N per replicate
    int replicates = 100;    // R
    std::uint64_t seed = 0;
    EstimatorChoice estimator;
    int limits_subjects = 20000;  // M for the SLLN/CLT limit estimates
    std::string out_dir;          // empty: no artifacts written
    int threads = 1;
    KernelSolverConfig solver;
    double x0 = 0.0;
};

struct ReplicateRow {
    int replicate = 0;
    double mu_hat = 0;
    double sigma2_hat = 0;
    double std_err = 0;
    double loglik = 0;
    bool converged = false;
    bool failed = false;
    std::string error;
};

/// Monte Carlo estimates of the SLLN/CLT limit quantities with jackknife
/// standard errors: gamma0 = E[U/(1+s2 V)] / E[V/(1+s2 V)],
/// beta0 = E[V/(1+s2 V)], var_num = Var[U/(1+s2 V)].
struct LimitsEstimate {
    int subjects = 0;
    double sigma0_sq = 0;
    double gamma0 = 0, gamma0_se = 0;
    double beta0 = 0, beta0_se = 0;
    double var_num = 0, var_num_se = 0;
};

struct McSummary {
    int replicates = 0;
    int failures = 0;
    double mean_mu = 0;
    double var_mu = 0;
    double skew_mu = 0;
    double kurt_mu = 0;
    double bias_vs_gamma0 = 0;   // mean_mu - gamma0_hat (the reference center)
    double bias_vs_true_mu = 0;  // mean_mu - E[phi] of the generating distribution
    double ks_stat = 0;          // of studentized estimates; NaN when R < 100
    double ks_p = 0;
};

struct McReport {
    std::vector<ReplicateRow> rows;
    McSummary summary;
    LimitsEstimate limits;
    bool failed_study = false;  // > 5% replicate failures
};

/// Effect variance used in the limit weights: the known variance the
/// estimator plugs in for MuKnownVar, the generating Gaussian variance
/// otherwise (0 for a degenerate effect).
double limits_sigma0_sq(const StudyConfig& config);

/// Mean of the generating effect distribution.
double effect_mean(const EffectDistribution& dist);

/// Summary statistics over the replicate table; invariant under row order.
McSummary summarize_rows(const std::vector<ReplicateRow>& rows, const LimitsEstimate& limits, double true_mu);

LimitsEstimate estimate_limits(const StudyConfig& config, int subject_count, const KernelTable& table);

/// Runs R independent replicates: simulate a panel, reduce to sufficient
/// statistics, estimate. Per-replicate rows are appended to
/// `<out_dir>/replicates.csv` in replicate order as blocks finish, so an
/// interrupted study resumes from the last complete row (`resume`).
/// Replicate failures are recorded, not fatal; the study itself fails when
/// more than 5% of replicates fail. `stop_after` (tests only) stops early
/// after that many replicates without writing summary artifacts.
McReport run_study(const StudyConfig& config, bool resume = false, int stop_after = -1,
                   const KernelTable* shared_table = nullptr);

/// Re-reads study artifacts and revalidates the stored summary against one
/// recomputed from the per-replicate table; throws DataError on mismatch.
/// `true_mu` is the generating effect mean (effect_mean of the study config).
McReport load_report(const std::string& dir, double true_mu);

/// Studentizes the samples (sample mean, sd with divisor n-1) and applies the
/// one-sample Kolmogorov-Smirnov test against N(0,1) with the asymptotic
/// p-value. Requires at least 100 samples; throws NumericalError on a
/// degenerate (zero variance) sample.
KsResult normality_test(std::span<const double> samples);

}  // namespace mixedsde
