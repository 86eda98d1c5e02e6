#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixedsde/likelihood.hpp"

namespace mixedsde {

enum class EstimateMethod { ClosedForm, JointSystem, DirectMax };

struct EstimationResult {
    std::vector<double> theta_hat;
    double loglik_at_max = 0;
    EstimateMethod method = EstimateMethod::ClosedForm;
    int iterations = 0;
    bool converged = false;
    bool at_boundary = false;            // sigma^2 pinned at 0 or sigma2_max
    bool sigma2_unidentifiable = false;  // near-constant V across subjects
    std::array<double, 2> equation_residuals{0, 0};  // mean and variance equations (joint only)
    std::optional<Eigen::MatrixXd> fisher;
    std::optional<std::vector<double>> std_err;
};

/// Closed-form MLE of the effect mean with known effect variance:
/// mu_hat = sum_i u_i/(1 + s2 v_i) / sum_i v_i/(1 + s2 v_i).
/// Throws NoInformationError when every V_i is zero.
double mle_mu_known_var(const SufficientStats& stats, double sigma0_sq);

/// Standard error 1/sqrt(sum_i score_i^2) from the empirical Fisher
/// information of the known-variance likelihood at mu.
double mu_std_err(const SufficientStats& stats, double mu, double sigma0_sq);

struct JointConfig {
    double residual_tol = 1e-8;  // both estimating equations
    int max_iter = 200;          // outer alternation sweeps
    double sigma2_max = 100.0;
    double cv_epsilon = 1e-6;  // coefficient of variation below which V is flagged constant
};

/// Joint (mu, sigma0^2) MLE for Gaussian mixing. Alternates the closed-form
/// mu update with bracketing/bisection root finding of the variance equation
/// over [0, sigma2_max]; a Nelder-Mead maximization of the panel
/// log-likelihood is the fallback when alternation stalls. A variance
/// equation with no interior root yields a flagged boundary solution.
EstimationResult mle_joint(const SufficientStats& stats, std::optional<std::pair<double, double>> init = {},
                           const JointConfig& config = {});

/// A parametric mixing family theta -> EffectDistribution with box bounds.
struct EffectFamily {
    int dim = 0;
    std::function<EffectDistribution(std::span<const double>)> make;
    std::vector<double> lower;
    std::vector<double> upper;
};

/// Gaussian family theta = (mu, sigma0^2); mu in [mu_lo, mu_hi], variance in [0, s2_max].
EffectFamily gaussian_family(double mu_lo, double mu_hi, double s2_max);

struct DirectConfig {
    double xtol = 1e-9;       // simplex diameter
    double ftol = 1e-12;      // function value spread across the simplex
    int max_iter = 5000;
    double grad_tol = 1e-6;   // projected-gradient check backing the converged flag
};

/// Derivative-free MLE over the family box: Nelder-Mead simplex with
/// candidate points clamped into the box; ties within 1e-12 in log-likelihood
/// resolve toward the smaller last coordinate (the variance slot, by
/// convention). `converged` additionally requires the central-difference
/// projected gradient of the panel log-likelihood to be below grad_tol.
EstimationResult mle_direct(const SufficientStats& stats, const EffectFamily& family, std::span<const double> init,
                            const DirectConfig& config = {});

/// One fresh simulated subject's (U, V), keyed by subject index.
using SubjectSampler = std::function<std::pair<double, double>(std::uint64_t subject)>;

struct FisherResult {
    Eigen::MatrixXd info;
    bool psd_ok = true;
    int replicates = 0;
};

/// Monte Carlo Fisher information E[score score^T] at theta over `replicates`
/// fresh subjects, scores by central finite differences of log lambda with
/// relative step `rel_step`. Symmetric positive semidefinite by construction
/// up to roundoff; psd_ok flags eigenvalues below -1e-10 * max |eig|.
FisherResult fisher_information(const EffectFamily& family, std::span<const double> theta,
                                const SubjectSampler& sampler, int replicates, double rel_step = 1e-5);

// ---------------------------------------------------------------------------
// Generic Nelder-Mead used by mle_direct and the joint fallback.

struct NelderMeadResult {
    std::vector<double> x;
    double fmin = 0;
    int iterations = 0;
    bool converged = false;
};

/// Minimizes f over the box [lower, upper]; candidates are clamped into the
/// box. Stops when the simplex diameter falls below xtol and the value spread
/// below ftol, or after max_iter iterations.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::span<const double> x0,
                             std::span<const double> lower, std::span<const double> upper, double xtol, double ftol,
                             int max_iter);

/// Serializes an EstimationResult (with convergence diagnostics) as JSON.
std::string estimation_result_to_json(const EstimationResult& result);

}  // namespace mixedsde
