#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixedsde/kernel.hpp"
#include "mixedsde/sim.hpp"

namespace mixedsde {

/// Per-subject sufficient statistics of the linear-multiplier model:
/// U_i = Int b dZ_i and V_i = Int b^2 dw with b the effect-free drift rate.
/// V_i >= 0 always.
struct SufficientStats {
    std::vector<double> u;
    std::vector<double> v;

    int subjects() const { return static_cast<int>(u.size()); }
};

/// (U, V) for a single path under drift base rate C(s) = S(X_s):
/// U = sum_k b_k (Z_k - Z_{k-1}), V = sum_k b_k^2 (w_k - w_{k-1}).
std::pair<double, double> subject_stats(std::span<const double> path_values, const KernelTable& table,
                                        const LinearMultiplierDrift& drift);

SufficientStats compute_stats(const SubjectPanel& panel, const KernelTable& table,
                              const LinearMultiplierDrift& drift);

/// log of Int g(psi) exp(psi u - psi^2 v / 2) dnu(psi) for the given mixing
/// distribution. Gaussian mixing uses the closed form
///   -log(1 + s2 v)/2 + (s2 u^2 + 2 mu u - mu^2 v) / (2 (1 + s2 v)),
/// algebraically equal to the completed-square expression and continuous at
/// s2 = 0 (where it reduces to mu u - mu^2 v / 2); tabulated mixing uses
/// log-sum-exp over the nodes. Everything stays in the log domain, so v as
/// large as 1e12 cannot overflow. Requires v >= 0.
double log_lambda(double u, double v, const EffectDistribution& dist);

/// Panel log-likelihood sum_i log lambda(u_i, v_i).
double panel_loglik(const SufficientStats& stats, const EffectDistribution& dist);

/// Discretized log-likelihood ratio for a fixed effect value:
/// psi u - psi^2 v / 2 (reference measure at S(., psi_0) = 0).
double loglik_ratio_fixed_effect(double u, double v, double psi);

/// Builds a TabulatedDensity from a continuous Lebesgue density by
/// Gauss-Hermite quadrature standardized around (center, scale); `nodes`
/// defaults to 64. Weights are renormalized to sum to exactly 1.
TabulatedDensity tabulate_density(const std::function<double(double)>& density, double center, double scale,
                                  int nodes = 64);

// Stats CSV interchange: header `subject,U,V`, 17 significant digits.
void write_stats_csv(const std::string& path, const SufficientStats& stats);
SufficientStats read_stats_csv(const std::string& path);

}  // namespace mixedsde
