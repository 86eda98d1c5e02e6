#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mixedsde/grid.hpp"
#include "mixedsde/rng.hpp"

namespace mixedsde {

// ---------------------------------------------------------------------------
// Random-effect distributions

struct GaussianEffect {
    double mean = 0.0;
    double variance = 0.0;  // >= 0; 0 collapses to a point mass at mean
};

struct DegenerateEffect {
    double value = 0.0;
};

/// Discrete mixing density: point masses `weights` (nonnegative, summing to 1
/// within 1e-10) at `nodes`. Stands in for a general density against a
/// sigma-finite measure; see tabulate_density() for building one from a
/// continuous density.
struct TabulatedDensity {
    std::vector<double> nodes;
    std::vector<double> weights;
};

using EffectDistribution = std::variant<GaussianEffect, DegenerateEffect, TabulatedDensity>;

/// Throws std::invalid_argument on parameter violations.
void validate(const EffectDistribution& dist);

// ---------------------------------------------------------------------------
// Drift specifications

/// Drift of the form psi * base(x); the only form with a closed-form
/// sufficient-statistic path.
struct LinearMultiplierDrift {
    std::string name;  // for serialization; empty for ad-hoc callables
    std::function<double(double)> base;
};

/// Fully general drift S(x, psi).
struct GeneralDrift {
    std::function<double(double, double)> value;
};

using DriftSpec = std::variant<LinearMultiplierDrift, GeneralDrift>;

double drift_value(const DriftSpec& drift, double x, double psi);

/// Named builtins: "zero", "identity", "sine", "logistic", "invquad"
/// (1/(1+x^2)), "constant:<c>". Throws std::invalid_argument otherwise.
LinearMultiplierDrift builtin_drift(const std::string& spec);

/// Piecewise-linear interpolant through (xs, ys), clamped outside the range.
LinearMultiplierDrift tabulated_drift(std::vector<double> xs, std::vector<double> ys);

// ---------------------------------------------------------------------------
// Panels

struct SubjectPanel {
    TimeGrid grid{1.0, 1};
    double hurst = 0.5;                              // common H in [1/2, 1)
    std::vector<std::vector<double>> paths;          // N x (n+1)
    std::optional<std::vector<double>> effects;      // latent phi_i, simulation only
    std::optional<std::vector<std::vector<double>>> drivers;  // mixed-fBm paths, diagnostics only

    int subjects() const { return static_cast<int>(paths.size()); }
};

void validate(const SubjectPanel& panel);

// ---------------------------------------------------------------------------
// Exact Gaussian sampling

/// Cholesky factor of the fractional-Gaussian-noise increment covariance for
/// one (grid, H) pair. fBm increments are stationary, which keeps the matrix
/// Toeplitz and well conditioned where the level covariance is not; levels
/// are rebuilt by cumulative summation. Shared across subjects, immutable.
class FbmIncrementFactor {
  public:
    FbmIncrementFactor(const TimeGrid& grid, double hurst);

    const TimeGrid& grid() const { return grid_; }
    double hurst() const { return hurst_; }

    /// Fills `increments` (size n_steps) with one fGn draw.
    void sample(RngStream& stream, std::span<double> increments) const;

    static Eigen::MatrixXd increment_covariance(const TimeGrid& grid, double hurst);

  private:
    TimeGrid grid_;
    double hurst_;
    Eigen::MatrixXd chol_;  // lower triangular
};

/// fBm covariance (s, t) -> (s^{2H} + t^{2H} - |s-t|^{2H}) / 2.
double fbm_covariance(double s, double t, double hurst);

/// Exact fractional Brownian motion path on the grid, W_0 = 0.
SamplePath simulate_fbm(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject = 0);
SamplePath simulate_fbm(const TimeGrid& grid, double hurst, StreamKey key, std::uint64_t subject = 0);

/// Mixed fBm W + W^H; the two summands come from the independent Brownian
/// and Fractional sub-streams of the same key.
SamplePath simulate_mixed_fbm(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject = 0);
SamplePath simulate_mixed_fbm(const TimeGrid& grid, double hurst, StreamKey key, std::uint64_t subject = 0);

/// Component access for law checks: fills both increment vectors (size
/// n_steps) exactly as simulate_mixed_fbm would consume them.
void sample_mixed_increments(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject,
                             std::span<double> bm_increments, std::span<double> fgn_increments);

/// N i.i.d. draws; draw i comes from the Effects sub-stream of subject i+1,
/// so panels of different size share a common prefix.
std::vector<double> sample_effects(const EffectDistribution& dist, int n, StreamKey key);

struct PanelOptions {
    bool keep_drivers = false;
    int threads = 1;
    std::variant<double, std::vector<double>> x0 = 0.0;  // shared scalar or per-subject
};

/// Simulates the panel dX^i = S(X^i, phi_i) dt + dW~^{H,i} by the Euler
/// scheme X_{k+1} = X_k + S(X_k, phi_i) dt + (driver increment).
SubjectPanel simulate_panel(const TimeGrid& grid, double hurst, const DriftSpec& drift,
                            const EffectDistribution& dist, int subjects, StreamKey key,
                            const PanelOptions& options = {});

// ---------------------------------------------------------------------------
// Panel CSV interchange: long format `subject,t,value`, subjects 1-based,
// numbers at 17 significant digits.

void write_panel_csv(const std::string& path, const SubjectPanel& panel);

/// Reads a panel CSV. The grid is reconstructed from subject 1's times and
/// validated; `hurst` is attached from the caller (it is not part of the CSV).
SubjectPanel read_panel_csv(const std::string& path, double hurst);

}  // namespace mixedsde
