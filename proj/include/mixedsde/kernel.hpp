#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixedsde/grid.hpp"

namespace mixedsde {

struct KernelSolverConfig {
    double tolerance = 1e-10;  // max allowed residual of the discretized equation
    int warn_steps = 512;      // soft cap: warn on stderr above this (O(n^4) cost)
    int threads = 1;           // per-endpoint solves are independent
};

/// Tabulated solution g_H(s_j, t_k) of the transform kernel equation together
/// with the martingale bracket w^H on the same grid.
///
/// For H in (1/2, 1) the defining integro-differential equation
///   g(s,t) + H d/ds Int_0^t g(r,t) |s-r|^{2H-1} sign(s-r) dr = 1
/// is differentiated under the integral into the weakly singular second-kind
/// Fredholm equation
///   g(s,t) + H(2H-1) Int_0^t g(r,t) |s-r|^{2H-2} dr = 1,
/// solved per endpoint t_k by a Nystrom scheme with product integration: the
/// singular factor is integrated in closed form against piecewise-linear hat
/// functions, so plugging the solved nodal values back into the discrete
/// operator reproduces the exact integral of the interpolant.
///
/// At H = 1/2 the sign kernel differentiates to a point mass and the equation
/// collapses to 2g = 1; that case is filled in closed form (g = 1/2, w = t/2).
class KernelTable {
  public:
    /// Solves the equation for every endpoint t_1..t_n. Throws
    /// std::invalid_argument for H outside [1/2, 1) and NumericalError when a
    /// linear solve fails or a residual exceeds the configured tolerance.
    static KernelTable solve(const TimeGrid& grid, double hurst, const KernelSolverConfig& config = {});

    const TimeGrid& grid() const { return grid_; }
    double hurst() const { return hurst_; }
    double tolerance() const { return tolerance_; }
    int n_steps() const { return grid_.n_steps(); }

    /// g_H(s_j, t_k); rows k = 1..n, nodes j = 0..k.
    double g(int k, int j) const { return rows_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]; }
    std::span<const double> row(int k) const { return rows_[static_cast<std::size_t>(k)]; }

    /// Bracket w^H_{t_k} = Int_0^{t_k} g_H(s, t_k) ds, trapezoidal in s.
    /// w(0) = 0 and w is strictly increasing.
    double w(int k) const { return w_[static_cast<std::size_t>(k)]; }
    const std::vector<double>& brackets() const { return w_; }
    double bracket(int k) const;  // k in [1, n]

    /// Max residual of the discretized equation over all rows and nodes.
    double residual_norm() const { return residual_norm_; }

    // Cache round trip: flat binary dump, bit-exact.
    void save(const std::string& path) const;
    static KernelTable load(const std::string& path);
    /// Content key of (T, n, H, tolerance, solver version) for cache file naming.
    static std::string cache_key(double horizon, int n_steps, double hurst, double tolerance);
    std::string cache_key() const;

  private:
    KernelTable() : grid_(1.0, 1) {}
    TimeGrid grid_;
    double hurst_ = 0.5;
    double tolerance_ = 0;
    double residual_norm_ = 0;
    std::vector<std::vector<double>> rows_;  // rows_[k], k = 0..n; row 0 unused
    std::vector<double> w_;
};

}  // namespace mixedsde
