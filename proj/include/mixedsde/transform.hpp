#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixedsde/grid.hpp"
#include "mixedsde/kernel.hpp"
#include "mixedsde/sim.hpp"

namespace mixedsde {

/// Fundamental-semimartingale transform of an observed path:
/// Z_{t_k} = sum_{j<k} g_H(s_j, t_k) (Y_{t_{j+1}} - Y_{t_j}), Z_0 = 0
/// (left-point sum of Int_0^{t_k} g_H(s, t_k) dY_s). Returns n+1 values.
std::vector<double> transform_values(std::span<const double> path_values, const KernelTable& table);
std::vector<double> transform_path(const SamplePath& path, const KernelTable& table);

/// Per-increment drift rates: with A(t_k) = Int_0^{t_k} g_H(s,t_k) C(s) ds
/// (trapezoid over row k) the rate on increment k is
/// (A(t_k) - A(t_{k-1})) / (w_k - w_{k-1}), the discrete d/dw derivative;
/// A(t_0) = 0. `drift_at_nodes` holds C(s_j) on the path. Returns n values.
std::vector<double> increment_rates(std::span<const double> drift_at_nodes, const KernelTable& table);

/// Rates for drift C(s) = S(X_s, psi) evaluated on the path.
std::vector<double> compute_q(std::span<const double> path_values, const KernelTable& table, const DriftSpec& drift,
                              double psi);

struct TransformOutput {
    std::vector<double> z;                  // n+1 values, z[0] = 0
    std::vector<double> q;                  // n values, one per increment
    std::optional<std::vector<double>> mh;  // transform of the driver, when observed
};

TransformOutput transform_with_diagnostics(std::span<const double> path_values, const KernelTable& table,
                                           const DriftSpec& drift, double psi,
                                           std::span<const double> driver_values = {});

/// Simulation diagnostic for the decomposition Z = Int q dw + M^H:
/// max_k |Z_{t_k} - sum_{j<=k} q_j (w_j - w_{j-1}) - M^H_{t_k}| with M^H the
/// transform of the driver path alone. Zero drift gives exactly zero;
/// otherwise the gap is the quadrature mismatch, O(dt^{min(1, 2-2H)}).
double decomposition_residual(std::span<const double> path_values, const KernelTable& table, const DriftSpec& drift,
                              double psi, std::span<const double> driver_values);

/// Per-subject export of (t, Z, cumulative drift integral, q) for plotting.
void write_transform_csv(const std::string& path, const KernelTable& table, const TransformOutput& out);

}  // namespace mixedsde
