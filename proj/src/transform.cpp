#include "mixedsde/transform.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"

namespace mixedsde {

namespace {
void check_sizes(std::span<const double> values, const KernelTable& table, const char* what) {
    if (values.size() != static_cast<std::size_t>(table.grid().size()))
        throw std::invalid_argument(std::string(what) + ": path length does not match kernel grid");
}

// trapezoid of row k against f(s_j), j = 0..k
double weighted_trapezoid(std::span<const double> row, std::span<const double> f, double dt) {
    const std::size_t k = row.size() - 1;
    double acc = 0.5 * (row[0] * f[0] + row[k] * f[k]);
    for (std::size_t j = 1; j < k; ++j) acc += row[j] * f[j];
    return acc * dt;
}
}  // namespace

std::vector<double> transform_values(std::span<const double> path_values, const KernelTable& table) {
    check_sizes(path_values, table, "transform");
    const int n = table.n_steps();
    std::vector<double> z(static_cast<std::size_t>(n) + 1, 0.0);
    for (int k = 1; k <= n; ++k) {
        const auto row = table.row(k);
        double acc = 0;
        for (int j = 0; j < k; ++j)
            acc += row[static_cast<std::size_t>(j)] *
                   (path_values[static_cast<std::size_t>(j) + 1] - path_values[static_cast<std::size_t>(j)]);
        z[static_cast<std::size_t>(k)] = acc;
    }
    return z;
}

std::vector<double> transform_path(const SamplePath& path, const KernelTable& table) {
    if (!(path.grid == table.grid())) throw std::invalid_argument("transform: path and table grids differ");
    return transform_values(path.values, table);
}

std::vector<double> increment_rates(std::span<const double> drift_at_nodes, const KernelTable& table) {
    check_sizes(drift_at_nodes, table, "increment_rates");
    const int n = table.n_steps();
    const double dt = table.grid().dt();
    std::vector<double> q(static_cast<std::size_t>(n));
    double a_prev = 0.0;  // A(t_0) = 0
    for (int k = 1; k <= n; ++k) {
        const double a_k = weighted_trapezoid(table.row(k), drift_at_nodes, dt);
        const double dw = table.w(k) - table.w(k - 1);
        if (!(dw > 0)) throw NumericalError("increment_rates: vanishing bracket increment");
        q[static_cast<std::size_t>(k) - 1] = (a_k - a_prev) / dw;
        a_prev = a_k;
    }
    return q;
}

std::vector<double> compute_q(std::span<const double> path_values, const KernelTable& table, const DriftSpec& drift,
                              double psi) {
    check_sizes(path_values, table, "compute_q");
    std::vector<double> c(path_values.size());
    for (std::size_t j = 0; j < path_values.size(); ++j) c[j] = drift_value(drift, path_values[j], psi);
    return increment_rates(c, table);
}

TransformOutput transform_with_diagnostics(std::span<const double> path_values, const KernelTable& table,
                                           const DriftSpec& drift, double psi,
                                           std::span<const double> driver_values) {
    TransformOutput out;
    out.z = transform_values(path_values, table);
    out.q = compute_q(path_values, table, drift, psi);
    if (!driver_values.empty()) out.mh = transform_values(driver_values, table);
    return out;
}

double decomposition_residual(std::span<const double> path_values, const KernelTable& table, const DriftSpec& drift,
                              double psi, std::span<const double> driver_values) {
    if (driver_values.empty()) throw std::invalid_argument("decomposition_residual: driver path unavailable");
    const auto z = transform_values(path_values, table);
    const auto mh = transform_values(driver_values, table);
    const auto q = compute_q(path_values, table, drift, psi);
    double worst = 0.0;
    double drift_part = 0.0;
    for (int k = 1; k <= table.n_steps(); ++k) {
        drift_part += q[static_cast<std::size_t>(k) - 1] * (table.w(k) - table.w(k - 1));
        worst = std::max(worst,
                         std::abs(z[static_cast<std::size_t>(k)] - drift_part - mh[static_cast<std::size_t>(k)]));
    }
    return worst;
}

void write_transform_csv(const std::string& path, const KernelTable& table, const TransformOutput& out) {
    const TimeGrid& grid = table.grid();
    std::ostringstream text;
    text << "t,z,drift_integral,q\n";
    double drift_part = 0.0;
    text << format_g17(grid.t(0)) << ',' << format_g17(out.z[0]) << ",0,\n";
    for (int k = 1; k <= grid.n_steps(); ++k) {
        drift_part += out.q[static_cast<std::size_t>(k) - 1] * (table.w(k) - table.w(k - 1));
        text << format_g17(grid.t(k)) << ',' << format_g17(out.z[static_cast<std::size_t>(k)]) << ','
             << format_g17(drift_part) << ',' << format_g17(out.q[static_cast<std::size_t>(k) - 1]) << '\n';
    }
    write_text_file(path, text.str());
}

}  // namespace mixedsde
