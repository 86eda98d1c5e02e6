#include "mixedsde/likelihood.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/transform.hpp"

namespace mixedsde {

std::pair<double, double> subject_stats(std::span<const double> path_values, const KernelTable& table,
                                        const LinearMultiplierDrift& drift) {
    std::vector<double> c(path_values.size());
    for (std::size_t j = 0; j < path_values.size(); ++j) c[j] = drift.base(path_values[j]);
    const auto b = increment_rates(c, table);
    const auto z = transform_values(path_values, table);
    double u = 0, v = 0;
    for (int k = 1; k <= table.n_steps(); ++k) {
        const double rate = b[static_cast<std::size_t>(k) - 1];
        u += rate * (z[static_cast<std::size_t>(k)] - z[static_cast<std::size_t>(k) - 1]);
        v += rate * rate * (table.w(k) - table.w(k - 1));
    }
    return {u, v};
}

SufficientStats compute_stats(const SubjectPanel& panel, const KernelTable& table,
                              const LinearMultiplierDrift& drift) {
    if (!(panel.grid == table.grid())) throw std::invalid_argument("compute_stats: panel and table grids differ");
    SufficientStats stats;
    stats.u.resize(panel.paths.size());
    stats.v.resize(panel.paths.size());
    std::string failed;
    for (std::size_t i = 0; i < panel.paths.size(); ++i) {
        const auto [u, v] = subject_stats(panel.paths[i], table, drift);
        if (!std::isfinite(u) || !std::isfinite(v)) {
            failed += (failed.empty() ? "" : ",") + std::to_string(i + 1);
            continue;
        }
        stats.u[i] = u;
        stats.v[i] = v;
    }
    if (!failed.empty()) throw NumericalError("non-finite sufficient statistics for subject(s) " + failed);
    return stats;
}

double log_lambda(double u, double v, const EffectDistribution& dist) {
    if (!(v >= 0)) throw std::invalid_argument("log_lambda: V must be >= 0, got " + format_g17(v));
    if (const auto* g = std::get_if<GaussianEffect>(&dist)) {
        const double mu = g->mean, s2 = g->variance;
        if (s2 == 0) return mu * u - 0.5 * mu * mu * v;
        const double denom = 1.0 + s2 * v;
        return -0.5 * std::log(denom) + (s2 * u * u + 2 * mu * u - mu * mu * v) / (2 * denom);
    }
    if (const auto* d = std::get_if<DegenerateEffect>(&dist)) return loglik_ratio_fixed_effect(u, v, d->value);
    const auto& tab = std::get<TabulatedDensity>(dist);
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(tab.nodes.size());
    for (std::size_t m = 0; m < tab.nodes.size(); ++m) {
        if (tab.weights[m] <= 0) continue;
        const double psi = tab.nodes[m];
        const double t = std::log(tab.weights[m]) + psi * u - 0.5 * psi * psi * v;
        terms.push_back(t);
        max_term = std::max(max_term, t);
    }
    if (terms.empty()) throw std::invalid_argument("log_lambda: tabulated density has no mass");
    double acc = 0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
}

double panel_loglik(const SufficientStats& stats, const EffectDistribution& dist) {
    if (stats.u.size() != stats.v.size()) throw std::invalid_argument("panel_loglik: ragged stats");
    double acc = 0;
    for (std::size_t i = 0; i < stats.u.size(); ++i) acc += log_lambda(stats.u[i], stats.v[i], dist);
    return acc;
}

double loglik_ratio_fixed_effect(double u, double v, double psi) { return psi * u - 0.5 * psi * psi * v; }

TabulatedDensity tabulate_density(const std::function<double(double)>& density, double center, double scale,
                                  int nodes) {
    if (nodes < 1) throw std::invalid_argument("tabulate_density: need at least one node");
    if (!(scale > 0)) throw std::invalid_argument("tabulate_density: scale must be positive");
    // Golub-Welsch for Gauss-Hermite: Jacobi matrix off-diagonals sqrt(i/2).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(nodes, nodes);
    for (int i = 1; i < nodes; ++i) {
        const double off = std::sqrt(i / 2.0);
        jacobi(i, i - 1) = off;
        jacobi(i - 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    if (eig.info() != Eigen::Success) throw NumericalError("tabulate_density: Hermite eigenproblem failed");

    TabulatedDensity tab;
    tab.nodes.resize(static_cast<std::size_t>(nodes));
    std::vector<double> logw(static_cast<std::size_t>(nodes), -std::numeric_limits<double>::infinity());
    double max_logw = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < nodes; ++m) {
        const double x = eig.eigenvalues()(m);
        const double gh_weight =
            std::sqrt(std::numbers::pi) * eig.eigenvectors()(0, m) * eig.eigenvectors()(0, m);
        const double psi = center + std::numbers::sqrt2 * scale * x;
        tab.nodes[static_cast<std::size_t>(m)] = psi;
        const double dens = density(psi);
        if (dens < 0) throw std::invalid_argument("tabulate_density: negative density value");
        if (dens > 0) {
            // weight = sqrt(2) scale * gh_weight * e^{x^2} * density(psi), kept in logs
            logw[static_cast<std::size_t>(m)] =
                std::log(std::numbers::sqrt2 * scale * gh_weight) + x * x + std::log(dens);
            max_logw = std::max(max_logw, logw[static_cast<std::size_t>(m)]);
        }
    }
    if (!std::isfinite(max_logw)) throw std::invalid_argument("tabulate_density: density vanishes at all nodes");
    double total = 0;
    tab.weights.resize(static_cast<std::size_t>(nodes));
    for (std::size_t m = 0; m < tab.weights.size(); ++m) {
        tab.weights[m] = std::exp(logw[m] - max_logw);
        total += tab.weights[m];
    }
    for (double& w : tab.weights) w /= total;
    validate(EffectDistribution{tab});
    return tab;
}

void write_stats_csv(const std::string& path, const SufficientStats& stats) {
    std::ostringstream out;
    out << "subject,U,V\n";
    for (std::size_t i = 0; i < stats.u.size(); ++i)
        out << (i + 1) << ',' << format_g17(stats.u[i]) << ',' << format_g17(stats.v[i]) << '\n';
    write_text_file(path, out.str());
}

SufficientStats read_stats_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "subject,U,V") throw DataError(path + ": expected header 'subject,U,V'");
    SufficientStats stats;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
        const long long subj = parse_int(fields[0], where);
        if (subj != static_cast<long long>(stats.u.size()) + 1)
            throw DataError(where + ": subjects must be contiguous from 1");
        stats.u.push_back(parse_double(fields[1], where));
        stats.v.push_back(parse_double(fields[2], where));
    }
    if (stats.u.empty()) throw DataError(path + ": no data rows");
    return stats;
}

}  // namespace mixedsde
