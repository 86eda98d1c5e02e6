#include "mixedsde/sim.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/parallel.hpp"

namespace mixedsde {

void validate(const EffectDistribution& dist) {
    if (const auto* g = std::get_if<GaussianEffect>(&dist)) {
        if (!(g->variance >= 0) || !std::isfinite(g->variance) || !std::isfinite(g->mean))
            throw std::invalid_argument("GaussianEffect: variance must be finite and >= 0");
    } else if (const auto* d = std::get_if<DegenerateEffect>(&dist)) {
        if (!std::isfinite(d->value)) throw std::invalid_argument("DegenerateEffect: non-finite value");
    } else {
        const auto& t = std::get<TabulatedDensity>(dist);
        if (t.nodes.empty() || t.nodes.size() != t.weights.size())
            throw std::invalid_argument("TabulatedDensity: nodes/weights size mismatch");
        double sum = 0;
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            if (!std::isfinite(t.nodes[i])) throw std::invalid_argument("TabulatedDensity: non-finite node");
            if (!(t.weights[i] >= 0)) throw std::invalid_argument("TabulatedDensity: negative weight");
            sum += t.weights[i];
        }
        if (std::abs(sum - 1.0) > 1e-10)
            throw std::invalid_argument("TabulatedDensity: weights sum to " + format_g17(sum) + ", expected 1");
    }
}

double drift_value(const DriftSpec& drift, double x, double psi) {
    if (const auto* lm = std::get_if<LinearMultiplierDrift>(&drift)) return psi * lm->base(x);
    return std::get<GeneralDrift>(drift).value(x, psi);
}

LinearMultiplierDrift builtin_drift(const std::string& spec) {
    if (spec == "zero") return {spec, [](double) { return 0.0; }};
    if (spec == "identity") return {spec, [](double x) { return x; }};
    if (spec == "sine") return {spec, [](double x) { return std::sin(x); }};
    if (spec == "logistic") return {spec, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }};
    if (spec == "invquad") return {spec, [](double x) { return 1.0 / (1.0 + x * x); }};
    if (spec.rfind("constant:", 0) == 0) {
        const double c = parse_double(spec.substr(9), "drift constant");
        return {spec, [c](double) { return c; }};
    }
    throw std::invalid_argument("unknown drift '" + spec +
                                "'; expected zero|identity|sine|logistic|invquad|constant:<c>");
}

LinearMultiplierDrift tabulated_drift(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("tabulated_drift: need matching vectors of length >= 2");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("tabulated_drift: x values must increase");
    auto eval = [xs = std::move(xs), ys = std::move(ys)](double x) {
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
        return ys[hi - 1] + t * (ys[hi] - ys[hi - 1]);
    };
    return {"tabulated", std::move(eval)};
}

void validate(const SubjectPanel& panel) {
    if (!(panel.hurst >= 0.5 && panel.hurst < 1.0))
        throw std::invalid_argument("SubjectPanel: H must lie in [1/2, 1), got " + format_g17(panel.hurst));
    const auto nodes = static_cast<std::size_t>(panel.grid.size());
    for (const auto& p : panel.paths)
        if (p.size() != nodes) throw std::invalid_argument("SubjectPanel: path length does not match grid");
    if (panel.effects && panel.effects->size() != panel.paths.size())
        throw std::invalid_argument("SubjectPanel: effects count does not match subject count");
}

// ---------------------------------------------------------------------------

double fbm_covariance(double s, double t, double hurst) {
    const double h2 = 2 * hurst;
    return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(s - t), h2));
}

Eigen::MatrixXd FbmIncrementFactor::increment_covariance(const TimeGrid& grid, double hurst) {
    const int n = grid.n_steps();
    const double scale = std::pow(grid.dt(), 2 * hurst);
    // stationary fGn autocovariance gamma(k) = dt^{2H} (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2
    std::vector<double> gamma(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double kp = std::pow(k + 1.0, 2 * hurst);
        const double k0 = std::pow(static_cast<double>(k), 2 * hurst);
        const double km = std::pow(std::abs(k - 1.0), 2 * hurst);
        gamma[static_cast<std::size_t>(k)] = 0.5 * scale * (kp - 2 * k0 + km);
    }
    Eigen::MatrixXd cov(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cov(i, j) = gamma[static_cast<std::size_t>(std::abs(i - j))];
    return cov;
}

FbmIncrementFactor::FbmIncrementFactor(const TimeGrid& grid, double hurst) : grid_(grid), hurst_(hurst) {
    if (!(hurst > 0 && hurst < 1)) throw std::invalid_argument("FbmIncrementFactor: H must lie in (0,1)");
    Eigen::LLT<Eigen::MatrixXd> llt(increment_covariance(grid, hurst));
    if (llt.info() != Eigen::Success)
        throw NumericalError("fBm increment covariance is not numerically positive definite (H=" +
                             format_g17(hurst) + ", n=" + std::to_string(grid.n_steps()) +
                             "); the grid is too fine for double precision");
    chol_ = llt.matrixL();
}

void FbmIncrementFactor::sample(RngStream& stream, std::span<double> increments) const {
    const int n = grid_.n_steps();
    if (increments.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("FbmIncrementFactor: increment span has wrong size");
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = stream.normal();
    Eigen::Map<Eigen::VectorXd>(increments.data(), n) = chol_ * z;
}

namespace {
std::vector<double> cumulative_from_increments(std::span<const double> increments) {
    std::vector<double> levels(increments.size() + 1, 0.0);
    for (std::size_t k = 0; k < increments.size(); ++k) levels[k + 1] = levels[k] + increments[k];
    return levels;
}
}  // namespace

SamplePath simulate_fbm(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject) {
    std::vector<double> incr(static_cast<std::size_t>(factor.grid().n_steps()));
    RngStream stream(key, Stream::Fractional, subject);
    factor.sample(stream, incr);
    return {factor.grid(), cumulative_from_increments(incr)};
}

SamplePath simulate_fbm(const TimeGrid& grid, double hurst, StreamKey key, std::uint64_t subject) {
    return simulate_fbm(FbmIncrementFactor(grid, hurst), key, subject);
}

void sample_mixed_increments(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject,
                             std::span<double> bm_increments, std::span<double> fgn_increments) {
    const int n = factor.grid().n_steps();
    if (bm_increments.size() != static_cast<std::size_t>(n) || fgn_increments.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("sample_mixed_increments: span size mismatch");
    RngStream bm(key, Stream::Brownian, subject);
    const double sqrt_dt = std::sqrt(factor.grid().dt());
    for (int k = 0; k < n; ++k) bm_increments[static_cast<std::size_t>(k)] = sqrt_dt * bm.normal();
    RngStream fgn(key, Stream::Fractional, subject);
    factor.sample(fgn, fgn_increments);
}

SamplePath simulate_mixed_fbm(const FbmIncrementFactor& factor, StreamKey key, std::uint64_t subject) {
    const std::size_t n = static_cast<std::size_t>(factor.grid().n_steps());
    std::vector<double> bm(n), fgn(n);
    sample_mixed_increments(factor, key, subject, bm, fgn);
    for (std::size_t k = 0; k < n; ++k) bm[k] += fgn[k];
    return {factor.grid(), cumulative_from_increments(bm)};
}

SamplePath simulate_mixed_fbm(const TimeGrid& grid, double hurst, StreamKey key, std::uint64_t subject) {
    return simulate_mixed_fbm(FbmIncrementFactor(grid, hurst), key, subject);
}

std::vector<double> sample_effects(const EffectDistribution& dist, int n, StreamKey key) {
    validate(dist);
    if (n < 1) throw std::invalid_argument("sample_effects: need n >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        RngStream stream(key, Stream::Effects, static_cast<std::uint64_t>(i) + 1);
        if (const auto* g = std::get_if<GaussianEffect>(&dist)) {
            out[static_cast<std::size_t>(i)] = g->mean + std::sqrt(g->variance) * stream.normal();
        } else if (const auto* d = std::get_if<DegenerateEffect>(&dist)) {
            out[static_cast<std::size_t>(i)] = d->value;
        } else {
            const auto& t = std::get<TabulatedDensity>(dist);
            const double u = stream.uniform01();
            double acc = 0;
            std::size_t pick = t.nodes.size() - 1;
            for (std::size_t m = 0; m < t.weights.size(); ++m) {
                acc += t.weights[m];
                if (u <= acc) {
                    pick = m;
                    break;
                }
            }
            out[static_cast<std::size_t>(i)] = t.nodes[pick];
        }
    }
    return out;
}

SubjectPanel simulate_panel(const TimeGrid& grid, double hurst, const DriftSpec& drift,
                            const EffectDistribution& dist, int subjects, StreamKey key,
                            const PanelOptions& options) {
    if (!(hurst >= 0.5 && hurst < 1.0))
        throw std::invalid_argument("simulate_panel: H must lie in [1/2, 1), got " + format_g17(hurst));
    if (subjects < 1) throw std::invalid_argument("simulate_panel: need at least one subject");

    std::vector<double> starts(static_cast<std::size_t>(subjects), 0.0);
    if (const auto* shared = std::get_if<double>(&options.x0)) {
        std::fill(starts.begin(), starts.end(), *shared);
    } else {
        const auto& per = std::get<std::vector<double>>(options.x0);
        if (per.size() != starts.size())
            throw std::invalid_argument("simulate_panel: x0 vector length does not match subject count");
        starts = per;
    }

    const FbmIncrementFactor factor(grid, hurst);
    const int n = grid.n_steps();
    const double dt = grid.dt();

    SubjectPanel panel;
    panel.grid = grid;
    panel.hurst = hurst;
    panel.paths.assign(static_cast<std::size_t>(subjects), {});
    panel.effects = sample_effects(dist, subjects, key);
    if (options.keep_drivers) panel.drivers.emplace(static_cast<std::size_t>(subjects));

    std::vector<int> bad(static_cast<std::size_t>(subjects), 0);
    parallel_for(static_cast<std::size_t>(subjects), options.threads, [&](std::size_t i) {
        std::vector<double> bm(static_cast<std::size_t>(n)), fgn(static_cast<std::size_t>(n));
        sample_mixed_increments(factor, key, i + 1, bm, fgn);
        const double psi = (*panel.effects)[i];
        std::vector<double> path(static_cast<std::size_t>(n) + 1);
        std::vector<double> driver(static_cast<std::size_t>(n) + 1, 0.0);
        // Euler with the drift sum and the driver path accumulated separately:
        // the same scheme, summed so that zero drift leaves X = x0 + driver
        // bit for bit and the driver diagnostic is exact.
        path[0] = starts[i];
        double drift_sum = 0.0;
        bool ok = std::isfinite(path[0]);
        for (int k = 0; k < n && ok; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            drift_sum += drift_value(drift, path[ks], psi) * dt;
            driver[ks + 1] = driver[ks] + (bm[ks] + fgn[ks]);
            path[ks + 1] = starts[i] + drift_sum + driver[ks + 1];
            ok = std::isfinite(path[ks + 1]);
        }
        if (!ok) {
            bad[i] = 1;
            return;
        }
        panel.paths[i] = std::move(path);
        if (panel.drivers) (*panel.drivers)[i] = std::move(driver);
    });

    std::string failed;
    for (std::size_t i = 0; i < bad.size(); ++i)
        if (bad[i]) failed += (failed.empty() ? "" : ",") + std::to_string(i + 1);
    if (!failed.empty())
        throw NumericalError("Euler state became non-finite for subject(s) " + failed +
                             "; the drift is not dissipative enough for this grid");
    return panel;
}

// ---------------------------------------------------------------------------

void write_panel_csv(const std::string& path, const SubjectPanel& panel) {
    std::ostringstream out;
    out << "subject,t,value\n";
    for (int i = 0; i < panel.subjects(); ++i) {
        const auto& values = panel.paths[static_cast<std::size_t>(i)];
        for (int k = 0; k < panel.grid.size(); ++k)
            out << (i + 1) << ',' << format_g17(panel.grid.t(k)) << ','
                << format_g17(values[static_cast<std::size_t>(k)]) << '\n';
    }
    write_text_file(path, out.str());
}

SubjectPanel read_panel_csv(const std::string& path, double hurst) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (line == "subject,t,value\r") line.pop_back();
    if (line != "subject,t,value") throw DataError(path + ": expected header 'subject,t,value'");

    std::map<long long, std::pair<std::vector<double>, std::vector<double>>> by_subject;  // t, value
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
        const long long subj = parse_int(fields[0], where);
        if (subj < 1) throw DataError(where + ": subjects are 1-based");
        auto& cols = by_subject[subj];
        cols.first.push_back(parse_double(fields[1], where));
        cols.second.push_back(parse_double(fields[2], where));
    }
    if (by_subject.empty()) throw DataError(path + ": no data rows");

    const auto& first = by_subject.begin()->second;
    TimeGrid grid = TimeGrid::from_points(first.first);

    SubjectPanel panel;
    panel.grid = grid;
    panel.hurst = hurst;
    long long expected = 1;
    for (auto& [subj, cols] : by_subject) {
        if (subj != expected)
            throw DataError(path + ": subject ids must be contiguous from 1, missing " + std::to_string(expected));
        ++expected;
        if (cols.first != grid.points())
            throw DataError(path + ": subject " + std::to_string(subj) + " times do not match subject 1");
        for (double v : cols.second)
            if (!std::isfinite(v)) throw DataError(path + ": non-finite value for subject " + std::to_string(subj));
        panel.paths.push_back(std::move(cols.second));
    }
    validate(panel);
    return panel;
}

}  // namespace mixedsde
