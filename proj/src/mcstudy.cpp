#include "mixedsde/mcstudy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/parallel.hpp"
#include "mixedsde/version.hpp"

namespace mixedsde {

namespace fs = std::filesystem;

double effect_mean(const EffectDistribution& dist) {
    if (const auto* g = std::get_if<GaussianEffect>(&dist)) return g->mean;
    if (const auto* d = std::get_if<DegenerateEffect>(&dist)) return d->value;
    const auto& t = std::get<TabulatedDensity>(dist);
    double m = 0;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) m += t.nodes[i] * t.weights[i];
    return m;
}

double limits_sigma0_sq(const StudyConfig& config) {
    if (config.estimator.kind == EstimatorKind::MuKnownVar) return config.estimator.sigma0_sq;
    if (const auto* g = std::get_if<GaussianEffect>(&config.effect)) return g->variance;
    return 0.0;
}

KsResult normality_test(std::span<const double> samples) {
    if (samples.size() < 100) throw std::invalid_argument("normality_test: need at least 100 samples");
    const double m = mean(samples);
    const double sd = std_dev(samples);
    if (!(sd > 0)) throw NumericalError("normality_test: degenerate sample (zero variance)");
    std::vector<double> z(samples.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (samples[i] - m) / sd;
    return ks_test_standard_normal(z);
}

// ---------------------------------------------------------------------------

namespace {

double jackknife_se(std::span<const double> loo) {
    const double m = mean(loo);
    double acc = 0;
    for (double g : loo) acc += (g - m) * (g - m);
    const double n = static_cast<double>(loo.size());
    return std::sqrt((n - 1.0) / n * acc);
}

struct EstimateOutcome {
    double mu_hat = 0, sigma2_hat = 0, std_err = 0, loglik = 0;
    bool converged = false;
};

EstimateOutcome run_estimator(const SufficientStats& stats, const EstimatorChoice& choice) {
    EstimateOutcome out;
    switch (choice.kind) {
        case EstimatorKind::MuKnownVar: {
            out.mu_hat = mle_mu_known_var(stats, choice.sigma0_sq);
            out.sigma2_hat = choice.sigma0_sq;
            out.converged = true;
            break;
        }
        case EstimatorKind::Joint: {
            const auto r = mle_joint(stats, {}, choice.joint);
            out.mu_hat = r.theta_hat[0];
            out.sigma2_hat = r.theta_hat[1];
            out.converged = r.converged;
            break;
        }
        case EstimatorKind::Direct: {
            const auto family =
                gaussian_family(choice.direct_mu_lo, choice.direct_mu_hi, choice.direct_s2_max);
            const double mu0 = mle_mu_known_var(stats, 0.0);
            const std::vector<double> init{std::clamp(mu0, choice.direct_mu_lo, choice.direct_mu_hi), 0.1};
            const auto r = mle_direct(stats, family, init, choice.direct);
            out.mu_hat = r.theta_hat[0];
            out.sigma2_hat = r.theta_hat[1];
            out.converged = r.converged;
            break;
        }
    }
    out.std_err = mu_std_err(stats, out.mu_hat, out.sigma2_hat);
    out.loglik = panel_loglik(stats, GaussianEffect{out.mu_hat, out.sigma2_hat});
    return out;
}

const LinearMultiplierDrift& linear_drift_of(const DriftSpec& drift) {
    const auto* lm = std::get_if<LinearMultiplierDrift>(&drift);
    if (!lm)
        throw std::invalid_argument(
            "sufficient statistics require a linear-multiplier drift; general drifts have no U/V reduction");
    return *lm;
}

std::string csv_row(const ReplicateRow& row) {
    std::ostringstream out;
    std::string err = row.error;
    for (char& c : err)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    out << row.replicate << ',' << format_g17(row.mu_hat) << ',' << format_g17(row.sigma2_hat) << ','
        << format_g17(row.std_err) << ',' << format_g17(row.loglik) << ',' << (row.converged ? 1 : 0) << ','
        << (row.failed ? 1 : 0) << ',' << err << '\n';
    return out.str();
}

constexpr const char* kRowHeader = "replicate,mu_hat,sigma2_hat,std_err,loglik,converged,failed,error";

std::vector<ReplicateRow> parse_rows(const std::string& path, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty replicate table");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kRowHeader) throw DataError(path + ": unexpected replicate table header");
    std::vector<ReplicateRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (f.size() != 8) throw DataError(where + ": expected 8 fields");
        ReplicateRow row;
        row.replicate = static_cast<int>(parse_int(f[0], where));
        row.mu_hat = parse_double(f[1], where);
        row.sigma2_hat = parse_double(f[2], where);
        row.std_err = parse_double(f[3], where);
        row.loglik = parse_double(f[4], where);
        row.converged = parse_int(f[5], where) != 0;
        row.failed = parse_int(f[6], where) != 0;
        row.error = f[7];
        if (row.replicate != static_cast<int>(rows.size()) + 1)
            throw DataError(where + ": replicates must be contiguous from 1");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

McSummary summarize_rows(const std::vector<ReplicateRow>& rows, const LimitsEstimate& limits, double true_mu) {
    McSummary s;
    s.replicates = static_cast<int>(rows.size());
    std::vector<double> mu;
    for (const auto& r : rows) {
        if (r.failed)
            ++s.failures;
        else
            mu.push_back(r.mu_hat);
    }
    s.ks_stat = std::numeric_limits<double>::quiet_NaN();
    s.ks_p = std::numeric_limits<double>::quiet_NaN();
    if (mu.size() >= 2) {
        s.mean_mu = mean(mu);
        s.var_mu = variance(mu);
        s.skew_mu = skewness(mu);
        s.kurt_mu = kurtosis(mu);
        s.bias_vs_gamma0 = s.mean_mu - limits.gamma0;
        s.bias_vs_true_mu = s.mean_mu - true_mu;
        if (mu.size() >= 100) {
            const auto ks = normality_test(mu);
            s.ks_stat = ks.statistic;
            s.ks_p = ks.p_value;
        }
    }
    return s;
}

namespace {

nlohmann::json summary_to_json(const StudyConfig& config, const McReport& report) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["format_version"] = kFileFormatVersion;
    j["seed"] = config.seed;
    j["subjects"] = config.subjects;
    j["replicates"] = config.replicates;
    j["hurst"] = config.hurst;
    j["horizon"] = config.grid.horizon();
    j["n_steps"] = config.grid.n_steps();
    auto& s = j["summary"];
    s["replicates"] = report.summary.replicates;
    s["failures"] = report.summary.failures;
    s["mean_mu"] = report.summary.mean_mu;
    s["var_mu"] = report.summary.var_mu;
    s["skew_mu"] = report.summary.skew_mu;
    s["kurt_mu"] = report.summary.kurt_mu;
    s["bias_vs_gamma0"] = report.summary.bias_vs_gamma0;
    s["bias_vs_true_mu"] = report.summary.bias_vs_true_mu;
    if (std::isfinite(report.summary.ks_stat)) {
        s["ks_stat"] = report.summary.ks_stat;
        s["ks_p"] = report.summary.ks_p;
    } else {
        s["ks_stat"] = nullptr;
        s["ks_p"] = nullptr;
    }
    auto& l = j["limits"];
    l["subjects"] = report.limits.subjects;
    l["sigma0_sq"] = report.limits.sigma0_sq;
    l["gamma0"] = report.limits.gamma0;
    l["gamma0_se"] = report.limits.gamma0_se;
    l["beta0"] = report.limits.beta0;
    l["beta0_se"] = report.limits.beta0_se;
    l["var_num"] = report.limits.var_num;
    l["var_num_se"] = report.limits.var_num_se;
    j["failed_study"] = report.failed_study;
    return j;
}

void write_plot_data(const StudyConfig& config, const std::vector<ReplicateRow>& rows) {
    std::vector<double> mu;
    for (const auto& r : rows)
        if (!r.failed) mu.push_back(r.mu_hat);
    if (mu.size() < 2) return;
    const double m = mean(mu);
    const double sd = std_dev(mu);
    if (!(sd > 0)) return;
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) z[i] = (mu[i] - m) / sd;
    std::sort(z.begin(), z.end());

    // histogram of standardized estimates, 20 equal bins
    const int bins = 20;
    const double lo = z.front(), hi = z.back();
    const double width = (hi - lo) / bins;
    std::ostringstream hist;
    hist << "bin_left,bin_right,count\n";
    if (width > 0) {
        std::vector<int> counts(bins, 0);
        for (double x : z) {
            int b = static_cast<int>((x - lo) / width);
            if (b >= bins) b = bins - 1;
            ++counts[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < bins; ++b)
            hist << format_g17(lo + b * width) << ',' << format_g17(lo + (b + 1) * width) << ','
                 << counts[static_cast<std::size_t>(b)] << '\n';
    }
    write_text_file((fs::path(config.out_dir) / "hist.csv").string(), hist.str());

    std::ostringstream qq;
    qq << "theoretical,empirical\n";
    const double n = static_cast<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        qq << format_g17(normal_quantile((static_cast<double>(i) + 0.5) / n)) << ',' << format_g17(z[i]) << '\n';
    write_text_file((fs::path(config.out_dir) / "qq.csv").string(), qq.str());
}

}  // namespace

LimitsEstimate estimate_limits(const StudyConfig& config, int subject_count, const KernelTable& table) {
    if (subject_count < 2) throw std::invalid_argument("estimate_limits: need at least two subjects");
    const auto& drift = linear_drift_of(config.drift);
    const double s2 = limits_sigma0_sq(config);
    const FbmIncrementFactor factor(config.grid, config.hurst);
    const StreamKey key{config.seed, 0};  // replicate 0 is the limits space
    const int n = config.grid.n_steps();
    const double dt = config.grid.dt();

    const std::size_t m = static_cast<std::size_t>(subject_count);
    std::vector<double> a(m), b(m);  // U/(1+s2 V), V/(1+s2 V)
    parallel_for(m, config.threads, [&](std::size_t i) {
        const auto effects = [&] {
            RngStream stream(key, Stream::Effects, i + 1);
            if (const auto* g = std::get_if<GaussianEffect>(&config.effect))
                return g->mean + std::sqrt(g->variance) * stream.normal();
            if (const auto* d = std::get_if<DegenerateEffect>(&config.effect)) return d->value;
            const auto& tab = std::get<TabulatedDensity>(config.effect);
            const double u01 = stream.uniform01();
            double acc = 0;
            for (std::size_t q = 0; q < tab.weights.size(); ++q) {
                acc += tab.weights[q];
                if (u01 <= acc) return tab.nodes[q];
            }
            return tab.nodes.back();
        }();
        std::vector<double> bm(static_cast<std::size_t>(n)), fgn(static_cast<std::size_t>(n));
        sample_mixed_increments(factor, key, i + 1, bm, fgn);
        std::vector<double> path(static_cast<std::size_t>(n) + 1);
        path[0] = config.x0;
        for (int k = 0; k < n; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            path[ks + 1] = path[ks] + effects * drift.base(path[ks]) * dt + bm[ks] + fgn[ks];
        }
        const auto [u, v] = subject_stats(path, table, drift);
        const double d = 1.0 + s2 * v;
        a[i] = u / d;
        b[i] = v / d;
    });

    LimitsEstimate out;
    out.subjects = subject_count;
    out.sigma0_sq = s2;
    double sa = 0, sb = 0, qa = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sa += a[i];
        sb += b[i];
        qa += a[i] * a[i];
    }
    const double md = static_cast<double>(subject_count);
    out.gamma0 = sa / sb;
    out.beta0 = sb / md;
    out.var_num = (qa - sa * sa / md) / (md - 1.0);

    // leave-one-out vectors, O(M)
    std::vector<double> loo(m);
    for (std::size_t i = 0; i < m; ++i) loo[i] = (sa - a[i]) / (sb - b[i]);
    out.gamma0_se = jackknife_se(loo);
    for (std::size_t i = 0; i < m; ++i) loo[i] = (sb - b[i]) / (md - 1.0);
    out.beta0_se = jackknife_se(loo);
    for (std::size_t i = 0; i < m; ++i) {
        const double s1 = sa - a[i];
        const double q1 = qa - a[i] * a[i];
        loo[i] = (q1 - s1 * s1 / (md - 1.0)) / (md - 2.0);
    }
    out.var_num_se = jackknife_se(loo);
    return out;
}

McReport run_study(const StudyConfig& config, bool resume, int stop_after, const KernelTable* shared_table) {
    if (config.replicates < 2) throw std::invalid_argument("run_study: need at least two replicates");
    const auto t_start = std::chrono::steady_clock::now();
    const auto& drift = linear_drift_of(config.drift);
    validate(config.effect);

    std::optional<KernelTable> own_table;
    if (!shared_table) own_table = KernelTable::solve(config.grid, config.hurst, config.solver);
    const KernelTable& table = shared_table ? *shared_table : *own_table;

    const bool writing = !config.out_dir.empty();
    fs::path rows_path;
    McReport report;
    if (writing) {
        fs::create_directories(config.out_dir);
        rows_path = fs::path(config.out_dir) / "replicates.csv";
    }

    int first = 1;
    if (writing && resume && fs::exists(rows_path)) {
        const auto existing = parse_rows(rows_path.string(), read_text_file(rows_path.string()));
        report.rows = existing;
        first = static_cast<int>(existing.size()) + 1;
        if (first > config.replicates + 1)
            throw DataError("resume: existing table has more rows than the configured replicate count");
    } else if (writing) {
        write_text_file(rows_path.string(), std::string(kRowHeader) + "\n");
    }

    const int last = stop_after >= 0 ? std::min(config.replicates, stop_after) : config.replicates;
    const int block = std::max(1, config.threads);
    for (int start = first; start <= last; start += block) {
        const int count = std::min(block, last - start + 1);
        std::vector<ReplicateRow> batch(static_cast<std::size_t>(count));
        parallel_for(static_cast<std::size_t>(count), config.threads, [&](std::size_t off) {
            const int r = start + static_cast<int>(off);
            ReplicateRow row;
            row.replicate = r;
            try {
                PanelOptions opt;
                opt.x0 = config.x0;
                const auto panel = simulate_panel(config.grid, config.hurst, config.drift, config.effect,
                                                  config.subjects, StreamKey{config.seed, static_cast<std::uint64_t>(r)},
                                                  opt);
                const auto stats = compute_stats(panel, table, drift);
                const auto est = run_estimator(stats, config.estimator);
                row.mu_hat = est.mu_hat;
                row.sigma2_hat = est.sigma2_hat;
                row.std_err = est.std_err;
                row.loglik = est.loglik;
                row.converged = est.converged;
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
            batch[off] = std::move(row);
        });
        if (writing) {
            std::ofstream out(rows_path, std::ios::binary | std::ios::app);
            if (!out) throw DataError("cannot append to " + rows_path.string());
            for (const auto& row : batch) out << csv_row(row);
            out.flush();
        }
        for (auto& row : batch) report.rows.push_back(std::move(row));
    }

    if (stop_after >= 0 && last < config.replicates) return report;  // partial run, no summary artifacts

    report.limits = estimate_limits(config, config.limits_subjects, table);
    report.summary = summarize_rows(report.rows, report.limits, effect_mean(config.effect));
    report.failed_study = report.summary.failures * 20 > config.replicates;  // > 5%

    if (writing) {
        write_text_file((fs::path(config.out_dir) / "summary.json").string(),
                        summary_to_json(config, report).dump(2) + "\n");
        write_plot_data(config, report.rows);
        const auto wall =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t_start);
        nlohmann::json meta;  // wall-clock data lives outside the primary artifacts
        meta["wall_ms"] = wall.count();
        meta["threads"] = config.threads;
        meta["version"] = kVersion;
        write_text_file((fs::path(config.out_dir) / "run_meta.json").string(), meta.dump(2) + "\n");
    }
    return report;
}

McReport load_report(const std::string& dir, double true_mu) {
    const auto rows_path = (fs::path(dir) / "replicates.csv").string();
    McReport report;
    report.rows = parse_rows(rows_path, read_text_file(rows_path));

    const auto j = nlohmann::json::parse(read_text_file((fs::path(dir) / "summary.json").string()));
    report.limits.subjects = j["limits"]["subjects"];
    report.limits.sigma0_sq = j["limits"]["sigma0_sq"];
    report.limits.gamma0 = j["limits"]["gamma0"];
    report.limits.gamma0_se = j["limits"]["gamma0_se"];
    report.limits.beta0 = j["limits"]["beta0"];
    report.limits.beta0_se = j["limits"]["beta0_se"];
    report.limits.var_num = j["limits"]["var_num"];
    report.limits.var_num_se = j["limits"]["var_num_se"];
    report.failed_study = j["failed_study"];

    report.summary = summarize_rows(report.rows, report.limits, true_mu);
    const auto& s = j["summary"];
    auto close = [](double stored, double recomputed) {
        if (std::isnan(stored) && std::isnan(recomputed)) return true;
        return std::abs(stored - recomputed) <= 1e-12 * std::max(1.0, std::abs(recomputed));
    };
    const double stored_ks = s["ks_stat"].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : s["ks_stat"].get<double>();
    if (static_cast<int>(s["replicates"]) != report.summary.replicates ||
        static_cast<int>(s["failures"]) != report.summary.failures ||
        !close(s["mean_mu"], report.summary.mean_mu) || !close(s["var_mu"], report.summary.var_mu) ||
        !close(s["skew_mu"], report.summary.skew_mu) || !close(s["kurt_mu"], report.summary.kurt_mu) ||
        !close(stored_ks, report.summary.ks_stat))
        throw DataError(dir + ": stored summary does not match the per-replicate table");
    return report;
}

}  // namespace mixedsde
