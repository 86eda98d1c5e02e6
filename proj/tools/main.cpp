// Command-line front end: simulate panels, estimate effect parameters from a
// panel CSV, run Monte Carlo studies, and manage the kernel table cache.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mixedsde/config.hpp"
#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/estimate.hpp"
#include "mixedsde/likelihood.hpp"
#include "mixedsde/mcstudy.hpp"
#include "mixedsde/parallel.hpp"
#include "mixedsde/sim.hpp"
#include "mixedsde/transform.hpp"
#include "mixedsde/version.hpp"

namespace fs = std::filesystem;
using namespace mixedsde;

namespace {

// exit codes are a stable contract
constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericalExit = 4;
constexpr int kPartialStudyExit = 5;

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> data_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool resume = false;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = RunConfig::load(args.config_path);
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    if (args.data_path) cfg.data_path = *args.data_path;
    cfg.threads = args.threads > 0 ? args.threads : default_thread_count();
    return cfg;
}

void write_panel_sidecar(const fs::path& path, const RunConfig& cfg, const SubjectPanel& panel) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["H"] = cfg.hurst;
    j["T"] = cfg.horizon;
    j["n_steps"] = cfg.n_steps;
    j["N"] = panel.subjects();
    j["drift"] = cfg.drift.value_or("zero");
    j["effect_dist"] = nlohmann::json::parse(effect_to_json_string(cfg.require_effect()));
    if (panel.effects) j["effects"] = *panel.effects;
    j["version"] = kVersion;
    j["format_version"] = kFileFormatVersion;
    write_text_file(path.string(), j.dump(2) + "\n");
}

int cmd_simulate(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const TimeGrid grid = cfg.grid();
    PanelOptions opt;
    opt.threads = cfg.threads;
    opt.x0 = cfg.x0;
    const auto panel = simulate_panel(grid, cfg.hurst, cfg.drift_spec(), cfg.require_effect(),
                                      cfg.require_subjects(), StreamKey{cfg.seed, 0}, opt);
    fs::create_directories(cfg.out_dir);
    write_panel_csv((fs::path(cfg.out_dir) / "panel.csv").string(), panel);
    write_panel_sidecar(fs::path(cfg.out_dir) / "panel.json", cfg, panel);
    std::printf("simulated %d subjects on [0, %s] with n=%d, H=%s, seed=%llu -> %s\n", panel.subjects(),
                format_g17(cfg.horizon).c_str(), cfg.n_steps, format_g17(cfg.hurst).c_str(),
                static_cast<unsigned long long>(cfg.seed), cfg.out_dir.c_str());
    return kOk;
}

KernelTable cached_kernel_table(const RunConfig& cfg) {
    const fs::path dir = cfg.cache_dir ? fs::path(*cfg.cache_dir) : fs::path(cfg.out_dir) / "kernel_cache";
    fs::create_directories(dir);
    const fs::path file =
        dir / (KernelTable::cache_key(cfg.horizon, cfg.n_steps, cfg.hurst, cfg.solver.tolerance) + ".bin");
    if (fs::exists(file)) {
        try {
            KernelTable table = KernelTable::load(file.string());
            if (table.grid() == cfg.grid() && table.hurst() == cfg.hurst) {
                std::fprintf(stderr, "kernel cache hit: %s\n", file.string().c_str());
                return table;
            }
        } catch (const DataError&) {
            // fall through to a fresh solve on a stale or corrupt cache entry
        }
    }
    KernelSolverConfig solver = cfg.solver;
    solver.threads = cfg.threads;
    KernelTable table = KernelTable::solve(cfg.grid(), cfg.hurst, solver);
    table.save(file.string());
    std::fprintf(stderr, "kernel cache store: %s\n", file.string().c_str());
    return table;
}

int cmd_estimate(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    if (!cfg.data_path) throw ConfigError("estimate: no data file (pass --data or set data.path)");
    const auto panel = read_panel_csv(*cfg.data_path, cfg.hurst);
    if (!(panel.grid == cfg.grid()))
        throw DataError(*cfg.data_path + ": panel grid does not match the configured (T, n_steps) grid");

    const KernelTable table = cached_kernel_table(cfg);
    const DriftSpec drift = cfg.drift_spec();
    const auto& lm = std::get<LinearMultiplierDrift>(drift);
    const auto stats = compute_stats(panel, table, lm);

    EstimationResult result;
    switch (cfg.require_method()) {
        case EstimatorKind::MuKnownVar: {
            const double mu = mle_mu_known_var(stats, cfg.est_sigma0_sq);
            result.method = EstimateMethod::ClosedForm;
            result.theta_hat = {mu, cfg.est_sigma0_sq};
            result.converged = true;
            result.loglik_at_max = panel_loglik(stats, GaussianEffect{mu, cfg.est_sigma0_sq});
            result.std_err = {mu_std_err(stats, mu, cfg.est_sigma0_sq)};
            break;
        }
        case EstimatorKind::Joint: {
            result = mle_joint(stats, {}, cfg.joint);
            result.std_err = {mu_std_err(stats, result.theta_hat[0], result.theta_hat[1])};
            break;
        }
        case EstimatorKind::Direct: {
            const auto family = gaussian_family(cfg.direct_mu_lo, cfg.direct_mu_hi, cfg.direct_s2_max);
            const double mu0 = std::clamp(mle_mu_known_var(stats, 0.0), cfg.direct_mu_lo, cfg.direct_mu_hi);
            const std::vector<double> init{mu0, 0.1};
            result = mle_direct(stats, family, init, cfg.direct);
            result.std_err = {mu_std_err(stats, result.theta_hat[0], result.theta_hat[1])};
            break;
        }
    }

    fs::create_directories(cfg.out_dir);
    write_stats_csv((fs::path(cfg.out_dir) / "stats.csv").string(), stats);
    write_text_file((fs::path(cfg.out_dir) / "estimate.json").string(), estimation_result_to_json(result));
    std::printf("estimate: mu_hat=%s", format_g17(result.theta_hat[0]).c_str());
    if (result.theta_hat.size() > 1) std::printf(" sigma2_hat=%s", format_g17(result.theta_hat[1]).c_str());
    std::printf(" converged=%d -> %s\n", result.converged ? 1 : 0, cfg.out_dir.c_str());
    return kOk;
}

int cmd_study(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const StudyConfig sc = cfg.study_config();
    const auto report = run_study(sc, args.resume);
    std::printf("study: %d replicates, %d failures, mean_mu=%s, gamma0_hat=%s -> %s\n", report.summary.replicates,
                report.summary.failures, format_g17(report.summary.mean_mu).c_str(),
                format_g17(report.limits.gamma0).c_str(), sc.out_dir.c_str());
    if (report.failed_study) {
        std::fprintf(stderr, "study failed: more than 5%% of replicates errored\n");
        return kPartialStudyExit;
    }
    return kOk;
}

int cmd_kernel_cache(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const KernelTable table = cached_kernel_table(cfg);
    std::printf("kernel table: n=%d H=%s residual=%s key=%s\n", table.n_steps(), format_g17(table.hurst()).c_str(),
                format_g17(table.residual_norm()).c_str(), table.cache_key().c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed fractional Brownian motion panels: simulation and random-effect MLE"};
    app.set_version_flag("--version", std::string("mixedsde ") + kVersion + " (solver v" +
                                          std::to_string(kKernelSolverVersion) + ", format v" +
                                          std::to_string(kFileFormatVersion) + ")");
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* cmd, bool with_data) {
        cmd->add_option("--config", args.config_path, "configuration file")->required();
        if (with_data) cmd->add_option("--data", args.data_path, "panel CSV path");
        cmd->add_option("--out", args.out_dir, "output directory (overrides output.dir)");
        cmd->add_option("--seed", args.seed, "seed override (u64)");
        cmd->add_option("--threads", args.threads, "worker thread cap (default: available cores)");
        return cmd;
    };

    auto* simulate = add_common(app.add_subcommand("simulate", "simulate a panel and write CSV + sidecar"), false);
    auto* estimate = add_common(app.add_subcommand("estimate", "estimate effect parameters from a panel"), true);
    auto* study = add_common(app.add_subcommand("study", "run a Monte Carlo study"), false);
    study->add_flag("--resume", args.resume, "resume from an interrupted per-replicate table");
    auto* kcache = add_common(app.add_subcommand("kernel-cache", "solve and cache the kernel table"), false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return kConfigExit;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (estimate->parsed()) return cmd_estimate(args);
        if (study->parsed()) return cmd_study(args);
        if (kcache->parsed()) return cmd_kernel_cache(args);
        return kConfigExit;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigExit;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kDataExit;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kNumericalExit;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumericalExit;
    }
}
