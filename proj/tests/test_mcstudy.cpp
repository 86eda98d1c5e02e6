#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/mcstudy.hpp"
#include "mixedsde/stats.hpp"

using namespace mixedsde;
namespace fs = std::filesystem;

namespace {

StudyConfig toy_config(const std::string& out_dir) {
    StudyConfig cfg;
    cfg.grid = TimeGrid(1.0, 24);
    cfg.hurst = 0.7;
    cfg.drift = builtin_drift("invquad");
    cfg.effect = GaussianEffect{1.0, 0.25};
    cfg.subjects = 12;
    cfg.replicates = 6;
    cfg.seed = 404;
    cfg.estimator.kind = EstimatorKind::MuKnownVar;
    cfg.estimator.sigma0_sq = 0.25;
    cfg.limits_subjects = 300;
    cfg.out_dir = out_dir;
    cfg.threads = 2;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("normality test oracle values") {
    SUBCASE("exact normal quantile points maximize the p-value") {
        std::vector<double> q(1000);
        for (int i = 0; i < 1000; ++i) q[static_cast<std::size_t>(i)] = normal_quantile((i + 0.5) / 1000.0);
        const auto r = normality_test(q);
        CHECK(r.p_value > 0.99);
    }
    SUBCASE("uniform samples are rejected") {
        // the deterministic uniform-vs-normal KS distance is ~0.057, so the
        // asymptotic p-value at n=1000 sits near 2e-3 (scipy agrees); the
        // test rejects decisively at the 0.01 level used everywhere here
        std::mt19937_64 eng(12345);
        std::uniform_real_distribution<double> unif;
        std::vector<double> u(1000);
        for (auto& x : u) x = unif(eng);
        const auto r = normality_test(u);
        CHECK(r.p_value < 0.01);
    }
    SUBCASE("degenerate and undersized samples are errors") {
        const std::vector<double> constant(500, 3.0);
        CHECK_THROWS_AS(normality_test(constant), NumericalError);
        const std::vector<double> small(50, 1.0);
        CHECK_THROWS_AS(normality_test(small), std::invalid_argument);
    }
}

TEST_CASE("limit estimation closed cases") {
    StudyConfig cfg = toy_config("");
    cfg.grid = TimeGrid(1.0, 30);
    const auto table = KernelTable::solve(cfg.grid, cfg.hurst);
    const int n = cfg.grid.n_steps();

    SUBCASE("deterministic V under a constant base drift") {
        cfg.drift = builtin_drift("constant:1.5");
        cfg.effect = DegenerateEffect{0.7};
        cfg.estimator.sigma0_sq = 0.25;
        const auto limits = estimate_limits(cfg, 500, table);
        const double v = 1.5 * 1.5 * table.w(n);
        CHECK(limits.beta0 == doctest::Approx(v / (1 + 0.25 * v)).epsilon(1e-10));
        CHECK(limits.beta0_se == 0.0);
    }
    SUBCASE("zero known variance reduces beta0 to the mean of V") {
        cfg.estimator.sigma0_sq = 0.0;
        const auto limits = estimate_limits(cfg, 400, table);
        // the limits run shares the replicate-0 subject streams with a panel of the same key
        const auto panel = simulate_panel(cfg.grid, cfg.hurst, cfg.drift, cfg.effect, 400, StreamKey{cfg.seed, 0});
        const auto stats = compute_stats(panel, table, std::get<LinearMultiplierDrift>(cfg.drift));
        CHECK(limits.beta0 == doctest::Approx(mean(stats.v)).epsilon(1e-12));
    }
    SUBCASE("jackknife standard error halves when the subject count doubles") {
        const auto a = estimate_limits(cfg, 1500, table);
        const auto b = estimate_limits(cfg, 3000, table);
        const double ratio = a.gamma0_se / b.gamma0_se;
        CHECK(ratio > 1.3);
        CHECK(ratio < 2.7);
    }
}

TEST_CASE("SLLN cross-check between a panel average and an independent limits run") {
    StudyConfig cfg = toy_config("");
    cfg.grid = TimeGrid(1.0, 30);
    const auto table = KernelTable::solve(cfg.grid, cfg.hurst);
    const auto limits = estimate_limits(cfg, 4000, table);

    StudyConfig other = cfg;
    other.seed = 999;  // independent draw
    const int subjects = 4000;
    const auto check = estimate_limits(other, subjects, table);
    const double combined = std::hypot(limits.beta0_se, check.beta0_se);
    CHECK(std::abs(check.beta0 - limits.beta0) < 4 * combined);
}

TEST_CASE("study with no drift information records total failure") {
    TempDir dir("msde_fail_study");
    StudyConfig cfg = toy_config((dir.path / "out").string());
    cfg.drift = builtin_drift("zero");
    cfg.effect = DegenerateEffect{1.0};
    cfg.replicates = 2;
    cfg.estimator.sigma0_sq = 0.0;
    const auto report = run_study(cfg);
    CHECK(report.summary.failures == 2);
    CHECK(report.failed_study);
    for (const auto& row : report.rows) {
        CHECK(row.failed);
        CHECK(row.error.find("no drift information") != std::string::npos);
    }
}

TEST_CASE("studies are deterministic and resumable") {
    TempDir dir("msde_study_det");
    StudyConfig cfg = toy_config((dir.path / "a").string());

    SUBCASE("same seed gives byte-identical artifacts across thread counts") {
        const auto a = run_study(cfg);
        StudyConfig cfg_b = cfg;
        cfg_b.out_dir = (dir.path / "b").string();
        cfg_b.threads = 4;
        const auto b = run_study(cfg_b);
        CHECK(a.summary.mean_mu == b.summary.mean_mu);
        for (const char* name : {"replicates.csv", "summary.json", "hist.csv", "qq.csv"})
            CHECK(read_text_file((fs::path(cfg.out_dir) / name).string()) ==
                  read_text_file((fs::path(cfg_b.out_dir) / name).string()));
    }

    SUBCASE("resume after an interruption reproduces the uninterrupted run") {
        const auto full = run_study(cfg);
        StudyConfig cfg_c = cfg;
        cfg_c.out_dir = (dir.path / "c").string();
        run_study(cfg_c, false, 2);  // stop early: rows 1..2 persisted
        const auto resumed = run_study(cfg_c, true);
        CHECK(read_text_file((fs::path(cfg.out_dir) / "replicates.csv").string()) ==
              read_text_file((fs::path(cfg_c.out_dir) / "replicates.csv").string()));
        CHECK(read_text_file((fs::path(cfg.out_dir) / "summary.json").string()) ==
              read_text_file((fs::path(cfg_c.out_dir) / "summary.json").string()));
        CHECK(resumed.summary.mean_mu == full.summary.mean_mu);
    }
}

TEST_CASE("summaries are recomputable, order-invariant, and validated on load") {
    TempDir dir("msde_study_load");
    StudyConfig cfg = toy_config((dir.path / "out").string());
    const auto report = run_study(cfg);

    SUBCASE("load revalidates") {
        const auto loaded = load_report(cfg.out_dir, effect_mean(cfg.effect));
        CHECK(loaded.summary.mean_mu == report.summary.mean_mu);
        CHECK(loaded.limits.gamma0 == report.limits.gamma0);
    }
    SUBCASE("row order does not change the summary") {
        auto shuffled = report.rows;
        std::reverse(shuffled.begin(), shuffled.end());
        std::swap(shuffled.front(), shuffled[shuffled.size() / 2]);
        const auto again = summarize_rows(shuffled, report.limits, effect_mean(cfg.effect));
        CHECK(again.mean_mu == report.summary.mean_mu);
        CHECK(again.var_mu == report.summary.var_mu);
        CHECK(again.skew_mu == doctest::Approx(report.summary.skew_mu).epsilon(1e-12));
        CHECK(again.failures == report.summary.failures);
    }
    SUBCASE("tampering with the summary is caught") {
        const auto path = (fs::path(cfg.out_dir) / "summary.json").string();
        auto text = read_text_file(path);
        const auto pos = text.find("\"mean_mu\"");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 9, "\"mean_mu_\"");
        // renamed key -> recompute mismatch (missing key throws through nlohmann)
        write_text_file(path, text);
        CHECK_THROWS(load_report(cfg.out_dir, effect_mean(cfg.effect)));
    }
}
