#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mixedsde/grid.hpp"
#include "mixedsde/kernel.hpp"
#include "mixedsde/mcstudy.hpp"
#include "mixedsde/sim.hpp"

namespace mixedsde {

/// Sectioned key-value configuration file: `[section]` headers, `key = value`
/// lines, `#` comments. Unknown sections or keys are rejected.
class IniFile {
  public:
    static IniFile parse(const std::string& text, const std::string& origin);
    static IniFile parse_file(const std::string& path);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    const std::map<std::pair<std::string, std::string>, std::string>& entries() const { return entries_; }

  private:
    std::map<std::pair<std::string, std::string>, std::string> entries_;
};

enum class DataSource { Simulate, Ingest };

/// Validated run configuration. Keys required by every command: model.H,
/// model.T, model.n_steps. Command-specific requirements (data.subjects,
/// estimator.method, study.replicates, ...) are checked by require_*().
struct RunConfig {
    // [model]
    double hurst = 0;
    double horizon = 0;
    int n_steps = 0;
    std::optional<std::string> drift;
    std::optional<EffectDistribution> effect;
    // [data]
    DataSource source = DataSource::Simulate;
    std::optional<int> subjects;
    std::variant<double, std::vector<double>> x0 = 0.0;
    std::optional<std::string> data_path;
    // [solver]
    KernelSolverConfig solver;
    std::optional<std::string> cache_dir;
    // [estimator]
    std::optional<EstimatorKind> method;
    double est_sigma0_sq = 0.0;
    JointConfig joint;
    DirectConfig direct;
    double direct_mu_lo = -10.0, direct_mu_hi = 10.0, direct_s2_max = 100.0;
    // [study]
    std::optional<int> replicates;
    int limits_subjects = 20000;
    // [rng] / [output]
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int threads = 0;  // 0: decided by the CLI (--threads or core count)

    static RunConfig load(const std::string& path);

    TimeGrid grid() const { return TimeGrid(horizon, n_steps); }
    DriftSpec drift_spec() const;
    const EffectDistribution& require_effect() const;
    int require_subjects() const;
    EstimatorKind require_method() const;
    int require_replicates() const;

    StudyConfig study_config() const;
};

/// JSON description of an effect distribution for sidecar files.
std::string effect_to_json_string(const EffectDistribution& dist);

}  // namespace mixedsde
