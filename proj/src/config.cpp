#include "mixedsde/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/parallel.hpp"

namespace mixedsde {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

const std::set<std::pair<std::string, std::string>> kSchema = {
    {"model", "H"},          {"model", "T"},           {"model", "n_steps"},
    {"model", "drift"},      {"model", "effect"},      {"model", "mu"},
    {"model", "sigma0_sq"},  {"model", "psi"},         {"model", "nodes"},
    {"model", "weights"},    {"data", "source"},       {"data", "subjects"},
    {"data", "x0"},          {"data", "path"},         {"solver", "tolerance"},
    {"solver", "cache_dir"}, {"estimator", "method"},  {"estimator", "sigma0_sq"},
    {"estimator", "sigma2_max"}, {"estimator", "residual_tol"}, {"estimator", "max_iter"},
    {"estimator", "mu_lo"},  {"estimator", "mu_hi"},   {"study", "replicates"},
    {"study", "limits_subjects"}, {"rng", "seed"},     {"output", "dir"},
};

std::vector<double> parse_double_list(const std::string& value, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), what));
    if (out.empty()) throw ConfigError(what + ": empty list");
    return out;
}

}  // namespace

IniFile IniFile::parse(const std::string& text, const std::string& origin) {
    IniFile file;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(where + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (section.empty()) throw ConfigError(where + ": key outside any section");
        if (!file.entries_.emplace(std::make_pair(section, key), value).second)
            throw ConfigError(where + ": duplicate key " + section + "." + key);
    }
    return file;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse(text, path);
}

std::optional<std::string> IniFile::get(const std::string& section, const std::string& key) const {
    const auto it = entries_.find({section, key});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

RunConfig RunConfig::load(const std::string& path) {
    const IniFile ini = IniFile::parse_file(path);
    for (const auto& [sk, value] : ini.entries()) {
        (void)value;
        if (!kSchema.count(sk)) throw ConfigError(path + ": unknown key " + sk.first + "." + sk.second);
    }

    auto required = [&](const std::string& section, const std::string& key) {
        const auto v = ini.get(section, key);
        if (!v) throw ConfigError(path + ": missing required key " + section + "." + key);
        return *v;
    };
    auto as_double = [&](const std::string& s, const std::string& k) {
        try {
            return parse_double(required(s, k), s + "." + k);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    };
    auto opt_double = [&](const std::string& s, const std::string& k, double fallback) {
        const auto v = ini.get(s, k);
        if (!v) return fallback;
        try {
            return parse_double(*v, s + "." + k);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    };
    auto opt_int = [&](const std::string& s, const std::string& k, long long fallback) {
        const auto v = ini.get(s, k);
        if (!v) return fallback;
        try {
            return parse_int(*v, s + "." + k);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    };

    RunConfig cfg;
    cfg.hurst = as_double("model", "H");
    cfg.horizon = as_double("model", "T");
    cfg.n_steps = static_cast<int>(opt_int("model", "n_steps", -1));
    if (cfg.n_steps < 0) throw ConfigError(path + ": missing required key model.n_steps");
    if (!(cfg.hurst >= 0.5 && cfg.hurst < 1.0))
        throw ConfigError(path + ": model.H must lie in [0.5, 1), got " + format_g17(cfg.hurst));
    if (!(cfg.horizon > 0)) throw ConfigError(path + ": model.T must be positive");
    if (cfg.n_steps < 1) throw ConfigError(path + ": model.n_steps must be >= 1");

    cfg.drift = ini.get("model", "drift");
    if (cfg.drift) {
        try {
            builtin_drift(*cfg.drift);  // fail early on unknown names
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path + ": model.drift: " + e.what());
        }
    }

    if (const auto fam = ini.get("model", "effect")) {
        if (*fam == "gaussian") {
            GaussianEffect g{as_double("model", "mu"), as_double("model", "sigma0_sq")};
            cfg.effect = g;
        } else if (*fam == "degenerate") {
            cfg.effect = DegenerateEffect{as_double("model", "psi")};
        } else if (*fam == "tabulated") {
            TabulatedDensity t;
            t.nodes = parse_double_list(required("model", "nodes"), "model.nodes");
            t.weights = parse_double_list(required("model", "weights"), "model.weights");
            cfg.effect = t;
        } else {
            throw ConfigError(path + ": model.effect must be gaussian|degenerate|tabulated");
        }
        try {
            validate(*cfg.effect);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    if (const auto src = ini.get("data", "source")) {
        if (*src == "simulate")
            cfg.source = DataSource::Simulate;
        else if (*src == "ingest")
            cfg.source = DataSource::Ingest;
        else
            throw ConfigError(path + ": data.source must be simulate|ingest");
    }
    if (const auto n = ini.get("data", "subjects")) {
        cfg.subjects = static_cast<int>(opt_int("data", "subjects", 0));
        if (*cfg.subjects < 1) throw ConfigError(path + ": data.subjects must be >= 1");
    }
    if (const auto x0 = ini.get("data", "x0")) {
        const auto values = parse_double_list(*x0, "data.x0");
        if (values.size() == 1)
            cfg.x0 = values[0];
        else
            cfg.x0 = values;
    }
    cfg.data_path = ini.get("data", "path");

    cfg.solver.tolerance = opt_double("solver", "tolerance", cfg.solver.tolerance);
    if (!(cfg.solver.tolerance > 0)) throw ConfigError(path + ": solver.tolerance must be positive");
    cfg.cache_dir = ini.get("solver", "cache_dir");

    if (const auto m = ini.get("estimator", "method")) {
        if (*m == "mu_known_var")
            cfg.method = EstimatorKind::MuKnownVar;
        else if (*m == "joint")
            cfg.method = EstimatorKind::Joint;
        else if (*m == "direct")
            cfg.method = EstimatorKind::Direct;
        else
            throw ConfigError(path + ": estimator.method must be mu_known_var|joint|direct");
    }
    cfg.est_sigma0_sq = opt_double("estimator", "sigma0_sq", 0.0);
    if (!(cfg.est_sigma0_sq >= 0)) throw ConfigError(path + ": estimator.sigma0_sq must be >= 0");
    cfg.joint.sigma2_max = opt_double("estimator", "sigma2_max", cfg.joint.sigma2_max);
    cfg.joint.residual_tol = opt_double("estimator", "residual_tol", cfg.joint.residual_tol);
    cfg.joint.max_iter = static_cast<int>(opt_int("estimator", "max_iter", cfg.joint.max_iter));
    cfg.direct_mu_lo = opt_double("estimator", "mu_lo", cfg.direct_mu_lo);
    cfg.direct_mu_hi = opt_double("estimator", "mu_hi", cfg.direct_mu_hi);
    cfg.direct_s2_max = cfg.joint.sigma2_max;

    if (ini.get("study", "replicates")) {
        cfg.replicates = static_cast<int>(opt_int("study", "replicates", 0));
        if (*cfg.replicates < 2) throw ConfigError(path + ": study.replicates must be >= 2");
    }
    cfg.limits_subjects = static_cast<int>(opt_int("study", "limits_subjects", cfg.limits_subjects));
    if (cfg.limits_subjects < 2) throw ConfigError(path + ": study.limits_subjects must be >= 2");

    cfg.seed = static_cast<std::uint64_t>(opt_int("rng", "seed", 0));
    if (const auto dir = ini.get("output", "dir")) cfg.out_dir = *dir;
    return cfg;
}

DriftSpec RunConfig::drift_spec() const {
    if (!drift) throw ConfigError("missing required key model.drift");
    return builtin_drift(*drift);
}

const EffectDistribution& RunConfig::require_effect() const {
    if (!effect) throw ConfigError("missing required key model.effect");
    return *effect;
}

int RunConfig::require_subjects() const {
    if (!subjects) throw ConfigError("missing required key data.subjects");
    return *subjects;
}

EstimatorKind RunConfig::require_method() const {
    if (!method) throw ConfigError("missing required key estimator.method");
    return *method;
}

int RunConfig::require_replicates() const {
    if (!replicates) throw ConfigError("missing required key study.replicates");
    return *replicates;
}

StudyConfig RunConfig::study_config() const {
    StudyConfig sc;
    sc.grid = grid();
    sc.hurst = hurst;
    sc.drift = drift_spec();
    sc.effect = require_effect();
    sc.subjects = require_subjects();
    sc.replicates = require_replicates();
    sc.seed = seed;
    sc.estimator.kind = require_method();
    sc.estimator.sigma0_sq = est_sigma0_sq;
    sc.estimator.joint = joint;
    sc.estimator.direct = direct;
    sc.estimator.direct_mu_lo = direct_mu_lo;
    sc.estimator.direct_mu_hi = direct_mu_hi;
    sc.estimator.direct_s2_max = direct_s2_max;
    sc.limits_subjects = limits_subjects;
    sc.out_dir = out_dir;
    sc.threads = threads > 0 ? threads : default_thread_count();
    sc.solver = solver;
    sc.solver.threads = sc.threads;
    if (const auto* shared = std::get_if<double>(&x0)) sc.x0 = *shared;
    return sc;
}

std::string effect_to_json_string(const EffectDistribution& dist) {
    nlohmann::json j;
    if (const auto* g = std::get_if<GaussianEffect>(&dist)) {
        j["family"] = "gaussian";
        j["mu"] = g->mean;
        j["sigma0_sq"] = g->variance;
    } else if (const auto* d = std::get_if<DegenerateEffect>(&dist)) {
        j["family"] = "degenerate";
        j["psi"] = d->value;
    } else {
        const auto& t = std::get<TabulatedDensity>(dist);
        j["family"] = "tabulated";
        j["nodes"] = t.nodes;
        j["weights"] = t.weights;
    }
    return j.dump();
}

}  // namespace mixedsde
