#include "mixedsde/estimate.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/stats.hpp"

namespace mixedsde {

namespace {

void require_information(const SufficientStats& stats) {
    for (double v : stats.v)
        if (v > 0) return;
    throw NoInformationError("all V_i are zero: the panel carries no drift information");
}

// Eq (mean): weighted mu update at fixed variance.
double mu_update(const SufficientStats& stats, double s2) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < stats.u.size(); ++i) {
        const double d = 1.0 + s2 * stats.v[i];
        num += stats.u[i] / d;
        den += stats.v[i] / d;
    }
    if (!(den > 0)) throw NoInformationError("degenerate mean equation: sum of weighted V is zero");
    return num / den;
}

// Eq (variance): score residual sum (u - mu v)^2/(1+s2 v)^2 - sum v/(1+s2 v).
double variance_residual(const SufficientStats& stats, double mu, double s2) {
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < stats.u.size(); ++i) {
        const double d = 1.0 + s2 * stats.v[i];
        const double r = stats.u[i] - mu * stats.v[i];
        lhs += (r * r) / (d * d);
        rhs += stats.v[i] / d;
    }
    return lhs - rhs;
}

double mean_equation_residual(const SufficientStats& stats, double mu, double s2) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < stats.u.size(); ++i) {
        const double d = 1.0 + s2 * stats.v[i];
        num += stats.u[i] / d;
        den += stats.v[i] / d;
    }
    return mu * den - num;
}

bool v_nearly_constant(const SufficientStats& stats, double cv_epsilon) {
    if (stats.v.size() < 2) return true;
    const double m = mean(stats.v);
    if (m == 0) return true;
    return std_dev(stats.v) / std::abs(m) < cv_epsilon;
}

}  // namespace

double mle_mu_known_var(const SufficientStats& stats, double sigma0_sq) {
    if (stats.u.empty()) throw std::invalid_argument("mle_mu_known_var: empty stats");
    if (!(sigma0_sq >= 0)) throw std::invalid_argument("mle_mu_known_var: sigma0_sq must be >= 0");
    require_information(stats);
    return mu_update(stats, sigma0_sq);
}

double mu_std_err(const SufficientStats& stats, double mu, double sigma0_sq) {
    double info = 0;
    for (std::size_t i = 0; i < stats.u.size(); ++i) {
        const double s = (stats.u[i] - mu * stats.v[i]) / (1.0 + sigma0_sq * stats.v[i]);
        info += s * s;
    }
    return info > 0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
}

EstimationResult mle_joint(const SufficientStats& stats, std::optional<std::pair<double, double>> init,
                           const JointConfig& config) {
    if (stats.subjects() < 2) throw std::invalid_argument("mle_joint: need at least two subjects");
    require_information(stats);

    double mu, s2;
    if (init) {
        mu = init->first;
        s2 = std::clamp(init->second, 0.0, config.sigma2_max);
    } else {
        mu = mu_update(stats, 0.0);
        // method-of-moments start: var(u/v) - mean(1/v) over subjects with usable V
        std::vector<double> ratios, inv_v;
        for (std::size_t i = 0; i < stats.v.size(); ++i) {
            if (stats.v[i] > 1e-12) {
                ratios.push_back(stats.u[i] / stats.v[i]);
                inv_v.push_back(1.0 / stats.v[i]);
            }
        }
        s2 = 0.0;
        if (ratios.size() >= 2) s2 = std::clamp(variance(ratios) - mean(inv_v), 0.0, config.sigma2_max);
    }

    auto solve_s2 = [&](double at_mu, bool* boundary) -> double {
        *boundary = false;
        const double r0 = variance_residual(stats, at_mu, 0.0);
        if (r0 <= 0) {
            *boundary = true;
            return 0.0;
        }
        double hi = config.sigma2_max;
        if (variance_residual(stats, at_mu, hi) >= 0) {
            *boundary = true;
            return hi;
        }
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (variance_residual(stats, at_mu, mid) > 0)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };

    EstimationResult result;
    result.method = EstimateMethod::JointSystem;
    result.sigma2_unidentifiable = v_nearly_constant(stats, config.cv_epsilon);

    bool boundary = false;
    bool stepped_converged = false;
    int iter = 0;
    for (; iter < config.max_iter; ++iter) {
        const double mu_new = mu_update(stats, s2);
        const double s2_new = solve_s2(mu_new, &boundary);
        const bool small_step = std::abs(mu_new - mu) <= 1e-13 * (1.0 + std::abs(mu_new)) &&
                                std::abs(s2_new - s2) <= 1e-13 * (1.0 + s2_new);
        mu = mu_new;
        s2 = s2_new;
        if (small_step) {
            stepped_converged = true;
            ++iter;
            break;
        }
    }
    result.iterations = iter;

    auto finalize = [&](double at_mu, double at_s2) {
        result.theta_hat = {at_mu, at_s2};
        result.at_boundary = (at_s2 <= 0.0 || at_s2 >= config.sigma2_max);
        result.equation_residuals[0] = mean_equation_residual(stats, at_mu, at_s2);
        result.equation_residuals[1] = variance_residual(stats, at_mu, at_s2);
        result.loglik_at_max = panel_loglik(stats, GaussianEffect{at_mu, at_s2});
        const double r1 = std::abs(result.equation_residuals[0]);
        const double r2 = result.equation_residuals[1];
        if (!result.at_boundary) {
            result.converged = stepped_converged && r1 <= config.residual_tol && std::abs(r2) <= config.residual_tol;
        } else if (at_s2 <= 0.0) {
            // at zero the variance score must push downward
            result.converged = stepped_converged && r1 <= config.residual_tol && r2 <= config.residual_tol;
        } else {
            result.converged = stepped_converged && r1 <= config.residual_tol && r2 >= -config.residual_tol;
        }
    };
    finalize(mu, s2);

    if (!result.converged) {
        // derivative-free fallback on the log-likelihood surface
        double spread = 1.0;
        {
            std::vector<double> ratios;
            for (std::size_t i = 0; i < stats.v.size(); ++i)
                if (stats.v[i] > 1e-12) ratios.push_back(stats.u[i] / stats.v[i]);
            if (ratios.size() >= 2) spread = std::max(1.0, std_dev(ratios));
        }
        const double mu0 = mu_update(stats, 0.0);
        const std::vector<double> lower{mu0 - 10 * spread, 0.0};
        const std::vector<double> upper{mu0 + 10 * spread, config.sigma2_max};
        const std::vector<double> start{mu, s2};
        auto objective = [&](std::span<const double> theta) {
            return -panel_loglik(stats, GaussianEffect{theta[0], theta[1]});
        };
        const auto nm = nelder_mead(objective, start, lower, upper, 1e-10, 1e-13, 4000);
        stepped_converged = nm.converged;
        result.iterations += nm.iterations;
        finalize(nm.x[0], nm.x[1]);
    }
    return result;
}

EffectFamily gaussian_family(double mu_lo, double mu_hi, double s2_max) {
    EffectFamily family;
    family.dim = 2;
    family.make = [](std::span<const double> theta) {
        return EffectDistribution{GaussianEffect{theta[0], std::max(0.0, theta[1])}};
    };
    family.lower = {mu_lo, 0.0};
    family.upper = {mu_hi, s2_max};
    return family;
}

EstimationResult mle_direct(const SufficientStats& stats, const EffectFamily& family, std::span<const double> init,
                            const DirectConfig& config) {
    if (static_cast<int>(init.size()) != family.dim) throw std::invalid_argument("mle_direct: init has wrong dimension");
    auto objective = [&](std::span<const double> theta) { return -panel_loglik(stats, family.make(theta)); };
    const auto nm = nelder_mead(objective, init, family.lower, family.upper, config.xtol, config.ftol,
                                config.max_iter);

    EstimationResult result;
    result.method = EstimateMethod::DirectMax;
    result.theta_hat = nm.x;
    result.loglik_at_max = -nm.fmin;
    result.iterations = nm.iterations;

    // projected gradient of the log-likelihood (central differences, one-sided at active bounds)
    double worst = 0;
    bool boundary = false;
    for (int j = 0; j < family.dim; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        const double h = 1e-5 * (1.0 + std::abs(nm.x[js]));
        std::vector<double> lo_pt(nm.x), hi_pt(nm.x);
        const bool at_lower = nm.x[js] - h < family.lower[js];
        const bool at_upper = nm.x[js] + h > family.upper[js];
        double d;
        if (at_lower && at_upper) {
            d = 0;  // box thinner than the step
        } else if (at_lower) {
            boundary = true;
            hi_pt[js] += h;
            d = (objective(hi_pt) - nm.fmin) / h;
            d = std::min(d, 0.0);  // only an inward descent direction counts against stationarity
        } else if (at_upper) {
            boundary = true;
            lo_pt[js] -= h;
            d = (nm.fmin - objective(lo_pt)) / h;
            d = std::max(d, 0.0);
        } else {
            hi_pt[js] += h;
            lo_pt[js] -= h;
            d = (objective(hi_pt) - objective(lo_pt)) / (2 * h);
        }
        worst = std::max(worst, std::abs(d));
    }
    result.at_boundary = boundary;
    result.converged = nm.converged && worst <= config.grad_tol;
    return result;
}

FisherResult fisher_information(const EffectFamily& family, std::span<const double> theta,
                                const SubjectSampler& sampler, int replicates, double rel_step) {
    const int k = family.dim;
    if (static_cast<int>(theta.size()) != k) throw std::invalid_argument("fisher_information: theta dimension");
    if (replicates < 2) throw std::invalid_argument("fisher_information: need at least two replicates");

    std::vector<double> step(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        double h = rel_step * (1.0 + std::abs(theta[js]));
        h = std::min({h, theta[js] - family.lower[js], family.upper[js] - theta[js]});
        if (!(h > 0))
            throw std::invalid_argument("fisher_information: theta must be interior to the family box");
        step[js] = h;
    }

    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd score(k);
    std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
    for (int m = 0; m < replicates; ++m) {
        const auto [u, v] = sampler(static_cast<std::uint64_t>(m) + 1);
        for (int j = 0; j < k; ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            plus[js] = theta[js] + step[js];
            minus[js] = theta[js] - step[js];
            const double up = log_lambda(u, v, family.make(plus));
            const double dn = log_lambda(u, v, family.make(minus));
            score(j) = (up - dn) / (2 * step[js]);
            plus[js] = theta[js];
            minus[js] = theta[js];
        }
        info += score * score.transpose();
    }
    info /= static_cast<double>(replicates);

    FisherResult result{info, true, replicates};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const double scale = std::max(1e-300, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale) result.psd_ok = false;
    return result;
}

// ---------------------------------------------------------------------------

namespace {
// strict value ordering inside the simplex loop; the smaller-variance tie
// break applies only to the returned point
bool better(double fa, double fb) { return fa < fb; }
}  // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::span<const double> x0,
                             std::span<const double> lower, std::span<const double> upper, double xtol, double ftol,
                             int max_iter) {
    const std::size_t n = x0.size();
    if (n == 0 || lower.size() != n || upper.size() != n) throw std::invalid_argument("nelder_mead: bad dimensions");

    auto clamp_point = [&](std::vector<double>& x) {
        for (std::size_t j = 0; j < n; ++j) x[j] = std::clamp(x[j], lower[j], upper[j]);
    };

    std::vector<std::vector<double>> simplex;
    simplex.emplace_back(x0.begin(), x0.end());
    clamp_point(simplex[0]);
    for (std::size_t j = 0; j < n; ++j) {
        auto vertex = simplex[0];
        double step = 0.05 * (upper[j] - lower[j]);
        if (!(step > 0)) step = 0.1 * (1.0 + std::abs(vertex[j]));
        if (vertex[j] + step > upper[j]) step = -step;
        vertex[j] += step;
        clamp_point(vertex);
        simplex.push_back(std::move(vertex));
    }
    std::vector<double> fv(simplex.size());
    for (std::size_t i = 0; i < simplex.size(); ++i) fv[i] = f(simplex[i]);

    auto order = [&] {
        std::vector<std::size_t> idx(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return better(fv[a], fv[b]); });
        std::vector<std::vector<double>> s2(simplex.size());
        std::vector<double> f2(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            s2[i] = std::move(simplex[idx[i]]);
            f2[i] = fv[idx[i]];
        }
        simplex = std::move(s2);
        fv = std::move(f2);
    };

    NelderMeadResult result;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        order();
        // convergence: simplex diameter and value spread
        double diameter = 0;
        for (std::size_t i = 1; i < simplex.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) diameter = std::max(diameter, std::abs(simplex[i][j] - simplex[0][j]));
        if (diameter <= xtol && std::abs(fv.back() - fv.front()) <= ftol) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i + 1 < simplex.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
        for (std::size_t j = 0; j < n; ++j) centroid[j] /= static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + coef * (centroid[j] - simplex.back()[j]);
            clamp_point(x);
            return x;
        };

        auto reflected = blend(1.0);
        const double fr = f(reflected);
        if (better(fr, fv[0])) {
            auto expanded = blend(2.0);
            const double fe = f(expanded);
            if (better(fe, fr)) {
                simplex.back() = std::move(expanded);
                fv.back() = fe;
            } else {
                simplex.back() = std::move(reflected);
                fv.back() = fr;
            }
            continue;
        }
        if (better(fr, fv[fv.size() - 2])) {
            simplex.back() = std::move(reflected);
            fv.back() = fr;
            continue;
        }
        const bool outside = better(fr, fv.back());
        auto contracted = blend(outside ? 0.5 : -0.5);
        const double fc = f(contracted);
        if (better(fc, outside ? fr : fv.back())) {
            simplex.back() = std::move(contracted);
            fv.back() = fc;
            continue;
        }
        // shrink toward the best vertex
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
            clamp_point(simplex[i]);
            fv[i] = f(simplex[i]);
        }
    }
    order();
    // ties within 1e-12 resolve toward the smaller last coordinate
    std::size_t pick = 0;
    for (std::size_t i = 1; i < simplex.size(); ++i)
        if (std::abs(fv[i] - fv[0]) <= 1e-12 && simplex[i].back() < simplex[pick].back()) pick = i;
    result.x = simplex[pick];
    result.fmin = fv[pick];
    result.iterations = iter;
    return result;
}

std::string estimation_result_to_json(const EstimationResult& result) {
    nlohmann::json j;
    j["theta_hat"] = result.theta_hat;
    j["loglik_at_max"] = result.loglik_at_max;
    switch (result.method) {
        case EstimateMethod::ClosedForm: j["method"] = "closed_form"; break;
        case EstimateMethod::JointSystem: j["method"] = "joint_system"; break;
        case EstimateMethod::DirectMax: j["method"] = "direct_max"; break;
    }
    j["iterations"] = result.iterations;
    j["converged"] = result.converged;
    j["at_boundary"] = result.at_boundary;
    j["sigma2_unidentifiable"] = result.sigma2_unidentifiable;
    j["equation_residuals"] = {result.equation_residuals[0], result.equation_residuals[1]};
    if (result.std_err) j["std_err"] = *result.std_err;
    if (result.fisher) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < result.fisher->rows(); ++r) {
            std::vector<double> row;
            for (Eigen::Index c = 0; c < result.fisher->cols(); ++c) row.push_back((*result.fisher)(r, c));
            rows.push_back(std::move(row));
        }
        j["fisher"] = rows;
    }
    return j.dump(2) + "\n";
}

}  // namespace mixedsde
