#include "mixedsde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mixedsde {

double mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty sample");
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance: need at least two samples");
    const double m = mean(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

double std_dev(std::span<const double> xs) { return std::sqrt(variance(xs)); }

namespace {
double central_moment(std::span<const double> xs, int order) {
    const double m = mean(xs);
    double s = 0;
    for (double x : xs) s += std::pow(x - m, order);
    return s / static_cast<double>(xs.size());
}
}  // namespace

double skewness(std::span<const double> xs) {
    const double m2 = central_moment(xs, 2);
    return central_moment(xs, 3) / std::pow(m2, 1.5);
}

double kurtosis(std::span<const double> xs) {
    const double m2 = central_moment(xs, 2);
    return central_moment(xs, 4) / (m2 * m2);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    // Acklam's rational approximation, |relative error| < 1.15e-9.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    // one Newton polish through the forward CDF
    const double e = normal_cdf(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
    if (pdf > 0) x -= e / pdf;
    return x;
}

double ks_asymptotic_pvalue(double lambda) {
    if (lambda <= 0) return 1.0;
    if (lambda < 1.0) {
        // P(K <= lambda) = sqrt(2*pi)/lambda * sum_{k odd} exp(-k^2 pi^2 / (8 lambda^2))
        const double f = std::numbers::pi * std::numbers::pi / (8 * lambda * lambda);
        double cdf = 0;
        for (int k = 1; k < 40; k += 2) {
            const double term = std::exp(-static_cast<double>(k) * k * f);
            cdf += term;
            if (term < 1e-18 * cdf) break;
        }
        cdf *= std::sqrt(2 * std::numbers::pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    // Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)
    double q = 0;
    for (int j = 1; j < 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        q += (j % 2 == 1) ? term : -term;
        if (term < 1e-18) break;
    }
    return std::clamp(2 * q, 0.0, 1.0);
}

KsResult ks_test_standard_normal(std::span<const double> samples) {
    if (samples.empty()) throw std::invalid_argument("ks_test: empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = normal_cdf(sorted[i]);
        const double di = static_cast<double>(i);
        d = std::max(d, std::max((di + 1) / n - f, f - di / n));
    }
    return {d, ks_asymptotic_pvalue(std::sqrt(n) * d)};
}

}  // namespace mixedsde
