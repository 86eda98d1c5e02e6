#pragma once

#include <span>

namespace mixedsde {

double mean(std::span<const double> xs);
/// Sample variance with divisor n-1.
double variance(std::span<const double> xs);
double std_dev(std::span<const double> xs);
/// Standardized third moment m3 / s^3 (population moments, s with divisor n).
double skewness(std::span<const double> xs);
/// Standardized fourth moment m4 / s^4 (not excess).
double kurtosis(std::span<const double> xs);

double normal_cdf(double x);
/// Inverse standard normal CDF (Acklam rational approximation plus one
/// Newton step); used for QQ plot data.
double normal_quantile(double p);

/// Survival function Q(lambda) = P(sup|B(t)| bridge > lambda) of the
/// asymptotic Kolmogorov distribution. Small and large arguments use the
/// two dual theta-series expansions.
double ks_asymptotic_pvalue(double lambda);

struct KsResult {
    double statistic = 0;  // D_n
    double p_value = 1;    // asymptotic
};

/// One-sample Kolmogorov-Smirnov test of `samples` against N(0,1), without
/// studentizing. p-value from the asymptotic distribution at lambda = sqrt(n) D.
KsResult ks_test_standard_normal(std::span<const double> samples);

}  // namespace mixedsde
