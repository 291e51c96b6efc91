#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace pathmed::stats {

/// Two-sided 95% normal critical value.
inline constexpr double kZ975 = 1.959964;

inline double normal_pdf(double x, double mean = 0.0, double sd = 1.0)
{
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

inline double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double mean(std::span<const double> x);

/// Variance with divisor n (population form).
double variance_pop(std::span<const double> x);

/// Variance with divisor n - 1.
double variance_sample(std::span<const double> x);

/// Empirical quantile, linear interpolation between order statistics.
double quantile(std::vector<double> x, double q);

/// Critical value z(1 - alpha/2); exact for alpha = 0.05, otherwise by
/// bisection on the normal cdf.
double normal_critical(double alpha);

} // namespace pathmed::stats
