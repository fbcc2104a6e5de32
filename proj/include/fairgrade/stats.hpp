#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fairgrade::stats {

double mean(std::span<const double> x);
double population_sd(std::span<const double> x);
double sample_sd(std::span<const double> x);

/// Pearson correlation. NaN when either side has zero variance or n < 2.
double pearson(std::span<const double> x, std::span<const double> y);

/// Lower empirical quantile: the value at sorted index floor(q * n),
/// clamped to the last element. Selection rules use ">= quantile".
double quantile_lower(std::vector<double> values, double q);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a t statistic with df degrees of freedom.
double t_two_sided_p(double t, double df);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;  // at the alpha supplied to the test
};

/// Welch two-sample t-test (unequal variances).
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b,
                         double alpha = 0.05);

/// Significance of a Pearson correlation against r = 0.
double pearson_p_value(double r, std::size_t n);

}  // namespace fairgrade::stats
