#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace prognet::exp {

double median(std::span<const double> values);
/// Linear-interpolated quantile (type 7), q in [0, 1].
double quantile(std::span<const double> values, double q);
double interquartile_range(std::span<const double> values);

/// Centered sliding median; `window` must be odd. Near the ends the window
/// shrinks symmetrically, so the first and last values pass through unchanged.
std::vector<double> median_filter(std::span<const double> values, std::size_t window);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sided Mann-Whitney U test of "x tends to be larger than y".
/// statistic is U_x = #{x_i > y_j} + 0.5 #{x_i == y_j}. The p-value is exact
/// (enumerating every relabelling, ties included) when that is affordable
/// and otherwise uses the tie-corrected normal approximation.
TestResult mann_whitney_greater(std::span<const double> x, std::span<const double> y);

/// One-sample Kolmogorov-Smirnov test against U(lo, hi).
TestResult ks_uniform(std::span<const double> samples, double lo, double hi);

/// Pearson chi-square goodness of fit against expected counts.
TestResult chi_square(std::span<const double> observed, std::span<const double> expected);

/// exp(U(log lo, log hi)).
double log_uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace prognet::exp
