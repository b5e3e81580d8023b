#pragma once

#include <cstdint>
#include <vector>

namespace chamber::eval {

struct ChiSquareResult {
    double statistic = 0;
    double p_value = 1;
};

/// One-degree-of-freedom goodness-of-fit test of `successes` out of `trials`
/// against a null success probability. statistic = sum (obs-exp)^2 / exp over
/// the two cells; p-value from the chi-square survival function.
ChiSquareResult chi_square_test(double successes, int64_t trials, double null_p);

/// Spearman rank correlation (average ranks on ties).
double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

} // namespace chamber::eval
