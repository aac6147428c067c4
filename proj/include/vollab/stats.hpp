#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vollab {

double mean(std::span<const double> xs);
double sample_std(std::span<const double> xs);

/// Linear-interpolation quantile, q in [0,1]; input need not be sorted.
double quantile(std::span<const double> xs, double q);

/// Spearman rank correlation; ties get average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

/// Sorted (value, cumulative fraction) pairs for CDF plots.
std::vector<std::pair<double, double>> cdf_points(std::span<const double> xs);

}  // namespace vollab
