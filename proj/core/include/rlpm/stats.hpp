#pragma once

#include <cstddef>
#include <span>

namespace rlpm {

inline constexpr double kTradingDaysPerYear = 252.0;

double mean(std::span<const double> xs);
/// Sample standard deviation with the n-1 denominator; requires n >= 2.
double sample_std(std::span<const double> xs);

/// True when a return series is flat up to rounding residue, so a Sharpe
/// ratio built from it would be noise divided by noise.
bool is_degenerate_volatility(double mean, double sd);

}  // namespace rlpm
