#include "rlpm/stats.hpp"

#include <algorithm>
#include <cmath>

#include "rlpm/error.hpp"

namespace rlpm {

double mean(std::span<const double> xs) {
  if (xs.empty()) {
    throw Error(ErrorKind::EmptySeries, "mean of an empty series");
  }
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
  }
  return sum / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) {
    throw Error(ErrorKind::TooShort, "sample standard deviation needs at least 2 values");
  }
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

bool is_degenerate_volatility(double mean, double sd) {
  return !(sd > std::max(1e-12 * std::abs(mean), 1e-15));
}

}  // namespace rlpm
