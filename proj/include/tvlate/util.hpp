#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tvlate {

/// Empirical quantile with higher interpolation: the smallest order statistic
/// whose index is >= p*(n-1). Conservative for critical values at finite B.
inline double quantile_higher(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const std::size_t idx =
      std::min<std::size_t>(x.size() - 1, static_cast<std::size_t>(std::ceil(pos)));
  return x[idx];
}

}  // namespace tvlate
