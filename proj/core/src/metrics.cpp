#include "attnmixer/metrics.hpp"

#include <cmath>

namespace attnmixer {

Metrics compute_metrics(const std::vector<double>& actual,
                        const std::vector<double>& predicted) {
  if (actual.empty()) throw DataError("metrics need at least one sample");
  if (actual.size() != predicted.size()) {
    throw DimensionError("metrics input lengths differ: " + std::to_string(actual.size()) +
                         " vs " + std::to_string(predicted.size()));
  }
  const size_t n = actual.size();
  double mean = 0.0;
  for (double y : actual) mean += y;
  mean /= static_cast<double>(n);

  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double err = actual[i] - predicted[i];
    ss_res += err * err;
    abs_sum += std::fabs(err);
    const double dev = actual[i] - mean;
    ss_tot += dev * dev;
  }

  Metrics m;
  m.count = static_cast<int>(n);
  m.rmse = std::sqrt(ss_res / static_cast<double>(n));
  m.mae = abs_sum / static_cast<double>(n);
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

}  // namespace attnmixer
