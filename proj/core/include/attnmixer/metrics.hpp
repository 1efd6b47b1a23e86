#pragma once

#include <optional>
#include <vector>

#include "attnmixer/errors.hpp"

namespace attnmixer {

/// Forecast quality over one evaluation set.
/// r2 = 1 - sum((y - yhat)^2) / sum((y - mean(y))^2); left empty when the
/// truth has zero variance (undefined). rmse and mae are always computed.
struct Metrics {
  std::optional<double> r2;
  double rmse = 0.0;
  double mae = 0.0;
  int count = 0;
};

Metrics compute_metrics(const std::vector<double>& actual,
                        const std::vector<double>& predicted);

}  // namespace attnmixer
