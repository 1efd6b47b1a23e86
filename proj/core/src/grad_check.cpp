#include "attnmixer/grad_check.hpp"

#include <cmath>

namespace attnmixer {

double grad_check(const std::function<Tensor()>& loss_fn,
                  std::vector<Parameter>& params, double h) {
  if (h <= 0.0) throw NumericError("grad_check step h must be positive");

  for (auto& p : params) p.tensor.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.tensor.grad());

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].tensor.mutable_values();
    for (size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + h;
      const double f_plus = loss_fn().value();
      values[j] = orig - h;
      const double f_minus = loss_fn().value();
      values[j] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][j];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace attnmixer
