#pragma once

#include <functional>
#include <vector>

#include "attnmixer/tensor.hpp"

namespace attnmixer {

/// Compares reverse-mode gradients with central finite differences
/// (f(x+h) - f(x-h)) / 2h for every scalar entry of every parameter.
/// loss_fn must deterministically rebuild the loss graph from the current
/// parameter values and return a scalar tensor. Parameter values are
/// restored on exit. Returns the worst relative error, with denominator
/// max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor()>& loss_fn,
                  std::vector<Parameter>& params, double h);

}  // namespace attnmixer
