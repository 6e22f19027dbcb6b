#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cbt/tensor.hpp"

namespace cbt {

struct BackwardStats {
  std::size_t operations_visited = 0;
};

/// Reverse-mode pass from a scalar loss. Gradients accumulate into every
/// requires_grad leaf reachable from `loss`; the recorded graph is released
/// afterwards, so a second call on the same loss is a ContractError.
BackwardStats backward(const Tensor& loss);

/// Global L2 norm of the gradients of `params`.
double grad_norm(const std::vector<Tensor>& params);

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t elements_checked = 0;
  std::string worst;  // "param#index"
  bool passed = false;
};

/// Central finite differences (step 1e-5) against autodiff for every element
/// of `params`. `f` must rebuild the graph from the current parameter values on
/// each call. Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// near-zero gradients from turning round-off into spurious failures.
/// Must run under Precision::kFloat64.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double tolerance,
                           double step = 1e-5, double floor = 1e-6);

}  // namespace cbt
