#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>

#include "seecg/graph.hpp"
#include "seecg/tensor.hpp"

namespace seecg {

struct GradCheckReport {
  double max_relative_error = 0.0;
  // "<parameter name>[<flat index>]" of the worst scalar.
  std::string worst_parameter;
  // Worst relative error over the scalars of each parameter.
  std::map<std::string, double> per_parameter_errors;
};

// Compares backward() gradients with central differences
// (f(θ+ε) − f(θ−ε)) / 2ε for every scalar of every parameter.
// Relative error is |a − n| / max(|a|, |n|, 1e-8).
// `loss_fn` must build the loss from tracked parameters and be deterministic;
// a run-to-run mismatch throws GraphError.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss_fn, std::span<const ParamRef<T>> params,
                           double epsilon);

}  // namespace seecg
