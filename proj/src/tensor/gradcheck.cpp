#include "seecg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace seecg {

namespace {

template <typename T>
T evaluate_unrecorded(const std::function<Tensor<T>()>& loss_fn) {
  NoRecording<T> off;
  return loss_fn().item();
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss_fn, std::span<const ParamRef<T>> params,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw ValueError("grad_check: epsilon must be positive");

  const T first = evaluate_unrecorded(loss_fn);
  const T second = evaluate_unrecorded(loss_fn);
  if (std::memcmp(&first, &second, sizeof(T)) != 0) {
    throw GraphError("grad_check: forward function is not deterministic");
  }

  zero_grads(params);
  {
    Graph<T> graph;
    Recording<T> rec(graph);
    Tensor<T> loss = loss_fn();
    // A loss that never touched a tracked parameter has zero gradient everywhere.
    if (loss.node()) graph.backward(loss);
  }

  GradCheckReport report;
  report.max_relative_error = 0.0;
  for (const auto& p : params) {
    Tensor<T>& t = *p.tensor;
    const std::vector<T> analytic(t.grad().begin(), t.grad().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const T saved = t[i];
      t[i] = saved + static_cast<T>(epsilon);
      const double plus = evaluate_unrecorded(loss_fn);
      t[i] = saved - static_cast<T>(epsilon);
      const double minus = evaluate_unrecorded(loss_fn);
      t[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      worst = std::max(worst, err);
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
    }
    report.per_parameter_errors[p.name] = worst;
  }
  return report;
}

template GradCheckReport grad_check(const std::function<Tensor<float>()>&, std::span<const ParamRef<float>>, double);
template GradCheckReport grad_check(const std::function<Tensor<double>()>&, std::span<const ParamRef<double>>, double);

}  // namespace seecg
