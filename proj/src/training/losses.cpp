#include <algorithm>
#include <cmath>

#include "seecg/graph.hpp"
#include "seecg/training.hpp"

namespace seecg {

namespace {

template <typename T>
void check_targets(const char* op, const Tensor<T>& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2) throw ShapeError(op, "rank", "logits must be [N,k], got " + shape_str(logits.shape()));
  if (targets.size() != logits.extent(0)) {
    throw ShapeError(op, "N",
                     std::to_string(logits.extent(0)) + " logit rows vs " + std::to_string(targets.size()) + " targets");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= logits.extent(1)) {
      throw ValueError(std::string(op) + ": target " + std::to_string(targets[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(logits.extent(1)) + ")");
    }
  }
}

// Row-wise log-softmax in double precision.
template <typename T>
std::vector<double> log_probs(const Tensor<T>& logits) {
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const T* x = logits.data().data() + i * k;
    const double mx = static_cast<double>(*std::max_element(x, x + k));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(x[j]) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = static_cast<double>(x[j]) - lse;
  }
  return out;
}

// Records a scalar loss whose gradient w.r.t. logit (i, j) is
// dloss_dlogp[i] · (δ_{j,target} − softmax_ij).
template <typename T>
Tensor<T> finish(const char* kind, const Tensor<T>& logits, std::span<const std::size_t> targets, double value,
                 std::vector<double> lp, std::vector<double> dlogp) {
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(value));
  if (Graph<T>* graph = detail::recorder<T>({&logits})) {
    const std::size_t k = logits.extent(1);
    auto xref = logits.node();
    std::vector<std::size_t> tg(targets.begin(), targets.end());
    out.set_node(graph->record(kind, {&logits}, 1,
                               [xref, k, tg = std::move(tg), lp = std::move(lp), dlogp = std::move(dlogp)](
                                   std::span<const T> g, Graph<T>& gr) {
                                 T* gx = gr.grad_of(xref);
                                 const double up = static_cast<double>(g[0]);
                                 for (std::size_t i = 0; i < tg.size(); ++i) {
                                   for (std::size_t j = 0; j < k; ++j) {
                                     const double s = std::exp(lp[i * k + j]);
                                     const double d = (j == tg[i] ? 1.0 : 0.0) - s;
                                     gx[i * k + j] += static_cast<T>(up * dlogp[i] * d);
                                   }
                                 }
                               }));
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  check_targets("cross_entropy", logits, targets);
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  auto lp = log_probs(logits);
  double total = 0.0;
  std::vector<double> dlogp(n, -1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) total -= lp[i * k + targets[i]];
  return finish("cross_entropy", logits, targets, total / static_cast<double>(n), std::move(lp), std::move(dlogp));
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::size_t> targets, double alpha, double gamma,
                     std::span<const double> class_weights) {
  check_targets("focal_loss", logits, targets);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValueError("focal_loss: alpha must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValueError("focal_loss: gamma must be non-negative");
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (!class_weights.empty() && class_weights.size() != k) {
    throw ShapeError("focal_loss", "k", std::to_string(class_weights.size()) + " class weights for " + std::to_string(k) +
                                            " classes");
  }
  auto lp = log_probs(logits);
  std::vector<double> dlogp(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = alpha * (class_weights.empty() ? 1.0 : class_weights[targets[i]]);
    const double l = lp[i * k + targets[i]];
    const double p = std::exp(l);
    const double q = -std::expm1(l);  // 1 - p without cancellation near p = 1
    const double qg = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    total += -a * qg * l;
    // d/dl [-a q^γ l] = -a (q^γ - γ p l q^(γ-1)); the second term vanishes as q → 0.
    double tail = 0.0;
    if (gamma != 0.0 && q > 0.0) tail = gamma * p * l * std::pow(q, gamma - 1.0);
    dlogp[i] = -a * (qg - tail) / static_cast<double>(n);
  }
  return finish("focal_loss", logits, targets, total / static_cast<double>(n), std::move(lp), std::move(dlogp));
}

template Tensor<float> cross_entropy(const Tensor<float>&, std::span<const std::size_t>);
template Tensor<double> cross_entropy(const Tensor<double>&, std::span<const std::size_t>);
template Tensor<float> focal_loss(const Tensor<float>&, std::span<const std::size_t>, double, double,
                                  std::span<const double>);
template Tensor<double> focal_loss(const Tensor<double>&, std::span<const std::size_t>, double, double,
                                   std::span<const double>);

}  // namespace seecg
