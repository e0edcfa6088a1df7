#include <cmath>
#include <vector>

#include "seecg/layers.hpp"

namespace seecg {

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormState<T>& state) {
  if (input.rank() < 2) throw ShapeError("batch_norm", "rank", "input needs [N,C,...], got " + shape_str(input.shape()));
  const std::size_t n = input.extent(0);
  const std::size_t c = input.extent(1);
  if (c != state.channels()) {
    throw ShapeError("batch_norm", "C",
                     "state has " + std::to_string(state.channels()) + " channels, input has " + std::to_string(c));
  }
  const std::size_t spatial = input.numel() / (n * c);
  const std::size_t count = n * spatial;

  std::vector<T> mean(c), inv_std(c);
  if (state.mode == Mode::Train) {
    if (count < 2) {
      throw ValueError("batch_norm: training mode needs at least 2 values per channel (batch " + std::to_string(n) +
                       ", spatial " + std::to_string(spatial) + ")");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      T acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* row = input.data().data() + (b * c + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) acc += row[s];
      }
      const T mu = acc / static_cast<T>(count);
      T sq = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* row = input.data().data() + (b * c + ch) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) sq += (row[s] - mu) * (row[s] - mu);
      }
      const T var = sq / static_cast<T>(count);
      mean[ch] = mu;
      inv_std[ch] = T(1) / std::sqrt(var + state.eps);
      const T unbiased = sq / static_cast<T>(count - 1);
      state.running_mean[ch] = (T(1) - state.momentum) * state.running_mean[ch] + state.momentum * mu;
      state.running_var[ch] = (T(1) - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  const Tensor<T> gamma = track(state.gamma);
  const Tensor<T> beta = track(state.beta);
  Tensor<T> out(input.shape());
  std::vector<T> xhat(input.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const T h = (input[base + s] - mean[ch]) * inv_std[ch];
        xhat[base + s] = h;
        out[base + s] = gamma[ch] * h + beta[ch];
      }
    }
  }

  if (Graph<T>* graph = detail::recorder<T>({&input, &gamma, &beta})) {
    auto xref = input.node();
    auto gref = gamma.node();
    auto bref = beta.node();
    std::vector<T> g(gamma.data().begin(), gamma.data().end());
    const bool batch_stats = state.mode == Mode::Train;
    out.set_node(graph->record(
        "batch_norm", {&input, &gamma, &beta}, out.numel(),
        [=, xhat = std::move(xhat), g = std::move(g)](std::span<const T> dy, Graph<T>& gr) {
          T* dx = gr.grad_of(xref);
          T* dgamma = gr.grad_of(gref);
          T* dbeta = gr.grad_of(bref);
          for (std::size_t ch = 0; ch < c; ++ch) {
            T sum_dy = 0;
            T sum_dy_xhat = 0;
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * c + ch) * spatial;
              for (std::size_t s = 0; s < spatial; ++s) {
                sum_dy += dy[base + s];
                sum_dy_xhat += dy[base + s] * xhat[base + s];
              }
            }
            if (dgamma) dgamma[ch] += sum_dy_xhat;
            if (dbeta) dbeta[ch] += sum_dy;
            if (!dx) continue;
            const T k = g[ch] * inv_std[ch];
            const T inv_count = T(1) / static_cast<T>(count);
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * c + ch) * spatial;
              for (std::size_t s = 0; s < spatial; ++s) {
                if (batch_stats) {
                  dx[base + s] += k * (dy[base + s] - inv_count * sum_dy - xhat[base + s] * inv_count * sum_dy_xhat);
                } else {
                  dx[base + s] += k * dy[base + s];
                }
              }
            }
          }
        }));
  }
  return out;
}

template Tensor<float> batch_norm(const Tensor<float>&, BatchNormState<float>&);
template Tensor<double> batch_norm(const Tensor<double>&, BatchNormState<double>&);

}  // namespace seecg
