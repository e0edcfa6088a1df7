#include <algorithm>

#include "seecg/layers.hpp"

namespace seecg {

std::size_t se_bottleneck(std::size_t channels, std::size_t ratio) {
  if (ratio == 0) throw ValueError("SE reduction ratio must be positive");
  return std::max<std::size_t>(1, channels / ratio);
}

template <typename T>
SEModuleWeights<T>::SEModuleWeights(std::size_t channels, std::size_t ratio)
    : w1(Shape{se_bottleneck(channels, ratio), channels}),
      b1(Shape{se_bottleneck(channels, ratio)}),
      w2(Shape{channels, se_bottleneck(channels, ratio)}),
      b2(Shape{channels}),
      reduction_ratio(ratio) {}

template <typename T>
Tensor<T> se_gate(const Tensor<T>& input, const SEModuleWeights<T>& weights) {
  if (input.rank() < 3) throw ShapeError("se_forward", "rank", "input needs [N,C,spatial...], got " + shape_str(input.shape()));
  if (input.extent(1) != weights.channels()) {
    throw ShapeError("se_forward", "C",
                     "weights expect " + std::to_string(weights.channels()) + " channels, input has " +
                         std::to_string(input.extent(1)));
  }
  const Tensor<T> squeezed = global_avg_pool(input);
  const Tensor<T> hidden = relu(linear(squeezed, track(weights.w1), track(weights.b1)));
  return sigmoid(linear(hidden, track(weights.w2), track(weights.b2)));
}

template <typename T>
Tensor<T> se_forward(const Tensor<T>& input, const SEModuleWeights<T>& weights) {
  return channel_scale(input, se_gate(input, weights));
}

template struct SEModuleWeights<float>;
template struct SEModuleWeights<double>;
template Tensor<float> se_gate(const Tensor<float>&, const SEModuleWeights<float>&);
template Tensor<double> se_gate(const Tensor<double>&, const SEModuleWeights<double>&);
template Tensor<float> se_forward(const Tensor<float>&, const SEModuleWeights<float>&);
template Tensor<double> se_forward(const Tensor<double>&, const SEModuleWeights<double>&);

}  // namespace seecg
