#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "seecg/ops.hpp"

namespace seecg {

enum class Mode { Train, Eval };

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
  Mode mode = Mode::Train;

  explicit BatchNormState(std::size_t channels = 1)
      : gamma(Shape{channels}, T(1)),
        beta(Shape{channels}, T(0)),
        running_mean(Shape{channels}, T(0)),
        running_var(Shape{channels}, T(1)) {}

  std::size_t channels() const { return gamma.numel(); }
};

// Normalizes [N,C,...] per channel. Train mode uses batch statistics over N and all
// trailing axes and updates the running statistics (unbiased variance); Eval mode
// uses the running statistics. Train mode needs at least two values per channel.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormState<T>& state);

// Channel attention: w1 [C/r, C], b1 [C/r], w2 [C, C/r], b2 [C].
template <typename T>
struct SEModuleWeights {
  Tensor<T> w1;
  Tensor<T> b1;
  Tensor<T> w2;
  Tensor<T> b2;
  std::size_t reduction_ratio = 16;

  SEModuleWeights() = default;
  SEModuleWeights(std::size_t channels, std::size_t ratio);

  std::size_t channels() const { return w2.extent(0); }
  std::size_t bottleneck() const { return w1.extent(0); }
};

// max(1, channels / ratio)
std::size_t se_bottleneck(std::size_t channels, std::size_t ratio);

// Per-(sample, channel) gate sigmoid(w2 · relu(w1 · pool(x) + b1) + b2), shape [N,C].
template <typename T>
Tensor<T> se_gate(const Tensor<T>& input, const SEModuleWeights<T>& weights);

// input scaled channel-wise by se_gate(input).
template <typename T>
Tensor<T> se_forward(const Tensor<T>& input, const SEModuleWeights<T>& weights);

enum class BlockDim { TwoD, OneD };

struct ResBlockSpec {
  std::size_t kernel_size = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  BlockDim dim = BlockDim::TwoD;
  bool se_enabled = true;
  std::size_t se_ratio = 16;

  void validate() const;
  // Identity skip only when the block changes neither channels nor time extent.
  bool has_projection() const { return stride != 1 || in_channels != out_channels; }
  std::size_t padding() const { return (kernel_size - 1) / 2; }
  // Time extent after the block: ceil(in / stride) under same-padding.
  std::size_t output_extent(std::size_t in) const { return (in + 2 * padding() - kernel_size) / stride + 1; }
};

// Pre-activation residual block:
//   main = BN → ReLU → conv(k, stride) → BN → ReLU → conv(k, 1) → SE
//   skip = identity, or a bias-free size-1 conv with the block's stride when shapes change.
// The first conv has no bias because batch norm follows it directly; the projection
// has none because conv2's bias already enters the same sum.
// 2-D blocks convolve k×1 (time × lead) on [N,C,T,L]; 1-D blocks operate on [N,C,T].
template <typename T>
struct ResBlock {
  ResBlockSpec spec;
  BatchNormState<T> bn1;
  Tensor<T> conv1_weight;
  BatchNormState<T> bn2;
  Tensor<T> conv2_weight;
  Tensor<T> conv2_bias;
  std::optional<SEModuleWeights<T>> se;
  std::optional<Tensor<T>> proj_weight;

  ResBlock() = default;
  explicit ResBlock(const ResBlockSpec& spec);

  void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void collect_buffers(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void set_mode(Mode mode);
};

template <typename T>
Tensor<T> res_block_forward(const Tensor<T>& input, ResBlock<T>& block);

}  // namespace seecg
