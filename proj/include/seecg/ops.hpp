#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "seecg/graph.hpp"
#include "seecg/tensor.hpp"

// Differentiable tensor operations. Each op records itself into the active
// graph when any operand is recorded; otherwise it is a plain computation.
// No broadcasting: binary ops need identical shapes.

namespace seecg {

struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
};

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// input [N,C_in,T,L], weight [C_out,C_in,kt,kl], bias [C_out] -> [N,C_out,T',L'],
// T' = floor((T + 2 pt - kt) / st) + 1. Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opts = {});
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, Conv2dOptions opts = {});

// input [N,C_in,T], weight [C_out,C_in,k], bias [C_out] -> [N,C_out,T'].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv1dOptions opts = {});
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, Conv1dOptions opts = {});

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
// Throws ValueError on any non-positive element.
template <typename T>
Tensor<T> log(const Tensor<T>& a);

// x [N,C,S...] scaled per (n, c) by gate [N,C].
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gate);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
// Removes `axis`.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, std::size_t axis);
// [N,C,S...] -> [N,C], mean over all trailing axes.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& a);
// [N,C,T] -> [N,C,floor((T - window) / stride) + 1].
template <typename T>
Tensor<T> avg_pool1d(const Tensor<T>& a, std::size_t window, std::size_t stride);

// input [N,F_in], weight [F_out,F_in], bias [F_out] -> [N,F_out].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
// Swaps the two innermost axes: [..., A, B] -> [..., B, A].
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a);

// Row-wise over [N,K], max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits);

}  // namespace seecg
