#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "seecg/errors.hpp"

namespace seecg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Position of a value in a recorded computation graph.
struct NodeRef {
  std::uint64_t graph_id = 0;
  std::size_t index = 0;
};

// Dense row-major array. Rank 0 is a scalar. The gradient buffer is allocated
// lazily and, once present, always matches the tensor's shape.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  Tensor() : data_(1, T(0)) {}

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_numel(shape_), fill);
  }

  explicit Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("Tensor", "numel",
                       "shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                           " values, got " + std::to_string(data_.size()));
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item", "numel", "tensor " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  const std::optional<NodeRef>& node() const noexcept { return node_; }
  void set_node(NodeRef ref) noexcept { node_ = ref; }

  // Same values, no graph link, no gradient.
  Tensor detached() const { return Tensor(shape_, data_); }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<const T> grad() const noexcept { return grad_; }
  std::span<T> grad() noexcept { return grad_; }

  void zero_grad() { grad_.assign(data_.size(), T(0)); }
  void clear_grad() noexcept { grad_.clear(); }

  void accumulate_grad(std::span<const T> g) {
    if (g.size() != data_.size()) {
      throw ShapeError("accumulate_grad", "numel",
                       std::to_string(g.size()) + " vs " + std::to_string(data_.size()));
    }
    if (grad_.empty()) grad_.assign(data_.size(), T(0));
    for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  void check_extents() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) throw ShapeError("Tensor", std::to_string(i), "extents must be positive");
    }
  }

  Shape shape_;
  std::vector<T> data_;
  std::optional<NodeRef> node_;
  std::vector<T> grad_;
};

// A named tensor owned elsewhere (parameters, running statistics).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

template <typename T>
std::size_t param_count(std::span<const ParamRef<T>> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->numel();
  return n;
}

}  // namespace seecg
