#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seecg/tensor.hpp"

namespace seecg {

// Append-only tape of recorded operations. Operands always precede their
// users, so reverse insertion order is a valid reverse topological order.
// One graph records one forward pass and supports exactly one backward pass.
template <typename T>
class Graph {
 public:
  // Receives the gradient w.r.t. the node output and accumulates into operand
  // gradients through `grad_of`.
  using Backward = std::function<void(std::span<const T> grad_out, Graph& graph)>;

  struct Node {
    std::string kind;
    std::string scope;
    std::vector<std::size_t> operands;
    std::size_t numel = 0;
    Backward backward;
    Tensor<T>* param = nullptr;
  };

  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  bool consumed() const noexcept { return consumed_; }

  // True when the tensor's node belongs to this graph. Throws if it belongs to another one.
  bool owns(const Tensor<T>& t) const;

  NodeRef record(std::string_view kind, std::initializer_list<const Tensor<T>*> operands,
                 std::size_t out_numel, Backward backward);
  NodeRef record(std::string_view kind, std::span<const Tensor<T>* const> operands,
                 std::size_t out_numel, Backward backward);

  // Leaf whose gradient is accumulated into `param.grad()` during backward.
  NodeRef leaf(Tensor<T>& param);

  // Gradient buffer of an operand node, or nullptr when the operand is a constant.
  T* grad_of(const std::optional<NodeRef>& ref);

  void backward(const Tensor<T>& loss);

  class ScopeGuard {
   public:
    ScopeGuard(Graph& graph, const std::string& name);
    ~ScopeGuard();
    ScopeGuard(const ScopeGuard&) = delete;
    ScopeGuard& operator=(const ScopeGuard&) = delete;

   private:
    Graph& graph_;
    std::size_t previous_length_;
  };

  const std::string& current_scope() const noexcept { return scope_; }

 private:
  friend class ScopeGuard;

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::string scope_;
  bool consumed_ = false;
};

template <typename T>
Graph<T>*& active_graph_slot() {
  thread_local Graph<T>* graph = nullptr;
  return graph;
}

template <typename T>
Graph<T>* active_graph() {
  return active_graph_slot<T>();
}

// Makes `graph` the recording target of the current thread for the guard's lifetime.
template <typename T>
class Recording {
 public:
  explicit Recording(Graph<T>& graph) : previous_(active_graph_slot<T>()) { active_graph_slot<T>() = &graph; }
  ~Recording() { active_graph_slot<T>() = previous_; }
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Graph<T>* previous_;
};

// Suspends recording on the current thread (inference, finite differences).
template <typename T>
class NoRecording {
 public:
  NoRecording() : previous_(active_graph_slot<T>()) { active_graph_slot<T>() = nullptr; }
  ~NoRecording() { active_graph_slot<T>() = previous_; }
  NoRecording(const NoRecording&) = delete;
  NoRecording& operator=(const NoRecording&) = delete;

 private:
  Graph<T>* previous_;
};

// Names nodes recorded inside the guard's lifetime, e.g. "branch_k3.block2d_0".
// No-op when nothing is recording.
template <typename T>
class NamedScope {
 public:
  explicit NamedScope(const std::string& name) {
    if (Graph<T>* g = active_graph<T>()) guard_.emplace(*g, name);
  }

 private:
  std::optional<typename Graph<T>::ScopeGuard> guard_;
};

// Routes a parameter into the active graph. Without an active graph this is a plain copy.
// The returned tensor links back to `param`, which receives gradients on backward;
// `param` must outlive the graph.
template <typename T>
Tensor<T> track(const Tensor<T>& param) {
  Tensor<T> out = param.detached();
  if (Graph<T>* g = active_graph<T>()) {
    out.set_node(g->leaf(const_cast<Tensor<T>&>(param)));
  }
  return out;
}

template <typename T>
void zero_grads(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

namespace debug {
// Test hook: when set, the ReLU vector-Jacobian product is deliberately wrong
// so gradient checking can be shown to catch a broken rule.
void set_backward_fault(bool enabled);
bool backward_fault();
}  // namespace debug

namespace detail {
// Active graph if any operand is recorded; nullptr for constant-only operands.
template <typename T>
Graph<T>* recorder(std::initializer_list<const Tensor<T>*> operands);
template <typename T>
Graph<T>* recorder(std::span<const Tensor<T>* const> operands);
}  // namespace detail

}  // namespace seecg
