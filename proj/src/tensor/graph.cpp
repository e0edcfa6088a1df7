#include "seecg/graph.hpp"

#include <atomic>

namespace seecg {

namespace {
std::atomic<std::uint64_t> next_graph_id{1};
std::atomic<bool> backward_fault_flag{false};
}  // namespace

namespace debug {
void set_backward_fault(bool enabled) { backward_fault_flag.store(enabled); }
bool backward_fault() { return backward_fault_flag.load(std::memory_order_relaxed); }
}  // namespace debug

template <typename T>
Graph<T>::Graph() : id_(next_graph_id.fetch_add(1)) {}

template <typename T>
bool Graph<T>::owns(const Tensor<T>& t) const {
  if (!t.node()) return false;
  if (t.node()->graph_id != id_) {
    throw GraphError("tensor was recorded in graph " + std::to_string(t.node()->graph_id) +
                     ", not in the active graph " + std::to_string(id_));
  }
  return true;
}

template <typename T>
NodeRef Graph<T>::record(std::string_view kind, std::initializer_list<const Tensor<T>*> operands,
                         std::size_t out_numel, Backward backward) {
  return record(kind, std::span<const Tensor<T>* const>(operands.begin(), operands.size()), out_numel,
                std::move(backward));
}

template <typename T>
NodeRef Graph<T>::record(std::string_view kind, std::span<const Tensor<T>* const> operands,
                         std::size_t out_numel, Backward backward) {
  if (consumed_) throw GraphError("cannot record into a graph after backward");
  Node node;
  node.kind = std::string(kind);
  node.scope = scope_;
  node.numel = out_numel;
  node.backward = std::move(backward);
  for (const Tensor<T>* t : operands) {
    if (t && owns(*t)) node.operands.push_back(t->node()->index);
  }
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return NodeRef{id_, nodes_.size() - 1};
}

template <typename T>
NodeRef Graph<T>::leaf(Tensor<T>& param) {
  if (consumed_) throw GraphError("cannot record into a graph after backward");
  Node node;
  node.kind = "param";
  node.scope = scope_;
  node.numel = param.numel();
  node.param = &param;
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return NodeRef{id_, nodes_.size() - 1};
}

template <typename T>
T* Graph<T>::grad_of(const std::optional<NodeRef>& ref) {
  if (!ref) return nullptr;
  if (ref->graph_id != id_) throw GraphError("operand belongs to a different graph");
  auto& g = grads_.at(ref->index);
  if (g.empty()) g.assign(nodes_[ref->index].numel, T(0));
  return g.data();
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw GraphError("backward already ran on this graph; record a new forward pass");
  if (nodes_.empty()) throw GraphError("backward on an empty graph");
  if (loss.numel() != 1) throw GraphError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!owns(loss)) throw GraphError("loss is not recorded in this graph");
  consumed_ = true;

  const std::size_t root = loss.node()->index;
  grads_[root].assign(1, T(1));
  for (std::size_t i = root + 1; i-- > 0;) {
    if (grads_[i].empty()) continue;
    Node& node = nodes_[i];
    const std::vector<T> grad_out = std::move(grads_[i]);
    grads_[i].clear();
    if (node.param) {
      node.param->accumulate_grad(grad_out);
    } else if (node.backward) {
      node.backward(grad_out, *this);
    }
    node.backward = nullptr;
  }
}

template <typename T>
Graph<T>::ScopeGuard::ScopeGuard(Graph& graph, const std::string& name)
    : graph_(graph), previous_length_(graph.scope_.size()) {
  if (!graph_.scope_.empty()) graph_.scope_ += '.';
  graph_.scope_ += name;
}

template <typename T>
Graph<T>::ScopeGuard::~ScopeGuard() {
  graph_.scope_.resize(previous_length_);
}

namespace detail {

template <typename T>
Graph<T>* recorder(std::span<const Tensor<T>* const> operands) {
  Graph<T>* g = active_graph<T>();
  bool any = false;
  for (const Tensor<T>* t : operands) {
    if (!t || !t->node()) continue;
    if (!g) throw GraphError("recorded tensor used while no graph is active");
    g->owns(*t);
    any = true;
  }
  return any ? g : nullptr;
}

template <typename T>
Graph<T>* recorder(std::initializer_list<const Tensor<T>*> operands) {
  return recorder<T>(std::span<const Tensor<T>* const>(operands.begin(), operands.size()));
}

template Graph<float>* recorder(std::span<const Tensor<float>* const>);
template Graph<double>* recorder(std::span<const Tensor<double>* const>);
template Graph<float>* recorder(std::initializer_list<const Tensor<float>*>);
template Graph<double>* recorder(std::initializer_list<const Tensor<double>*>);

}  // namespace detail

template class Graph<float>;
template class Graph<double>;

}  // namespace seecg
