#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stepcat/tensor.hpp"

namespace stepcat {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(int axis) const { return value().dim(axis); }
  std::size_t rank() const { return value().rank(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Record-and-replay tape. Every differentiable op appends one node holding its
/// output and a vector-Jacobian rule; backward() replays the rules in reverse.
class Graph {
 public:
  class BackwardContext {
   public:
    const Tensor& grad_output() const { return *grad_out_; }
    const Tensor& output() const { return *output_; }
    const Tensor& input(std::size_t i) const;
    /// Gradient buffer of input i, or nullptr when that input needs none.
    Tensor* grad_input(std::size_t i);

   private:
    friend class Graph;
    Graph* graph_ = nullptr;
    const std::vector<std::size_t>* inputs_ = nullptr;
    const Tensor* grad_out_ = nullptr;
    const Tensor* output_ = nullptr;
  };
  using BackwardFn = std::function<void(BackwardContext&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter& p);
  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Reverse sweep from a single-element loss. Parameter::grad is incremented,
  /// so calling twice without zeroing accumulates twice.
  void backward(Var loss, bool accumulate_into_params = true);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  /// Gradient of the last backward() w.r.t. v; empty when v was unreachable.
  const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  const std::string& op_name(Var v) const { return nodes_.at(v.id()).op; }

  std::vector<std::pair<Parameter*, const Tensor*>> param_grads() const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Tensor* ensure_grad(std::size_t id);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace stepcat
