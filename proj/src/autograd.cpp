#include "stepcat/autograd.hpp"

namespace stepcat {

const Tensor& Var::value() const { return graph_->value(id_); }

const Tensor& Graph::BackwardContext::input(std::size_t i) const { return graph_->value((*inputs_)[i]); }

Tensor* Graph::BackwardContext::grad_input(std::size_t i) { return graph_->ensure_grad((*inputs_)[i]); }

Tensor* Graph::ensure_grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.graph() != this) throw std::invalid_argument(n.op + ": operand recorded on a different graph");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss, bool accumulate_into_params) {
  if (&loss.graph() != this) throw std::invalid_argument("backward: loss belongs to a different graph");
  if (loss.value().numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor::full(loss.shape(), 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    BackwardContext ctx;
    ctx.graph_ = this;
    ctx.inputs_ = &n.inputs;
    ctx.grad_out_ = &n.grad;
    ctx.output_ = &n.value;
    n.backward(ctx);
  }

  if (!accumulate_into_params) return;
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

std::vector<std::pair<Parameter*, const Tensor*>> Graph::param_grads() const {
  std::vector<std::pair<Parameter*, const Tensor*>> out;
  for (const auto& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) out.emplace_back(n.param, &n.grad);
  }
  return out;
}

}  // namespace stepcat
