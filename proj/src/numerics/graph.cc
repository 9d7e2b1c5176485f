#include "helpd/numerics/graph.h"

#include <algorithm>

namespace helpd {

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw InvalidArgument("graph: invalid node handle");
  }
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  return const_cast<Node&>(static_cast<const Graph&>(*this).node(v));
}

Var Graph::push_leaf(Tensor value, const Tensor* external, bool needs_grad) {
  Node n;
  n.owned = std::move(value);
  n.external = external;
  n.leaf = true;
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) {
  return push_leaf(std::move(value), nullptr, false);
}

Var Graph::variable(Tensor value) {
  return push_leaf(std::move(value), nullptr, true);
}

Var Graph::parameter(const Tensor& value) {
  return push_leaf(Tensor{}, &value, true);
}

Var Graph::apply(OpRule rule, std::vector<Var> inputs) {
  Node n;
  std::vector<const Tensor*> refs;
  refs.reserve(inputs.size());
  for (Var in : inputs) {
    const Node& src = node(in);
    refs.push_back(&src.value());
    n.inputs.push_back(in.id);
    n.needs_grad = n.needs_grad || src.needs_grad;
  }
  n.owned = rule.forward(refs);
  n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.shape() != n.value().shape()) {
    // No gradient reached this node; hand out a zero of matching shape.
    const_cast<Node&>(n).grad = Tensor(n.value().shape());
  }
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).needs_grad; }
bool Graph::is_leaf(Var v) const { return node(v).leaf; }

const std::string& Graph::op_name(Var v) const {
  static const std::string kLeaf = "leaf";
  const Node& n = node(v);
  return n.leaf ? kLeaf : n.rule.name;
}

const OpRule& Graph::rule(Var v) const {
  const Node& n = node(v);
  if (n.leaf) throw InvalidArgument("graph: leaf nodes carry no op rule");
  return n.rule;
}

std::vector<Var> Graph::inputs(Var v) const {
  std::vector<Var> out;
  for (auto id : node(v).inputs) out.push_back(Var{id});
  return out;
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor{};
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(root.value().shape()));
  }
  zero_grad();
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor(n.value().shape());
  }
  nodes_[loss.id].grad = Tensor(root.value().shape(), Real(1));

  std::vector<const Tensor*> in_refs;
  std::vector<Tensor*> grad_refs;
  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (n.leaf || !n.needs_grad) continue;
    in_refs.clear();
    grad_refs.clear();
    for (auto in : n.inputs) {
      Node& src = nodes_[in];
      in_refs.push_back(&src.value());
      grad_refs.push_back(src.needs_grad ? &src.grad : nullptr);
    }
    n.rule.backward(in_refs, n.value(), n.grad, grad_refs);
  }
}

void Graph::replay() {
  std::vector<const Tensor*> refs;
  for (auto& n : nodes_) {
    if (n.leaf) continue;
    refs.clear();
    for (auto in : n.inputs) refs.push_back(&nodes_[in].value());
    n.owned = n.rule.forward(refs);
  }
}

void Graph::set_leaf_value(Var v, Tensor value) {
  Node& n = node(v);
  if (!n.leaf) throw InvalidArgument("graph: set_leaf_value on non-leaf");
  if (value.shape() != n.value().shape()) {
    throw ShapeError("graph: leaf shape " + shape_str(n.value().shape()) +
                     " cannot take " + shape_str(value.shape()));
  }
  n.owned = std::move(value);
  n.external = nullptr;
}

}  // namespace helpd
