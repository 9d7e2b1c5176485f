#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "helpd/numerics/tensor.h"

namespace helpd {

// Handle to a node of a Graph.
struct Var {
  static constexpr std::uint32_t kInvalid =
      std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

using TensorRefs = std::span<const Tensor* const>;
using GradRefs = std::span<Tensor* const>;

// Forward/backward rule of one recorded op. `forward` must be a pure function
// of its inputs so the graph can be replayed. `backward` accumulates into
// each non-null entry of `grad_inputs`.
struct OpRule {
  std::string name;
  std::function<Tensor(TensorRefs inputs)> forward;
  std::function<void(TensorRefs inputs, const Tensor& output,
                     const Tensor& grad_output, GradRefs grad_inputs)>
      backward;
};

// Reverse-mode tape. Nodes are appended in topological order, so a node's
// inputs always have smaller ids. Single writer.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf that reads `value` in place; `value` must outlive the graph.
  Var parameter(const Tensor& value);

  Var apply(OpRule rule, std::vector<Var> inputs);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() w.r.t. `v`; zeros if none flowed.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  bool is_leaf(Var v) const;
  const std::string& op_name(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
  void backward(Var loss);
  void zero_grad();

  // Re-run every op in topological order, e.g. after set_leaf_value().
  void replay();
  // Overwrite a leaf's value. Detaches a parameter leaf from its external
  // storage (the graph keeps a private copy from then on).
  void set_leaf_value(Var v, Tensor value);

  // Rule and inputs of a recorded node, for local gradient checks.
  const OpRule& rule(Var v) const;
  std::vector<Var> inputs(Var v) const;

 private:
  struct Node {
    OpRule rule;  // empty name for leaves
    std::vector<std::uint32_t> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool leaf = false;
    bool needs_grad = false;

    const Tensor& value() const { return external ? *external : owned; }
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push_leaf(Tensor value, const Tensor* external, bool needs_grad);

  std::deque<Node> nodes_;  // deque: value() references stay valid as nodes are added
};

}  // namespace helpd
