#include "helpd/numerics/grad_check.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace helpd {

double relative_error(std::span<const Real> analytic,
                      std::span<const Real> numeric) {
  double diff = 0, amax = 0, nmax = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(double(analytic[i]) - double(numeric[i])));
    amax = std::max(amax, std::abs(double(analytic[i])));
    nmax = std::max(nmax, std::abs(double(numeric[i])));
  }
  return diff / (amax + nmax + 1e-12);
}

namespace {

// d<u, f(inputs)>/d inputs[k] for one op, by central differences.
Tensor numeric_local(const OpRule& rule, std::vector<Tensor> inputs,
                     std::size_t k, const Tensor& upstream, double step) {
  Tensor out(inputs[k].shape());
  std::vector<const Tensor*> refs;
  auto eval = [&]() {
    refs.clear();
    for (auto& t : inputs) refs.push_back(&t);
    const Tensor y = rule.forward(refs);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += double(y[i]) * upstream[i];
    return s;
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real orig = inputs[k][i];
    inputs[k][i] = orig + Real(step);
    const double plus = eval();
    inputs[k][i] = orig - Real(step);
    const double minus = eval();
    inputs[k][i] = orig;
    out[i] = Real((plus - minus) / (2 * step));
  }
  return out;
}

}  // namespace

GradCheckReport grad_check(Graph& graph, Var loss, std::span<const Var> leaves,
                           std::span<const std::string> labels,
                           const GradCheckOptions& options) {
  if constexpr (sizeof(Real) != 8) {
    throw InvalidArgument("grad_check requires a 64-bit build");
  }
  GradCheckReport report;
  report.tolerance = options.tolerance;
  auto note = [&report](const std::string& label, double err) {
    if (report.worst.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = label;
    }
  };

  graph.backward(loss);
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    const Var leaf = leaves[p];
    const Tensor analytic = graph.grad(leaf);
    const Tensor original = graph.value(leaf);
    Tensor probe = original;
    Tensor numeric(original.shape());
    for (std::size_t i = 0; i < probe.size(); ++i) {
      probe[i] = original[i] + Real(options.step);
      graph.set_leaf_value(leaf, probe);
      graph.replay();
      const double plus = graph.value(loss).item();
      probe[i] = original[i] - Real(options.step);
      graph.set_leaf_value(leaf, probe);
      graph.replay();
      const double minus = graph.value(loss).item();
      probe[i] = original[i];
      numeric[i] = Real((plus - minus) / (2 * options.step));
    }
    graph.set_leaf_value(leaf, original);
    graph.replay();
    const std::string label =
        p < labels.size() ? labels[p] : "param" + std::to_string(p);
    const double err = relative_error(analytic.values(), numeric.values());
    report.parameters.push_back({label, err});
    note(label, err);
  }

  if (options.check_ops) {
    std::mt19937 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::map<std::string, double> per_op;
    for (std::uint32_t id = 0; id <= loss.id; ++id) {
      const Var v{id};
      if (graph.is_leaf(v)) continue;
      const OpRule& rule = graph.rule(v);
      std::vector<Tensor> inputs;
      std::vector<const Tensor*> refs;
      for (Var in : graph.inputs(v)) inputs.push_back(graph.value(in));
      for (auto& t : inputs) refs.push_back(&t);
      const Tensor out = rule.forward(refs);
      Tensor upstream(out.shape());
      for (auto& u : upstream.values()) u = Real(normal(rng));
      std::vector<Tensor> grads;
      std::vector<Tensor*> grad_refs;
      for (auto& t : inputs) grads.emplace_back(t.shape());
      for (auto& t : grads) grad_refs.push_back(&t);
      rule.backward(refs, out, upstream, grad_refs);
      double worst = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor numeric =
            numeric_local(rule, inputs, k, upstream, options.step);
        worst = std::max(worst,
                         relative_error(grads[k].values(), numeric.values()));
      }
      double& slot = per_op[rule.name];
      slot = std::max(slot, worst);
    }
    for (const auto& [name, err] : per_op) {
      report.ops.push_back({name, err});
      note("op:" + name, err);
    }
    // Leave stashed per-op state (attention probabilities) consistent with
    // the graph's own values again.
    graph.replay();
  }
  return report;
}

}  // namespace helpd
