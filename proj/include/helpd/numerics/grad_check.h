#pragma once

#include <span>
#include <string>
#include <vector>

#include "helpd/numerics/graph.h"

namespace helpd {

struct GradCheckEntry {
  std::string name;  // parameter label or op name
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::string worst;  // label of the worst parameter or op
  std::vector<GradCheckEntry> parameters;
  std::vector<GradCheckEntry> ops;  // one entry per op name, worst instance

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckOptions {
  double tolerance = 1e-5;
  double step = 1e-5;
  // Also check every recorded op in isolation against a random upstream
  // gradient, which pins a failure to one op.
  bool check_ops = true;
  unsigned seed = 1234;
};

// Compares analytic gradients of `loss` w.r.t. each leaf in `leaves` with
// central finite differences obtained by replaying the graph. The error of a
// tensor is max|analytic - numeric| / (max|analytic| + max|numeric| + 1e-12).
// Requires a 64-bit build. The graph is restored to its original values.
GradCheckReport grad_check(Graph& graph, Var loss, std::span<const Var> leaves,
                           std::span<const std::string> labels,
                           const GradCheckOptions& options = {});

// Same error measure as grad_check, exposed for tests.
double relative_error(std::span<const Real> analytic,
                      std::span<const Real> numeric);

}  // namespace helpd
