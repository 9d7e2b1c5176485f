#pragma once

#include <cstdint>
#include <vector>

#include "helpd/model/model.h"

namespace helpd::model {

struct SampleOptions {
  double temperature = 1.0;
  bool greedy = false;   // argmax instead of a draw (the temperature -> 0 limit)
  bool rollout = false;  // free-running generation instead of teacher forcing
  bool label_actions = false;  // teacher-forced mode: take the targets as actions
  std::size_t max_new_tokens = 32;  // rollout only
  int eos_token = 2;                // rollout only
  std::uint64_t seed = 0;
};

// Actions drawn from the model and their log-probabilities. `log_prob_var`
// is a [rows] graph node holding log_softmax(logits)[row][action] at every
// sampled row and 0 elsewhere; rows[b] lists the rows of item b in order.
struct SampledBatch {
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<Real>> log_probs;
  std::vector<std::vector<std::size_t>> rows;
  Var log_prob_var;
  GraphForward forward;  // the pass the log-probabilities came from

  std::size_t size() const { return actions.size(); }
  std::size_t count() const;  // N, the number of sampled actions
};

// Teacher-forced mode draws one action at every position of `teacher` whose
// target is >= 0, all from a single forward pass (reused when `forward` is
// given). Rollout mode feeds the prompt (inputs up to the first target) and
// samples until eos or max_new_tokens, then rescoring the sampled sequence
// on the graph. Throws InvalidArgument for temperature <= 0 without greedy.
SampledBatch sample_batch(Graph& g, const Model& model, const TokenBatch& teacher,
                          const SampleOptions& options,
                          const GraphForward* forward = nullptr);

}  // namespace helpd::model
