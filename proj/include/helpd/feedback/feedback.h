#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "helpd/feedback/objects.h"
#include "helpd/model/sample.h"
#include "helpd/numerics/graph.h"
#include "json.hpp"

namespace helpd::feedback {

struct ObjectScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// precision = |S∩L| / |S|, recall = |S∩L| / |L|. Both sets empty gives 1
// everywhere; an empty side gives 0 for its ratio; F1 is 0 when P + R = 0.
ObjectScores object_scores(const ObjectSet& sampled, const ObjectSet& label);
inline double object_reward(const ObjectSet& sampled, const ObjectSet& label) {
  return object_scores(sampled, label).f1;
}

struct RewardRecord {
  double r_obj = 0.0;
  double r_sen = 0.0;
  double r = 0.0;
  double sigma = 0.0;
};

// r = sigma * r_sen + (1 - sigma) * r_obj. Throws InvalidArgument when an
// input leaves [0, 1].
RewardRecord combine_rewards(double r_sen, double r_obj, double sigma);

// -(1/N) * sum_i sum_j logp_ij * R_i over every sampled action, N being
// the action count. Rewards are constants. Throws InvalidArgument when
// N = 0 or rewards.size() != batch.size().
Var reinforce_loss(Graph& g, const model::SampledBatch& batch, std::span<const double> rewards);

enum class Phase { kCeOnly, kCombined };
std::string phase_name(Phase p);

struct FeedbackConfig {
  double sigma = 0.6;
  double c = 0.7;
  std::int64_t total_steps = 1000;
  std::int64_t feedback_interval = 10;
  double sample_temperature = 1.0;
  bool rollout = false;   // free-running samples instead of teacher forcing
  bool baseline = false;  // subtract the batch-mean reward (off: plain REINFORCE)

  void validate() const;
  // First combined-phase step: ceil(c * total_steps).
  std::int64_t switch_step() const;
  Phase phase(std::int64_t step) const;
  bool feedback_due(std::int64_t step) const;

  nlohmann::ordered_json to_json() const;
  static FeedbackConfig from_json(const nlohmann::ordered_json& j);
};

struct LossReport {
  std::int64_t step = 0;
  Phase phase = Phase::kCeOnly;
  double l_ce = 0.0;
  double l_rl = 0.0;
  double l_total = 0.0;
  std::size_t n_actions = 0;  // N
  std::size_t label_len = 0;  // H
  double mean_r_obj = 0.0;
  double mean_r_sen = 0.0;
  double lr = 0.0;
  bool feedback = false;        // sampled-feedback term present
  bool judge_fallback = false;  // judge failed, r = r_obj this step
  std::string judge_error;

  nlohmann::ordered_json to_json() const;
};

struct TotalLoss {
  Var loss;
  LossReport report;
};

// CE-only phase: loss = l_ce. Combined phase: l_ce / |l_ce| + l_rl / |l_rl|
// with both magnitudes frozen as constants (floored at 1e-8); an invalid
// `l_rl` Var means no feedback term this step.
TotalLoss total_loss(Graph& g, Var l_ce, Var l_rl, std::int64_t step,
                     const FeedbackConfig& config);

}  // namespace helpd::feedback
