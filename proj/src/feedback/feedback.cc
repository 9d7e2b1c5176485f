#include "helpd/feedback/feedback.h"

#include <algorithm>
#include <cmath>

#include "helpd/numerics/ops.h"

namespace helpd::feedback {

ObjectScores object_scores(const ObjectSet& sampled, const ObjectSet& label) {
  if (sampled.empty() && label.empty()) return {1.0, 1.0, 1.0};
  std::size_t hit = 0;
  for (auto id : sampled.objects) hit += label.contains(id) ? 1 : 0;
  ObjectScores s;
  s.precision = sampled.empty() ? 0.0 : double(hit) / double(sampled.size());
  s.recall = label.empty() ? 0.0 : double(hit) / double(label.size());
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

RewardRecord combine_rewards(double r_sen, double r_obj, double sigma) {
  auto check = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
      throw InvalidArgument(std::string("combine_rewards: ") + what + " = " +
                            std::to_string(v) + " outside [0,1]");
  };
  check(r_sen, "r_sen");
  check(r_obj, "r_obj");
  check(sigma, "sigma");
  return {r_obj, r_sen, sigma * r_sen + (1.0 - sigma) * r_obj, sigma};
}

Var reinforce_loss(Graph& g, const model::SampledBatch& batch, std::span<const double> rewards) {
  if (rewards.size() != batch.size())
    throw InvalidArgument("reinforce_loss: " + std::to_string(rewards.size()) +
                          " rewards for " + std::to_string(batch.size()) + " items");
  const std::size_t n = batch.count();
  if (n == 0) throw InvalidArgument("reinforce_loss: no sampled actions");
  Tensor weights(g.value(batch.log_prob_var).shape());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t r : batch.rows[b]) weights[r] = Real(rewards[b]);
  }
  Var weighted = ops::mul(g, batch.log_prob_var, g.constant(std::move(weights)));
  return ops::scale(g, ops::sum(g, weighted), Real(-1.0 / double(n)));
}

std::string phase_name(Phase p) { return p == Phase::kCeOnly ? "ce-only" : "combined"; }

void FeedbackConfig::validate() const {
  auto unit = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
      throw InvalidArgument(std::string("feedback config: ") + what + " outside [0,1]");
  };
  unit(sigma, "sigma");
  unit(c, "c");
  if (total_steps < 0) throw InvalidArgument("feedback config: total_steps < 0");
  if (feedback_interval < 1) throw InvalidArgument("feedback config: feedback_interval < 1");
  if (!(sample_temperature > 0))
    throw InvalidArgument("feedback config: sample_temperature must be > 0");
}

std::int64_t FeedbackConfig::switch_step() const {
  return std::int64_t(std::ceil(c * double(total_steps) - 1e-9));
}

Phase FeedbackConfig::phase(std::int64_t step) const {
  return step < switch_step() ? Phase::kCeOnly : Phase::kCombined;
}

bool FeedbackConfig::feedback_due(std::int64_t step) const {
  return phase(step) == Phase::kCombined && step % feedback_interval == 0;
}

nlohmann::ordered_json FeedbackConfig::to_json() const {
  return {{"sigma", sigma},
          {"c", c},
          {"total_steps", total_steps},
          {"feedback_interval", feedback_interval},
          {"sample_temperature", sample_temperature},
          {"rollout", rollout},
          {"baseline", baseline}};
}

FeedbackConfig FeedbackConfig::from_json(const nlohmann::ordered_json& j) {
  FeedbackConfig c;
  c.sigma = j.value("sigma", c.sigma);
  c.c = j.value("c", c.c);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.feedback_interval = j.value("feedback_interval", c.feedback_interval);
  c.sample_temperature = j.value("sample_temperature", c.sample_temperature);
  c.rollout = j.value("rollout", c.rollout);
  c.baseline = j.value("baseline", c.baseline);
  c.validate();
  return c;
}

nlohmann::ordered_json LossReport::to_json() const {
  nlohmann::ordered_json j = {{"step", step},
                              {"phase", phase_name(phase)},
                              {"l_ce", l_ce},
                              {"l_rl", l_rl},
                              {"l_total", l_total},
                              {"mean_r_obj", mean_r_obj},
                              {"mean_r_sen", mean_r_sen},
                              {"lr", lr},
                              {"n_actions", n_actions},
                              {"label_len", label_len},
                              {"feedback", feedback}};
  if (judge_fallback) {
    j["judge_fallback"] = true;
    j["judge_error"] = judge_error;
  }
  return j;
}

TotalLoss total_loss(Graph& g, Var l_ce, Var l_rl, std::int64_t step,
                     const FeedbackConfig& config) {
  TotalLoss out;
  out.report.step = step;
  out.report.phase = config.phase(step);
  out.report.l_ce = double(g.value(l_ce)[0]);
  if (!std::isfinite(out.report.l_ce)) throw InvalidArgument("total_loss: l_ce not finite");
  if (out.report.phase == Phase::kCeOnly) {
    out.loss = l_ce;
    out.report.l_total = out.report.l_ce;
    return out;
  }
  // Norms are frozen: dividing by a gradient-carrying |x| would make every
  // term a constant with zero gradient.
  auto normalized = [&](Var v, double x) {
    return ops::scale(g, v, Real(1.0 / std::max(std::abs(x), 1e-8)));
  };
  out.loss = normalized(l_ce, out.report.l_ce);
  if (l_rl.valid()) {
    out.report.feedback = true;
    out.report.l_rl = double(g.value(l_rl)[0]);
    if (!std::isfinite(out.report.l_rl)) throw InvalidArgument("total_loss: l_rl not finite");
    out.loss = ops::add(g, out.loss, normalized(l_rl, out.report.l_rl));
  }
  out.report.l_total = double(g.value(out.loss)[0]);
  return out;
}

}  // namespace helpd::feedback
