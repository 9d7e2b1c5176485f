#include "helpd/numerics/optim.h"

#include <cmath>
#include <numbers>

namespace helpd {

OptimState OptimState::for_parameters(std::span<const Tensor> params,
                                      AdamWConfig config) {
  OptimState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.shape());
    s.second_moment.emplace_back(p.shape());
  }
  return s;
}

StepStatus adamw_step(std::span<Tensor> params, std::span<const Tensor> grads,
                      OptimState& state, double lr) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw ShapeError("adamw: " + std::to_string(params.size()) +
                     " params, " + std::to_string(grads.size()) +
                     " grads, " + std::to_string(state.first_moment.size()) +
                     " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() ||
        params[i].shape() != state.first_moment[i].shape()) {
      throw ShapeError("adamw: parameter " + std::to_string(i) + " shape " +
                       shape_str(params[i].shape()) + " vs grad " +
                       shape_str(grads[i].shape()));
    }
    if (!grads[i].all_finite()) return StepStatus::kRefusedNonFinite;
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = double(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Real* w = params[i].data();
    const Real* g = grads[i].data();
    Real* m = state.first_moment[i].data();
    Real* v = state.second_moment[i].data();
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      m[k] = Real(c.beta1 * m[k] + (1.0 - c.beta1) * g[k]);
      v[k] = Real(c.beta2 * v[k] + (1.0 - c.beta2) * double(g[k]) * g[k]);
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] = Real(w[k] * decay - lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
  return StepStatus::kApplied;
}

std::int64_t LrSchedule::warmup_steps() const {
  return static_cast<std::int64_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(std::int64_t step, const LrSchedule& schedule) {
  if (schedule.peak_lr <= 0 || schedule.warmup_ratio < 0 ||
      schedule.warmup_ratio >= 1 || schedule.total_steps <= 0) {
    throw InvalidArgument("lr schedule: need peak_lr > 0, 0 <= warmup < 1, "
                          "total_steps > 0");
  }
  if (step < 0 || step > schedule.total_steps) {
    throw InvalidArgument("lr schedule: step " + std::to_string(step) +
                          " outside [0, " +
                          std::to_string(schedule.total_steps) + "]");
  }
  const std::int64_t warm = schedule.warmup_steps();
  if (step < warm) {
    return schedule.peak_lr * double(step) / double(warm);
  }
  const std::int64_t span = schedule.total_steps - warm;
  if (span == 0) return 0.0;
  const double progress = double(step - warm) / double(span);
  return schedule.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace helpd
