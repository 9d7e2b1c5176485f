#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "helpd/numerics/tensor.h"

namespace helpd {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators of AdamW, one pair per parameter tensor.
struct OptimState {
  AdamWConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;

  static OptimState for_parameters(std::span<const Tensor> params,
                                   AdamWConfig config = {});
};

enum class StepStatus { kApplied, kRefusedNonFinite };

// Decoupled weight decay (Loshchilov & Hutter) with bias-corrected moments:
//   w <- w * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
// `lr` overrides config.lr for this step (schedules pass the current rate).
// Non-finite gradients leave params and state untouched.
[[nodiscard]] StepStatus adamw_step(std::span<Tensor> params,
                                    std::span<const Tensor> grads,
                                    OptimState& state, double lr);
[[nodiscard]] inline StepStatus adamw_step(std::span<Tensor> params,
                                           std::span<const Tensor> grads,
                                           OptimState& state) {
  return adamw_step(params, grads, state, state.config.lr);
}

// Linear warmup from 0 over ceil(warmup_ratio * total_steps) steps, then
// cosine decay to 0 at total_steps.
struct LrSchedule {
  double peak_lr = 1e-4;
  double warmup_ratio = 0.03;
  std::int64_t total_steps = 1;

  std::int64_t warmup_steps() const;
};

double lr_at(std::int64_t step, const LrSchedule& schedule);

}  // namespace helpd
