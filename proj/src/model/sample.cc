#include "helpd/model/sample.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "helpd/numerics/kernels.h"
#include "helpd/numerics/ops.h"

namespace helpd::model {

std::size_t SampledBatch::count() const {
  std::size_t n = 0;
  for (const auto& a : actions) n += a.size();
  return n;
}

namespace {

int draw(std::span<const Real> logits, const SampleOptions& opt, std::mt19937_64& rng) {
  if (opt.greedy) {
    return int(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<Real> p(logits.begin(), logits.end());
  for (auto& v : p) v /= Real(opt.temperature);
  kernels::softmax_row(p.data(), p.size());
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += double(p[i]);
    if (u < acc) return int(i);
  }
  // u landed in the rounding slack above the last cumulative sum
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0) return int(i);
  }
  return 0;
}

std::size_t first_target(const std::vector<int>& targets) {
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (targets[j] >= 0) return j;
  }
  return targets.size();
}

}  // namespace

SampledBatch sample_batch(Graph& g, const Model& model, const TokenBatch& teacher,
                          const SampleOptions& opt, const GraphForward* forward) {
  if (!opt.greedy && !(opt.temperature > 0)) {
    throw InvalidArgument("sample_batch: temperature must be > 0, got " +
                          std::to_string(opt.temperature));
  }
  std::mt19937_64 rng(opt.seed);
  const std::size_t V = model.config().vocab_size;
  SampledBatch sb;
  TokenBatch scored;
  const TokenBatch* batch = &teacher;

  if (opt.rollout) {
    scored.prefixes = teacher.prefixes;
    for (std::size_t b = 0; b < teacher.size(); ++b) {
      const std::size_t k = first_target(teacher.targets[b]);
      if (k == teacher.inputs[b].size()) {
        throw InvalidArgument("sample_batch: item " + std::to_string(b) + " has no target");
      }
      std::vector<int> seq(teacher.inputs[b].begin(),
                           teacher.inputs[b].begin() + std::ptrdiff_t(k + 1));
      const std::size_t room = model.config().max_text_len - seq.size() + 1;
      const std::size_t limit = std::min(opt.max_new_tokens, room);
      DecodeState st = model.start(model.encode_slots(teacher.prefixes[b]));
      StepOutput out;
      for (int t : seq) out = model.step(st, t);
      std::vector<int> acts;
      while (acts.size() < limit) {
        const int a = draw(out.logits, opt, rng);
        acts.push_back(a);
        if (a == opt.eos_token || acts.size() == limit) break;
        out = model.step(st, a);
        seq.push_back(a);
      }
      std::vector<int> tg(seq.size(), -1);
      for (std::size_t j = 0; j < acts.size(); ++j) tg[k + j] = acts[j];
      scored.inputs.push_back(seq);
      scored.targets.push_back(tg);
    }
    batch = &scored;
    forward = nullptr;
  }

  sb.forward = forward ? *forward : model.build(g, *batch);
  const Tensor& logits = g.value(sb.forward.logits);
  const std::size_t T = sb.forward.text_len;
  Var lp = ops::log_softmax(g, sb.forward.logits);
  const Tensor& lpv = g.value(lp);
  std::vector<int> index(batch->size() * T, -1);
  for (std::size_t b = 0; b < batch->size(); ++b) {
    std::vector<int> acts;
    std::vector<Real> lps;
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < batch->targets[b].size(); ++j) {
      if (batch->targets[b][j] < 0) continue;
      const std::size_t r = b * T + j;
      const int a = opt.rollout || opt.label_actions ? batch->targets[b][j]
                                                     : draw(logits.row(r), opt, rng);
      acts.push_back(a);
      lps.push_back(lpv[r * V + std::size_t(a)]);
      rows.push_back(r);
      index[r] = a;
    }
    sb.actions.push_back(std::move(acts));
    sb.log_probs.push_back(std::move(lps));
    sb.rows.push_back(std::move(rows));
  }
  sb.log_prob_var = ops::pick(g, lp, std::move(index));
  return sb;
}

}  // namespace helpd::model
