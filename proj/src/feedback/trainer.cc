#include "helpd/feedback/trainer.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "helpd/numerics/ops.h"

namespace helpd::feedback {
namespace {

std::vector<std::string> truth_names(const data::Scene& scene, const data::ObjectLexicon& lex) {
  std::vector<std::string> out;
  for (const auto& o : scene.objects) out.push_back(lex.name(o.object));
  return out;
}

void check_length(const Example& e, const model::ModelConfig& config) {
  if (e.inputs.size() > config.max_text_len)
    throw InvalidArgument("example for scene " + std::to_string(e.scene_id) + " has " +
                          std::to_string(e.inputs.size()) + " tokens, max_text_len is " +
                          std::to_string(config.max_text_len));
}

}  // namespace

Example caption_example(const data::Scene& scene, const data::CaptionRecord& caption,
                        const data::Vocabulary& vocab, const model::ModelConfig& config) {
  Example e;
  e.scene_id = scene.id;
  e.prefix = model::prefix_slots(scene, config);
  e.inputs = data::caption_prompt(vocab);
  const auto words = data::tokenize(caption.caption, vocab);
  e.inputs.insert(e.inputs.end(), words.begin(), words.end());
  e.targets.assign(e.inputs.begin() + 1, e.inputs.end());
  e.targets.push_back(data::Vocabulary::kEos);
  std::fill(e.targets.begin(), e.targets.begin() + 1, -1);  // "describe" is given
  e.caption = true;
  e.reference = caption.caption;
  e.truth = caption.objects;
  check_length(e, config);
  return e;
}

Example question_example(const data::Scene& scene, data::ObjectId object,
                         const data::Vocabulary& vocab, const model::ModelConfig& config) {
  Example e;
  e.scene_id = scene.id;
  e.prefix = model::prefix_slots(scene, config);
  e.inputs = data::question_prompt(object, vocab);
  const int answer = scene.contains(object) ? data::Vocabulary::kYes : data::Vocabulary::kNo;
  e.targets.assign(e.inputs.size(), -1);
  e.targets.back() = answer;
  e.inputs.push_back(answer);
  e.targets.push_back(data::Vocabulary::kEos);
  e.caption = false;
  e.truth = truth_names(scene, vocab.lexicon());
  check_length(e, config);
  return e;
}

model::TokenBatch make_batch(std::span<const Example> examples) {
  model::TokenBatch b;
  for (const auto& e : examples) {
    b.prefixes.push_back(e.prefix);
    b.inputs.push_back(e.inputs);
    b.targets.push_back(e.targets);
  }
  return b;
}

LossReport feedback_step(model::Model& model, std::span<const Example> batch,
                         const data::Vocabulary& vocab, judge::Judge& judge,
                         const FeedbackConfig& config, OptimState& optimizer,
                         const StepOptions& options) {
  if (batch.empty()) throw InvalidArgument("feedback_step: empty batch");
  Graph g;
  const auto tokens = make_batch(batch);
  const auto fwd = model.build(g, tokens);
  const std::size_t T = fwd.text_len;
  std::vector<int> flat(tokens.size() * T, -1);
  std::size_t label_len = 0;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    for (std::size_t j = 0; j < tokens.targets[b].size(); ++j) {
      flat[b * T + j] = tokens.targets[b][j];
      label_len += tokens.targets[b][j] >= 0 ? 1 : 0;
    }
  }
  Var l_ce = ops::cross_entropy(g, fwd.logits, flat, ops::Reduction::kMean);

  Var l_rl;
  std::size_t n_actions = 0;
  double mean_obj = 0, mean_sen = 0;
  bool fallback = false;
  std::string judge_error;
  std::vector<Example> caps;
  std::vector<Var> sampled_params;  // leaves of the sampling pass, if any
  if (config.feedback_due(options.step)) {
    for (const auto& e : batch) {
      if (e.caption) caps.push_back(e);
    }
  }
  if (!caps.empty()) {
    model::SampleOptions so;
    so.temperature = config.sample_temperature;
    so.rollout = config.rollout;
    so.label_actions = options.label_actions;
    so.seed = options.sample_seed;
    so.max_new_tokens = model.config().max_text_len;
    // the caption items get their own pass so N counts caption actions only
    const auto sampled = model::sample_batch(g, model, make_batch(caps), so);
    sampled_params = sampled.forward.params;

    std::vector<double> r_obj(caps.size());
    std::vector<judge::JudgeRequest> requests(caps.size());
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const auto s_sam = extract_objects(std::span<const int>(sampled.actions[i]), vocab);
      std::set<ObjectId> truth;
      for (const auto& name : caps[i].truth) truth.insert(vocab.lexicon().require(name));
      ObjectSet s_lab;
      s_lab.objects = truth;
      r_obj[i] = object_reward(s_sam, s_lab);
      requests[i].candidate = data::detokenize(sampled.actions[i], vocab);
      requests[i].reference = caps[i].reference;
      requests[i].truth_objects = caps[i].truth;
    }
    std::vector<double> r_sen(caps.size(), 0.0);
    double sigma = config.sigma;
    try {
      const auto responses = judge.score_all(requests);
      for (std::size_t i = 0; i < caps.size(); ++i) r_sen[i] = responses[i].score;
    } catch (const JudgeUnavailable& e) {
      fallback = true;
      judge_error = e.what();
      sigma = 0.0;
    }
    std::vector<double> rewards(caps.size());
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const auto rec = combine_rewards(r_sen[i], r_obj[i], sigma);
      rewards[i] = rec.r;
      mean_obj += rec.r_obj / double(caps.size());
      mean_sen += rec.r_sen / double(caps.size());
    }
    if (config.baseline) {
      double m = 0;
      for (double r : rewards) m += r / double(rewards.size());
      for (double& r : rewards) r -= m;
    }
    n_actions = sampled.count();
    if (n_actions > 0) l_rl = reinforce_loss(g, sampled, rewards);
  }

  auto total = total_loss(g, l_ce, l_rl, options.step, config);
  g.backward(total.loss);
  std::vector<Tensor> grads;
  grads.reserve(fwd.params.size());
  for (Var p : fwd.params) grads.push_back(g.grad(p));
  for (std::size_t i = 0; i < sampled_params.size(); ++i) {
    const Tensor& extra = g.grad(sampled_params[i]);
    for (std::size_t k = 0; k < extra.size(); ++k) grads[i][k] += extra[k];
  }
  if (adamw_step(model.parameters(), grads, optimizer, options.lr) != StepStatus::kApplied)
    throw Error("feedback_step: non-finite gradient at step " + std::to_string(options.step));
  auto& r = total.report;
  r.label_len = label_len;
  r.n_actions = n_actions;
  r.mean_r_obj = mean_obj;
  r.mean_r_sen = mean_sen;
  r.lr = options.lr;
  r.judge_fallback = fallback;
  r.judge_error = judge_error;
  return r;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train config: batch_size < 1");
  if (!(lr > 0)) throw InvalidArgument("train config: lr must be > 0");
  if (weight_decay < 0) throw InvalidArgument("train config: weight_decay < 0");
  if (warmup_ratio < 0 || warmup_ratio > 1)
    throw InvalidArgument("train config: warmup_ratio outside [0,1]");
  if (qa_fraction < 0 || qa_fraction > 1)
    throw InvalidArgument("train config: qa_fraction outside [0,1]");
  feedback.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"lr", lr},
          {"weight_decay", weight_decay}, {"warmup_ratio", warmup_ratio},
          {"qa_fraction", qa_fraction}, {"seed", seed},
          {"feedback", feedback.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.qa_fraction = j.value("qa_fraction", c.qa_fraction);
  c.seed = j.value("seed", c.seed);
  if (j.contains("feedback")) c.feedback = FeedbackConfig::from_json(j.at("feedback"));
  c.validate();
  return c;
}

Trainer::Trainer(model::Model& model, const data::Corpus& corpus, judge::Judge& judge,
                 TrainConfig config)
    : model_(model), corpus_(corpus), judge_(judge), config_(std::move(config)),
      rng_(config_.seed) {
  config_.validate();
  AdamWConfig ac;
  ac.lr = config_.lr;
  ac.weight_decay = config_.weight_decay;
  optim_ = OptimState::for_parameters(model_.parameters(), ac);
  schedule_.peak_lr = config_.lr;
  schedule_.warmup_ratio = config_.warmup_ratio;
  schedule_.total_steps = std::max<std::int64_t>(1, config_.feedback.total_steps);
  for (std::size_t i = 0; i < corpus_.scenes.size(); ++i) {
    const auto& s = corpus_.scenes[i];
    if (s.split != "train") continue;
    scenes_.push_back(&s);
    captions_.push_back(caption_example(s, corpus_.captions.at(i), corpus_.vocab, model_.config()));
  }
  if (scenes_.empty()) throw InvalidArgument("trainer: corpus has no train scenes");
}

std::vector<Example> Trainer::next_batch() {
  const std::size_t n_qa = std::size_t(std::lround(config_.qa_fraction * double(config_.batch_size)));
  std::uniform_int_distribution<std::size_t> pick(0, scenes_.size() - 1);
  std::vector<Example> out;
  for (std::size_t i = 0; i + n_qa < config_.batch_size; ++i) out.push_back(captions_[pick(rng_)]);
  const auto& lex = corpus_.vocab.lexicon();
  for (std::size_t i = 0; i < n_qa; ++i) {
    const data::Scene& s = *scenes_[pick(rng_)];
    data::ObjectId obj;
    if (std::bernoulli_distribution(0.5)(rng_)) {
      const auto ids = s.object_ids();
      obj = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng_)];
    } else {
      std::vector<data::ObjectId> absent;
      for (std::size_t o = 0; o < lex.size(); ++o) {
        if (!s.contains(data::ObjectId(o))) absent.push_back(data::ObjectId(o));
      }
      obj = absent[std::uniform_int_distribution<std::size_t>(0, absent.size() - 1)(rng_)];
    }
    out.push_back(question_example(s, obj, corpus_.vocab, model_.config()));
  }
  return out;
}

LossReport Trainer::step() {
  if (done()) throw InvalidArgument("trainer: already at total_steps");
  const auto batch = next_batch();
  StepOptions so;
  so.step = step_;
  so.lr = lr_at(step_, schedule_);
  so.sample_seed = config_.seed * 1000003ULL + std::uint64_t(step_);
  auto report = feedback_step(model_, batch, corpus_.vocab, judge_, config_.feedback, optim_, so);
  ++step_;
  return report;
}

void Trainer::run(const std::function<void(const LossReport&)>& on_report,
                  const std::function<void(const model::Model&)>& on_switch) {
  while (!done()) {
    if (!switched_ && config_.feedback.phase(step_) == Phase::kCombined) {
      switched_ = true;
      if (on_switch) on_switch(model_);
    }
    const auto r = step();
    if (on_report) on_report(r);
  }
  if (!switched_) {
    switched_ = true;
    if (on_switch) on_switch(model_);
  }
}

}  // namespace helpd::feedback
