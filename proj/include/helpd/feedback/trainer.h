#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "helpd/data/corpus.h"
#include "helpd/feedback/feedback.h"
#include "helpd/judge/judge.h"
#include "helpd/model/model.h"
#include "helpd/numerics/optim.h"

namespace helpd::feedback {

// One supervised sequence. Captions: inputs [bos, describe, w1..wn],
// targets [-1, w1..wn, eos]. Questions: inputs [bos, question.., answer],
// targets [-1.., answer, eos].
struct Example {
  int scene_id = 0;
  model::PrefixSlots prefix;
  std::vector<int> inputs;
  std::vector<int> targets;
  bool caption = true;
  std::string reference;                // label caption (captions only)
  std::vector<std::string> truth;       // canonical scene objects
};

Example caption_example(const data::Scene& scene, const data::CaptionRecord& caption,
                        const data::Vocabulary& vocab, const model::ModelConfig& config);
Example question_example(const data::Scene& scene, data::ObjectId object,
                         const data::Vocabulary& vocab, const model::ModelConfig& config);
model::TokenBatch make_batch(std::span<const Example> examples);

struct StepOptions {
  std::int64_t step = 0;
  double lr = 1e-4;
  std::uint64_t sample_seed = 0;
  bool label_actions = false;  // force sampled actions to the labels
};

// One optimizer update. Always forms the summed cross-entropy; on steps
// where config.feedback_due(step) it also samples actions for the caption
// items, rewards them (object F1 mixed with the judge score) and adds the
// REINFORCE term per total_loss. A failing judge falls back to r = r_obj
// and flags the report.
LossReport feedback_step(model::Model& model, std::span<const Example> batch,
                         const data::Vocabulary& vocab, judge::Judge& judge,
                         const FeedbackConfig& config, OptimState& optimizer,
                         const StepOptions& options);

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr = 3e-3;
  double weight_decay = 0.1;
  double warmup_ratio = 0.03;
  double qa_fraction = 0.25;  // share of yes/no question items per batch
  std::uint64_t seed = 0;
  FeedbackConfig feedback;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

// Draws batches from the train split and steps through both phases.
class Trainer {
 public:
  Trainer(model::Model& model, const data::Corpus& corpus, judge::Judge& judge,
          TrainConfig config);

  LossReport step();
  std::int64_t current_step() const { return step_; }
  bool done() const { return step_ >= config_.feedback.total_steps; }

  // Steps until done. `on_switch` sees the model right before the first
  // combined-phase step (the CE-only checkpoint); it also fires at the end
  // when no combined step exists.
  void run(const std::function<void(const LossReport&)>& on_report,
           const std::function<void(const model::Model&)>& on_switch = {});

  std::vector<Example> next_batch();
  const TrainConfig& config() const { return config_; }

 private:
  model::Model& model_;
  const data::Corpus& corpus_;
  judge::Judge& judge_;
  TrainConfig config_;
  OptimState optim_;
  LrSchedule schedule_;
  std::mt19937_64 rng_;
  std::vector<Example> captions_;
  std::vector<const data::Scene*> scenes_;
  std::int64_t step_ = 0;
  bool switched_ = false;
};

}  // namespace helpd::feedback
