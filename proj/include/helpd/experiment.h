#pragma once

#include <functional>
#include <vector>

#include "helpd/eval/eval.h"
#include "helpd/feedback/trainer.h"
#include "helpd/judge/judge.h"
#include "helpd/presets.h"

namespace helpd {

// Decodes the heldout split with `strategy` (penalty flags from the
// strategy preset, everything else from preset.decode) and scores it.
eval::ChairReport heldout_chair(const model::Model& model, const data::Corpus& corpus,
                                const Preset& preset, decoding::Strategy strategy);

// POPE triples over the heldout split; co-occurrence counted on train.
std::vector<eval::PopeTriple> heldout_pope_triples(const data::Corpus& corpus,
                                                   const Preset& preset);
// Greedy two-token answers, scored.
eval::PopeReport pope_report(const model::Model& model, const data::Corpus& corpus,
                             std::span<const eval::PopeTriple> triples, const Preset& preset);

struct CheckpointScores {
  eval::ChairReport beam;
  eval::ChairReport overtrust;  // CE checkpoint only
  eval::ChairReport vep;        // CE checkpoint only
  eval::PopeReport pope;

  nlohmann::ordered_json to_json() const;
};

struct ProtocolRun {
  std::uint64_t seed = 0;
  CheckpointScores ce;        // at the switch to feedback (or the end when c = 1)
  CheckpointScores feedback;  // after the last step
  double seconds = 0.0;

  nlohmann::ordered_json to_json() const;
};

// Generates the corpus, trains with `judge`, and scores both checkpoints.
ProtocolRun run_protocol(const Preset& preset, judge::Judge& judge,
                         const std::function<void(const feedback::LossReport&)>& on_report = {});

}  // namespace helpd
