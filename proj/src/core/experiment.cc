#include "helpd/experiment.h"

#include <chrono>

namespace helpd {

eval::ChairReport heldout_chair(const model::Model& model, const data::Corpus& corpus,
                                const Preset& preset, decoding::Strategy strategy) {
  auto cfg = preset.decode;
  const auto flags = decoding::DecodeConfig::for_strategy(strategy);
  cfg.strategy = flags.strategy;
  cfg.enable_overtrust = flags.enable_overtrust;
  cfg.enable_vision = flags.enable_vision;
  const auto held = corpus.split("heldout");
  const auto caps = eval::describe_scenes(model, held, corpus.vocab, cfg, preset.jobs);
  return eval::chair(caps, eval::annotations_from(std::span<const data::Scene* const>(held)),
                     corpus.vocab.lexicon());
}

std::vector<eval::PopeTriple> heldout_pope_triples(const data::Corpus& corpus,
                                                   const Preset& preset) {
  std::vector<std::set<data::ObjectId>> train;
  for (const auto* s : corpus.split("train")) {
    const auto ids = s->object_ids();
    train.emplace_back(ids.begin(), ids.end());
  }
  const auto& lex = corpus.vocab.lexicon();
  const auto stats = eval::CooccurrenceStats::from(train, lex.size());
  const auto held = corpus.split("heldout");
  return eval::build_pope(eval::annotations_from(std::span<const data::Scene* const>(held)),
                          stats, eval::parse_pope_strategy(preset.pope_strategy),
                          preset.pope_questions, preset.corpus.seed, lex);
}

eval::PopeReport pope_report(const model::Model& model, const data::Corpus& corpus,
                             std::span<const eval::PopeTriple> triples, const Preset& preset) {
  auto cfg = decoding::DecodeConfig::for_strategy(decoding::Strategy::kGreedy);
  cfg.max_new_tokens = 2;  // answer word and eos
  const auto answers = eval::answer_pope_all(model, corpus, triples, cfg, preset.jobs);
  return eval::eval_pope(answers, triples);
}

nlohmann::ordered_json CheckpointScores::to_json() const {
  return {{"beam", beam.to_json()},
          {"overtrust", overtrust.to_json()},
          {"vep", vep.to_json()},
          {"pope", pope.to_json()}};
}

nlohmann::ordered_json ProtocolRun::to_json() const {
  return {{"seed", seed}, {"ce", ce.to_json()}, {"feedback", feedback.to_json()},
          {"seconds", seconds}};
}

ProtocolRun run_protocol(const Preset& preset, judge::Judge& judge,
                         const std::function<void(const feedback::LossReport&)>& on_report) {
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolRun run;
  run.seed = preset.corpus.seed;
  const auto corpus = data::gen_corpus(preset.corpus);
  const auto triples = heldout_pope_triples(corpus, preset);
  model::Model m(preset.model, preset.train.seed);
  feedback::Trainer trainer(m, corpus, judge, preset.train);
  trainer.run(on_report, [&](const model::Model& ce) {
    run.ce.beam = heldout_chair(ce, corpus, preset, decoding::Strategy::kBeam);
    run.ce.overtrust = heldout_chair(ce, corpus, preset, decoding::Strategy::kOvertrust);
    run.ce.vep = heldout_chair(ce, corpus, preset, decoding::Strategy::kVep);
    run.ce.pope = pope_report(ce, corpus, triples, preset);
  });
  run.feedback.beam = heldout_chair(m, corpus, preset, decoding::Strategy::kBeam);
  run.feedback.pope = pope_report(m, corpus, triples, preset);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace helpd
