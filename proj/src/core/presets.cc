#include "helpd/presets.h"

namespace helpd {

Preset desk_preset(std::uint64_t seed) {
  Preset p;
  p.corpus.seed = seed;
  p.corpus.n_scenes = 3000;
  p.corpus.n_heldout = 300;
  for (auto& pair : p.corpus.bias.pairs) pair.probability = 0.9;

  const auto vocab = data::Vocabulary::standard();
  p.model.vocab_size = vocab.size();
  p.model.n_objects = vocab.lexicon().size();
  p.model.prefix_len = 8;  // max_objects is 6; fewer blank slots

  p.train.seed = seed;
  p.train.feedback.total_steps = 2000;
  p.train.feedback.c = 0.7;
  p.train.feedback.sigma = 0.6;

  p.decode = decoding::DecodeConfig::for_strategy(decoding::Strategy::kBeam);
  p.decode.gamma = 1.0;  // attention weights here are O(0.1), not O(1/1000)
  p.decode.seed = seed;
  return p;
}

nlohmann::ordered_json Preset::to_json() const {
  return {{"corpus",
           {{"seed", corpus.seed},
            {"n_scenes", corpus.n_scenes},
            {"n_heldout", corpus.n_heldout},
            {"bias", corpus.bias.to_json()}}},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"decode", decode.to_json()},
          {"pope_questions", pope_questions},
          {"pope_strategy", pope_strategy},
          {"jobs", jobs}};
}

Preset Preset::from_json(const nlohmann::ordered_json& j, const Preset& base) {
  Preset p = base;
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    p.corpus.seed = c.value("seed", p.corpus.seed);
    p.corpus.n_scenes = c.value("n_scenes", p.corpus.n_scenes);
    p.corpus.n_heldout = c.value("n_heldout", p.corpus.n_heldout);
    if (c.contains("bias")) p.corpus.bias = data::BiasConfig::from_json(c.at("bias"));
  }
  if (j.contains("model")) {
    auto merged = p.model.to_json();
    merged.update(j.at("model"));
    p.model = model::ModelConfig::from_json(merged);
  }
  if (j.contains("train")) {
    auto merged = p.train.to_json();
    for (const auto& [k, v] : j.at("train").items()) {
      if (k == "feedback") {
        merged["feedback"].update(v);
      } else {
        merged[k] = v;
      }
    }
    p.train = feedback::TrainConfig::from_json(merged);
  }
  if (j.contains("decode")) {
    auto merged = p.decode.to_json();
    const auto& d = j.at("decode");
    if (d.contains("strategy")) {
      // a new strategy brings its own penalty flags unless given explicitly
      const auto flags = decoding::DecodeConfig::for_strategy(
          decoding::parse_strategy(d.at("strategy").get<std::string>()));
      merged["enable_overtrust"] = flags.enable_overtrust;
      merged["enable_vision"] = flags.enable_vision;
    }
    merged.update(d);
    p.decode = decoding::DecodeConfig::from_json(merged);
  }
  p.pope_questions = j.value("pope_questions", p.pope_questions);
  p.pope_strategy = j.value("pope_strategy", p.pope_strategy);
  p.jobs = j.value("jobs", p.jobs);
  return p;
}

}  // namespace helpd
