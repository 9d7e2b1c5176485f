#pragma once

#include <cstdint>
#include <string>

#include "helpd/data/corpus.h"
#include "helpd/decoding/decoding.h"
#include "helpd/feedback/trainer.h"
#include "helpd/model/model.h"

namespace helpd {

// Settings for the CPU-sized experiments: corpus, model, training and the
// decoding used for evaluation. Everything else derives from these.
struct Preset {
  data::CorpusConfig corpus;
  model::ModelConfig model;
  feedback::TrainConfig train;
  decoding::DecodeConfig decode;
  std::size_t pope_questions = 6;
  std::string pope_strategy = "adversarial";
  std::size_t jobs = 1;

  nlohmann::ordered_json to_json() const;
  // Missing keys keep the defaults of `base`.
  static Preset from_json(const nlohmann::ordered_json& j, const Preset& base);
};

Preset desk_preset(std::uint64_t seed = 0);

}  // namespace helpd
