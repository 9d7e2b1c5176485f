#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "helpd/data/corpus.h"
#include "helpd/decoding/decoding.h"
#include "helpd/model/model.h"
#include "json.hpp"

namespace helpd::eval {

using data::ObjectId;
using Annotations = std::map<int, std::set<ObjectId>>;  // image id -> truth objects

struct ChairInput {
  int image_id = 0;
  std::string caption;
  std::size_t n_tokens = 0;  // generated tokens, eos excluded
};

struct ChairReport {
  double instance_ratio = 0.0;  // hallucinated mentions / all mentions
  double sentence_ratio = 0.0;  // captions with a hallucination / all captions
  double avg_len = 0.0;
  std::size_t n_captions = 0;
  std::size_t n_mentions = 0;
  std::size_t n_hallucinated = 0;
  std::size_t n_hallucinated_captions = 0;

  nlohmann::ordered_json to_json() const;
  static ChairReport from_json(const nlohmann::ordered_json& j);
};

// Mentions are the distinct lexicon objects of each caption. Throws
// InvalidArgument naming the image when an annotation is missing.
ChairReport chair(std::span<const ChairInput> captions, const Annotations& annotations,
                  const data::ObjectLexicon& lexicon);

// Decodes a caption for every scene from the caption prompt.
std::vector<ChairInput> describe_scenes(const model::Model& model,
                                        std::span<const data::Scene* const> scenes,
                                        const data::Vocabulary& vocab,
                                        const decoding::DecodeConfig& config, std::size_t jobs);

Annotations annotations_from(std::span<const data::Scene> scenes);
Annotations annotations_from(std::span<const data::Scene* const> scenes);
Annotations annotations_from(std::span<const data::CaptionRecord> records,
                             const data::ObjectLexicon& lexicon);

enum class PopeStrategy { kRandom, kPopular, kAdversarial };
PopeStrategy parse_pope_strategy(std::string_view s);
std::string pope_strategy_name(PopeStrategy s);

struct PopeTriple {
  int image_id = 0;
  ObjectId object = 0;
  std::string question;
  bool gold_yes = false;
  PopeStrategy strategy = PopeStrategy::kRandom;

  friend bool operator==(const PopeTriple&, const PopeTriple&) = default;
};

// Object frequencies and pairwise co-occurrence counts over a scene set.
struct CooccurrenceStats {
  std::vector<std::size_t> frequency;             // [n_objects]
  std::vector<std::vector<std::size_t>> counts;  // [n_objects][n_objects], zero diagonal

  static CooccurrenceStats from(std::span<const std::set<ObjectId>> scenes,
                                std::size_t n_objects);
};

// Per image: min(qpi/2, |present|) yes-questions on present objects (drawn
// at random) and as many no-questions on absent ones, picked uniformly
// (random), by frequency (popular) or by summed co-occurrence with the
// present objects (adversarial); ties go to the lower id. Throws
// InvalidArgument for an odd or zero qpi or too few absent objects.
std::vector<PopeTriple> build_pope(const Annotations& images, const CooccurrenceStats& stats,
                                   PopeStrategy strategy, std::size_t questions_per_image,
                                   std::uint64_t seed, const data::ObjectLexicon& lexicon);

struct PopeAnswer {
  bool yes = false;
  bool unmappable = false;
  std::string text;
};

// First word against yes/no lexemes; anything else is "no" and flagged.
PopeAnswer map_answer(std::string_view text);

// Generates the answer for one triple from the question prompt.
PopeAnswer answer_pope(const model::Model& model, const data::Scene& scene,
                       const PopeTriple& triple, const data::Vocabulary& vocab,
                       const decoding::DecodeConfig& config);
// Parallel over triples with up to `jobs` threads; order preserved.
std::vector<PopeAnswer> answer_pope_all(const model::Model& model, const data::Corpus& corpus,
                                        std::span<const PopeTriple> triples,
                                        const decoding::DecodeConfig& config, std::size_t jobs);

struct PopeReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double yes_rate = 0.0;
  std::size_t n = 0, tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t unmappable = 0;

  nlohmann::ordered_json to_json() const;
  static PopeReport from_json(const nlohmann::ordered_json& j);
};

// "yes" is the positive class. Zero predicted yes gives precision 0; zero
// gold yes gives recall 0. Throws InvalidArgument on a length mismatch.
PopeReport eval_pope(std::span<const PopeAnswer> predictions, std::span<const PopeTriple> triples);

}  // namespace helpd::eval
