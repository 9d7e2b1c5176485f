#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "helpd/data/vocab.h"

namespace helpd::data {

const std::vector<std::string>& standard_attributes();

struct SceneObject {
  ObjectId object = 0;
  int attribute = 0;  // index into standard_attributes()
  int count = 1;      // 1 or 2

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

inline constexpr int kNoGroup = -1;

struct Scene {
  int id = 0;
  std::vector<SceneObject> objects;  // unique objects, ascending object id
  int group = kNoGroup;              // index of the biased pair that anchored it
  std::string split;                 // "train" or "heldout"

  std::vector<ObjectId> object_ids() const;
  bool contains(ObjectId id) const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct CaptionRecord {
  int scene_id = 0;
  std::string caption;
  std::vector<std::string> objects;  // canonical names, truth annotation
  std::string split;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

struct BiasPair {
  std::string first;
  std::string second;
  double probability = 0.8;  // P(both present | either present)
};

struct BiasConfig {
  std::vector<BiasPair> pairs;
  double unanchored_fraction = 0.2;  // train scenes without any biased pair
  int min_objects = 1;
  int max_objects = 6;
  double plural_rate = 0.25;

  // cat/dog, fork/knife, car/traffic light, bed/pillow at 0.8.
  static BiasConfig standard();
  nlohmann::ordered_json to_json() const;
  static BiasConfig from_json(const nlohmann::ordered_json& j);
};

struct CorpusConfig {
  std::uint64_t seed = 0;
  int n_scenes = 5000;   // train split
  int n_heldout = 300;   // broken-pair split
  BiasConfig bias = BiasConfig::standard();
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Scene> scenes;  // train scenes first, then heldout
  std::vector<CaptionRecord> captions;  // one per scene, same order

  std::vector<const Scene*> split(const std::string& name) const;
  const Scene& scene(int id) const;
};

// Deterministic in (seed, config). Train scenes anchored on a biased pair
// contain the partner for round(p * n) of the n scenes anchored on that
// pair; biased-pair members never appear as filler objects. Heldout scenes
// always contain one member of a pair and never its partner.
Corpus gen_corpus(const CorpusConfig& config);

// "a red cat and two small dogs." with objects in the given order.
std::string caption_text(const Scene& scene, std::span<const std::size_t> order,
                         const ObjectLexicon& lexicon);
// "is there a cat?"
std::string question_text(ObjectId object, const ObjectLexicon& lexicon);

// Model prompts: [bos, describe] and [bos] + question tokens.
std::vector<TokenId> caption_prompt(const Vocabulary& vocab);
std::vector<TokenId> question_prompt(ObjectId object, const Vocabulary& vocab);

// Caption JSONL: one object per line with scene_id, caption, objects, split;
// any other fields are kept in `extra` and written back after those.
std::vector<CaptionRecord> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::vector<CaptionRecord>& records,
                const std::filesystem::path& path);

std::vector<Scene> load_scenes(const std::filesystem::path& path,
                               const ObjectLexicon& lexicon);
void save_scenes(const std::vector<Scene>& scenes,
                 const std::filesystem::path& path,
                 const ObjectLexicon& lexicon);

Vocabulary load_vocab(const std::filesystem::path& path);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);

// Writes scenes.jsonl, train.jsonl, heldout.jsonl, vocab.json and
// bias_config.json under `dir`; load_corpus reads them back.
void save_corpus(const Corpus& corpus, const CorpusConfig& config,
                 const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace helpd::data
