#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "helpd/data/vocab.h"

namespace helpd::feedback {

using data::ObjectId;

// Canonical objects found in a text, with the word positions where each
// match starts.
struct ObjectSet {
  std::set<ObjectId> objects;
  std::map<ObjectId, std::vector<std::size_t>> positions;

  std::size_t size() const { return objects.size(); }
  bool empty() const { return objects.empty(); }
  bool contains(ObjectId id) const { return objects.count(id) > 0; }
  static ObjectSet of(std::initializer_list<ObjectId> ids);
  static ObjectSet of(const std::vector<ObjectId>& ids);
};

// Longest-match-first scan over lexicon surface forms (singular, plural,
// synonyms). Unknown words are skipped.
ObjectSet extract_objects(std::span<const std::string> words, const data::ObjectLexicon& lexicon);
ObjectSet extract_objects(std::string_view text, const data::ObjectLexicon& lexicon);
ObjectSet extract_objects(std::span<const int> tokens, const data::Vocabulary& vocab);

// Anything that maps text to an object set; the lexicon matcher is the
// default.
class ObjectExtractor {
 public:
  virtual ~ObjectExtractor() = default;
  virtual ObjectSet extract(std::string_view text) const = 0;
};

class LexiconExtractor : public ObjectExtractor {
 public:
  explicit LexiconExtractor(const data::ObjectLexicon& lexicon) : lexicon_(lexicon) {}
  ObjectSet extract(std::string_view text) const override {
    return extract_objects(text, lexicon_);
  }

 private:
  const data::ObjectLexicon& lexicon_;
};

}  // namespace helpd::feedback
