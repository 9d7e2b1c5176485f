#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "helpd/common.h"
#include "json.hpp"

namespace helpd::data {

using ObjectId = int;
using TokenId = int;

struct ObjectEntry {
  std::string name;    // canonical singular form, may be multi-word
  std::string plural;  // surface form for count > 1
  std::vector<std::string> synonyms;
};

// Closed object vocabulary with every surface form that maps onto each
// canonical id.
class ObjectLexicon {
 public:
  ObjectLexicon() = default;
  explicit ObjectLexicon(std::vector<ObjectEntry> entries);

  // 32 everyday objects, a few with synonyms and multi-word names.
  static ObjectLexicon standard();

  std::size_t size() const { return entries_.size(); }
  const ObjectEntry& entry(ObjectId id) const { return entries_.at(std::size_t(id)); }
  const std::string& name(ObjectId id) const { return entry(id).name; }
  std::optional<ObjectId> find(std::string_view canonical) const;
  ObjectId require(std::string_view canonical) const;

  // Surface forms as word sequences, longest first.
  struct Surface {
    std::vector<std::string> words;
    ObjectId id;
  };
  const std::vector<Surface>& surfaces() const { return surfaces_; }

  const std::vector<ObjectEntry>& entries() const { return entries_; }

 private:
  std::vector<ObjectEntry> entries_;
  std::map<std::string, ObjectId, std::less<>> by_name_;
  std::vector<Surface> surfaces_;
};

// Word-level vocabulary. Ids 0..5 are the special tokens below.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kYes = 4;
  static constexpr TokenId kNo = 5;

  Vocabulary() = default;
  // Specials, then `words` in order, then every word the lexicon needs.
  Vocabulary(const std::vector<std::string>& words, ObjectLexicon lexicon);

  // The words the caption and question templates use.
  static Vocabulary standard(ObjectLexicon lexicon = ObjectLexicon::standard());

  std::size_t size() const { return words_.size(); }
  TokenId id(std::string_view word) const;  // kUnk if absent
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  const ObjectLexicon& lexicon() const { return lexicon_; }

  nlohmann::ordered_json to_json() const;
  static Vocabulary from_json(const nlohmann::ordered_json& j);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_;
  }

 private:
  void add(const std::string& word);

  std::vector<std::string> words_;
  std::map<std::string, TokenId, std::less<>> index_;
  ObjectLexicon lexicon_;
};

// Lower-case words with punctuation (.,?!:;) split off as separate tokens.
std::vector<std::string> split_words(std::string_view text);
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);
// Space-joined words; no space before punctuation; specials are dropped.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

}  // namespace helpd::data
