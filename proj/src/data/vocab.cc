#include "helpd/data/vocab.h"

#include <algorithm>
#include <cctype>

#include "helpd/data/corpus.h"

namespace helpd::data {

ObjectLexicon::ObjectLexicon(std::vector<ObjectEntry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto id = static_cast<ObjectId>(i);
    if (!by_name_.emplace(entries_[i].name, id).second) {
      throw InvalidArgument("lexicon: duplicate object " + entries_[i].name);
    }
    std::vector<std::string> forms{entries_[i].name, entries_[i].plural};
    forms.insert(forms.end(), entries_[i].synonyms.begin(),
                 entries_[i].synonyms.end());
    for (const auto& f : forms) {
      if (f.empty()) continue;
      Surface s{split_words(f), id};
      const bool dup = std::any_of(surfaces_.begin(), surfaces_.end(),
                                   [&](const Surface& o) { return o.words == s.words; });
      if (!dup) surfaces_.push_back(std::move(s));
    }
  }
  std::stable_sort(surfaces_.begin(), surfaces_.end(),
                   [](const Surface& a, const Surface& b) {
                     return a.words.size() > b.words.size();
                   });
}

ObjectLexicon ObjectLexicon::standard() {
  return ObjectLexicon({
      {"cat", "cats", {"kitten"}},
      {"dog", "dogs", {"puppy"}},
      {"fork", "forks", {}},
      {"knife", "knives", {}},
      {"car", "cars", {}},
      {"traffic light", "traffic lights", {}},
      {"bed", "beds", {}},
      {"pillow", "pillows", {}},
      {"person", "people", {"man", "woman"}},
      {"bicycle", "bicycles", {"bike"}},
      {"bird", "birds", {}},
      {"horse", "horses", {}},
      {"sheep", "sheep", {}},
      {"cow", "cows", {}},
      {"elephant", "elephants", {}},
      {"bear", "bears", {}},
      {"zebra", "zebras", {}},
      {"giraffe", "giraffes", {}},
      {"umbrella", "umbrellas", {}},
      {"bottle", "bottles", {}},
      {"cup", "cups", {"mug"}},
      {"bowl", "bowls", {}},
      {"banana", "bananas", {}},
      {"apple", "apples", {}},
      {"chair", "chairs", {}},
      {"couch", "couches", {"sofa"}},
      {"tv", "tvs", {"television"}},
      {"laptop", "laptops", {}},
      {"clock", "clocks", {}},
      {"vase", "vases", {}},
      {"teddy bear", "teddy bears", {}},
      {"hot dog", "hot dogs", {}},
  });
}

std::optional<ObjectId> ObjectLexicon::find(std::string_view canonical) const {
  auto it = by_name_.find(canonical);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

ObjectId ObjectLexicon::require(std::string_view canonical) const {
  auto id = find(canonical);
  if (!id) {
    throw InvalidArgument("lexicon: unknown object '" + std::string(canonical) + "'");
  }
  return *id;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words,
                       ObjectLexicon lexicon)
    : lexicon_(std::move(lexicon)) {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "yes", "no"}) add(s);
  for (const auto& w : words) add(w);
  for (const auto& s : lexicon_.surfaces()) {
    for (const auto& w : s.words) add(w);
  }
}

Vocabulary Vocabulary::standard(ObjectLexicon lexicon) {
  std::vector<std::string> words{"a",     "two", "and",   ".",   "describe",
                                 "is",    "there", "in",  "the", "image",
                                 "?"};
  for (const auto& a : standard_attributes()) words.push_back(a);
  return Vocabulary(words, std::move(lexicon));
}

void Vocabulary::add(const std::string& word) {
  if (index_.count(word)) return;
  index_.emplace(word, static_cast<TokenId>(words_.size()));
  words_.push_back(word);
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.find(word) != index_.end();
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || std::size_t(id) >= words_.size()) {
    throw InvalidArgument("vocabulary: token id " + std::to_string(id) +
                          " out of range");
  }
  return words_[std::size_t(id)];
}

nlohmann::ordered_json Vocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["words"] = words_;
  auto objs = nlohmann::ordered_json::array();
  for (const auto& e : lexicon_.entries()) {
    objs.push_back({{"name", e.name}, {"plural", e.plural}, {"synonyms", e.synonyms}});
  }
  j["objects"] = objs;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::ordered_json& j) {
  std::vector<ObjectEntry> entries;
  for (const auto& o : j.at("objects")) {
    entries.push_back({o.at("name").get<std::string>(),
                       o.at("plural").get<std::string>(),
                       o.value("synonyms", std::vector<std::string>{})});
  }
  Vocabulary v;
  v.lexicon_ = ObjectLexicon(std::move(entries));
  for (const auto& w : j.at("words")) v.add(w.get<std::string>());
  if (v.size() < 6 || v.word(kEos) != "<eos>" || v.word(kNo) != "no") {
    throw ParseError("vocabulary: special tokens missing or reordered", 0);
  }
  for (const auto& s : v.lexicon_.surfaces()) {
    for (const auto& w : s.words) {
      if (!v.contains(w)) {
        throw ParseError("vocabulary: lexicon word '" + w + "' not in words", 0);
      }
    }
  }
  return v;
}

namespace {
bool is_punct(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ':' || c == ';';
}
}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos) {
      continue;
    }
    const std::string& w = vocab.word(id);
    const bool punct = w.size() == 1 && is_punct(w[0]);
    if (!out.empty() && !punct) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace helpd::data
