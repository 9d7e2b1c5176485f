#include "helpd/feedback/objects.h"

#include <algorithm>

namespace helpd::feedback {

ObjectSet ObjectSet::of(std::initializer_list<ObjectId> ids) {
  return of(std::vector<ObjectId>(ids));
}

ObjectSet ObjectSet::of(const std::vector<ObjectId>& ids) {
  ObjectSet s;
  for (ObjectId id : ids) s.objects.insert(id);
  return s;
}

ObjectSet extract_objects(std::span<const std::string> words,
                          const data::ObjectLexicon& lexicon) {
  ObjectSet out;
  const auto& surfaces = lexicon.surfaces();  // longest first
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    for (const auto& s : surfaces) {
      const std::size_t n = s.words.size();
      if (n == 0 || i + n > words.size()) continue;
      if (std::equal(s.words.begin(), s.words.end(), words.begin() + std::ptrdiff_t(i))) {
        out.objects.insert(s.id);
        out.positions[s.id].push_back(i);
        matched = n;
        break;
      }
    }
    i += matched ? matched : 1;
  }
  return out;
}

ObjectSet extract_objects(std::string_view text, const data::ObjectLexicon& lexicon) {
  const auto words = data::split_words(text);
  return extract_objects(std::span<const std::string>(words), lexicon);
}

ObjectSet extract_objects(std::span<const int> tokens, const data::Vocabulary& vocab) {
  std::vector<std::string> words;
  for (int t : tokens) {
    if (t == data::Vocabulary::kEos) break;
    if (t == data::Vocabulary::kPad || t == data::Vocabulary::kBos) continue;
    words.push_back(vocab.word(t));
  }
  return extract_objects(std::span<const std::string>(words), vocab.lexicon());
}

}  // namespace helpd::feedback
