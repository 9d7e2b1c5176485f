#pragma once

// Random toy corpora with known mentions, plus set-arithmetic versions of
// the CHAIR and POPE numbers. Shared by the unit and acceptance tests.

#include <algorithm>
#include <iterator>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "helpd/eval/eval.h"

namespace helpd::testing {

inline const char* const kMicroNames[] = {"cat", "dog", "fork", "knife",
                                          "car", "bed", "cup", "vase"};

inline data::ObjectLexicon micro_lexicon(std::size_t n) {
  std::vector<data::ObjectEntry> e;
  for (std::size_t i = 0; i < n; ++i) {
    e.push_back({kMicroNames[i], std::string(kMicroNames[i]) + "s", {}});
  }
  return data::ObjectLexicon(e);
}

struct Micro {
  data::ObjectLexicon lex;
  std::vector<eval::ChairInput> captions;
  std::vector<std::set<int>> mentioned;  // recorded while writing the text
  eval::Annotations truth;
};

// <= 10 captions over <= 8 objects; mentions are singular or plural and
// mixed with filler words.
inline Micro random_micro(std::mt19937_64& rng) {
  static const char* const filler[] = {"a", "red", "and", "the", "small", "."};
  const std::size_t n_obj = 1 + rng() % 8;
  Micro m{micro_lexicon(n_obj), {}, {}, {}};
  const std::size_t n_img = 1 + rng() % 5;
  for (std::size_t i = 0; i < n_img; ++i) {
    std::set<int> t;
    for (std::size_t o = 0; o < n_obj; ++o) {
      if (rng() % 2) t.insert(int(o));
    }
    m.truth[int(i) * 7] = t;
  }
  const std::size_t n_cap = rng() % 11;
  for (std::size_t c = 0; c < n_cap; ++c) {
    std::string text;
    std::set<int> said;
    const std::size_t words = rng() % 9;
    for (std::size_t w = 0; w < words; ++w) {
      if (!text.empty()) text += ' ';
      if (rng() % 3 == 0) {
        const int o = int(rng() % n_obj);
        text += rng() % 2 ? std::string(kMicroNames[o]) : std::string(kMicroNames[o]) + "s";
        said.insert(o);
      } else {
        text += filler[rng() % 6];
      }
    }
    m.captions.push_back({int(rng() % n_img) * 7, text, words});
    m.mentioned.push_back(said);
  }
  return m;
}

inline std::set<int> set_minus(const std::set<int>& a, const std::set<int>& b) {
  std::set<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

struct OracleChair {
  std::size_t mentions = 0, hallucinated = 0, bad_captions = 0, tokens = 0;
  double instance = 0, sentence = 0, avg_len = 0;
};

inline OracleChair oracle_chair(const Micro& m) {
  OracleChair o;
  for (std::size_t i = 0; i < m.captions.size(); ++i) {
    const auto wrong = set_minus(m.mentioned[i], m.truth.at(m.captions[i].image_id));
    o.mentions += m.mentioned[i].size();
    o.hallucinated += wrong.size();
    o.bad_captions += wrong.empty() ? 0 : 1;
    o.tokens += m.captions[i].n_tokens;
  }
  const double n = double(m.captions.size());
  o.instance = o.mentions ? double(o.hallucinated) / double(o.mentions) : 0.0;
  o.sentence = n > 0 ? double(o.bad_captions) / n : 0.0;
  o.avg_len = n > 0 ? double(o.tokens) / n : 0.0;
  return o;
}

inline bool chair_matches(const eval::ChairReport& r, const OracleChair& o) {
  return r.n_mentions == o.mentions && r.n_hallucinated == o.hallucinated &&
         r.n_hallucinated_captions == o.bad_captions && r.instance_ratio == o.instance &&
         r.sentence_ratio == o.sentence && r.avg_len == o.avg_len;
}

struct MicroPope {
  std::vector<eval::PopeTriple> triples;
  std::vector<eval::PopeAnswer> answers;
};

inline MicroPope random_pope(std::mt19937_64& rng) {
  MicroPope p;
  const std::size_t n = 1 + rng() % 10;
  p.triples.resize(n);
  p.answers.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.triples[i].gold_yes = rng() % 2;
    p.answers[i].yes = rng() % 2;
    p.answers[i].unmappable = !p.answers[i].yes && rng() % 4 == 0;
  }
  return p;
}

// Index sets: gold yes, predicted yes, their intersection.
inline bool pope_matches(const eval::PopeReport& rep, const MicroPope& p) {
  std::set<std::size_t> gold, said, odd, tp;
  for (std::size_t i = 0; i < p.triples.size(); ++i) {
    if (p.triples[i].gold_yes) gold.insert(i);
    if (p.answers[i].yes) said.insert(i);
    if (p.answers[i].unmappable) odd.insert(i);
  }
  std::set_intersection(gold.begin(), gold.end(), said.begin(), said.end(),
                        std::inserter(tp, tp.end()));
  const double n = double(p.triples.size());
  const double TP = double(tp.size()), FP = double(said.size() - tp.size()),
               FN = double(gold.size() - tp.size()), TN = n - TP - FP - FN;
  const double prec = said.empty() ? 0.0 : TP / double(said.size());
  const double rec = gold.empty() ? 0.0 : TP / double(gold.size());
  const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  return double(rep.tp) == TP && double(rep.fp) == FP && double(rep.fn) == FN &&
         double(rep.tn) == TN && rep.accuracy == (TP + TN) / n && rep.precision == prec &&
         rep.recall == rec && rep.f1 == f1 && rep.yes_rate == double(said.size()) / n &&
         rep.unmappable == odd.size();
}

}  // namespace helpd::testing
