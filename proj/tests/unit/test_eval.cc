#include <algorithm>
#include <random>

#include "doctest.h"
#include "helpd/eval/eval.h"
#include "support/micro_corpus.h"

using namespace helpd;
using namespace helpd::eval;

using helpd::testing::micro_lexicon;

TEST_CASE("chair hand example") {
  const auto lex = micro_lexicon(4);
  Annotations truth{{1, {0, 2}}, {2, {1}}};
  const std::vector<ChairInput> caps{
      {1, "a cat and a dog and a fork .", 8},  // dog hallucinated
      {2, "two dogs", 2},
      {2, "a knife and a cat", 5},  // both hallucinated
  };
  const auto r = chair(caps, truth, lex);
  CHECK(r.n_mentions == 6);
  CHECK(r.n_hallucinated == 3);
  CHECK(r.instance_ratio == 0.5);
  CHECK(r.sentence_ratio == doctest::Approx(2.0 / 3.0));
  CHECK(r.avg_len == 5.0);
  CHECK(ChairReport::from_json(r.to_json()).instance_ratio == r.instance_ratio);

  const std::vector<ChairInput> orphan{{9, "a cat", 2}};
  CHECK_THROWS_WITH_AS(chair(orphan, truth, lex), doctest::Contains("image 9"), InvalidArgument);
  const auto empty = chair({}, truth, lex);
  CHECK(empty.instance_ratio == 0.0);
  CHECK(empty.sentence_ratio == 0.0);
}

TEST_CASE("chair matches a set-arithmetic oracle on random micro-corpora") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = testing::random_micro(rng);
    const auto r = chair(m.captions, m.truth, m.lex);
    const auto o = testing::oracle_chair(m);
    CHECK(r.n_mentions == o.mentions);
    CHECK(r.n_hallucinated == o.hallucinated);
    CHECK(testing::chair_matches(r, o));
  }
}

TEST_CASE("eval_pope matches a confusion-set oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = testing::random_pope(rng);
    CHECK(testing::pope_matches(eval_pope(p.answers, p.triples), p));
  }
  const std::vector<PopeAnswer> one(1);
  CHECK_THROWS_AS(eval_pope(one, {}), InvalidArgument);
  const auto none = eval_pope({}, {});
  CHECK(none.f1 == 0.0);
  CHECK(PopeReport::from_json(none.to_json()).n == 0);
}

TEST_CASE("map_answer") {
  CHECK(map_answer("yes").yes);
  CHECK(map_answer("Yes, there is.").yes);
  CHECK(map_answer("  yeah").yes);
  CHECK_FALSE(map_answer("no").yes);
  CHECK_FALSE(map_answer("no").unmappable);
  CHECK_FALSE(map_answer("Nope.").unmappable);
  const auto odd = map_answer("a cat");
  CHECK_FALSE(odd.yes);
  CHECK(odd.unmappable);
  CHECK(map_answer("").unmappable);
  CHECK(map_answer("yesterday").unmappable);
  CHECK(parse_pope_strategy("adversarial") == PopeStrategy::kAdversarial);
  CHECK(pope_strategy_name(PopeStrategy::kPopular) == "popular");
  CHECK_THROWS_AS(parse_pope_strategy("hard"), InvalidArgument);
}

TEST_CASE("build_pope is balanced and picks the strongest negatives") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_obj = 8;
    const auto lex = micro_lexicon(n_obj);
    Annotations imgs;
    std::vector<std::set<int>> sets;
    for (int i = 0; i < 6; ++i) {
      std::set<int> s;
      for (std::size_t o = 0; o < n_obj; ++o) {
        if (rng() % 3 == 0) s.insert(int(o));
      }
      if (s.empty()) s.insert(int(rng() % n_obj));
      while (s.size() > 4) s.erase(s.begin());
      imgs[i] = s;
      sets.push_back(s);
    }
    const auto stats = CooccurrenceStats::from(sets, n_obj);
    const std::size_t qpi = 2 * (1 + rng() % 3);
    for (auto strat : {PopeStrategy::kRandom, PopeStrategy::kPopular, PopeStrategy::kAdversarial}) {
      const auto triples = build_pope(imgs, stats, strat, qpi, trial, lex);
      std::size_t yes = 0;
      for (const auto& t : triples) yes += t.gold_yes ? 1 : 0;
      CHECK(2 * yes == triples.size());
      CHECK(triples == build_pope(imgs, stats, strat, qpi, trial, lex));

      for (const auto& [img, present] : imgs) {
        std::vector<int> yes_objs, no_objs;
        for (const auto& t : triples) {
          if (t.image_id != img) continue;
          CHECK(t.gold_yes == bool(present.count(t.object)));
          CHECK(t.question == data::question_text(t.object, lex));
          (t.gold_yes ? yes_objs : no_objs).push_back(t.object);
        }
        CHECK(yes_objs.size() == std::min(qpi / 2, present.size()));
        CHECK(no_objs.size() == yes_objs.size());
        if (strat == PopeStrategy::kRandom) continue;
        // brute-force key for every absent object, straight from the scene sets
        auto key = [&](int o) {
          std::size_t k = 0;
          for (const auto& s : sets) {
            if (strat == PopeStrategy::kPopular) {
              k += s.count(o);
            } else {
              for (int p : present) k += s.count(o) && s.count(p) ? 1 : 0;
            }
          }
          return k;
        };
        std::vector<std::pair<std::size_t, int>> ranked;  // (-key, id) ascending
        for (std::size_t o = 0; o < n_obj; ++o) {
          if (!present.count(int(o))) ranked.push_back({std::size_t(-1) - key(int(o)), int(o)});
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t i = 0; i < no_objs.size(); ++i) CHECK(no_objs[i] == ranked[i].second);
      }
    }
  }
}

TEST_CASE("build_pope guards") {
  const auto lex = micro_lexicon(3);
  Annotations imgs{{0, {0, 1}}};
  const std::vector<std::set<int>> sets{{0, 1}};
  const auto stats = CooccurrenceStats::from(sets, 3);
  CHECK_THROWS_AS(build_pope(imgs, stats, PopeStrategy::kRandom, 3, 0, lex), InvalidArgument);
  CHECK_THROWS_AS(build_pope(imgs, stats, PopeStrategy::kRandom, 0, 0, lex), InvalidArgument);
  CHECK_THROWS_AS(build_pope(imgs, stats, PopeStrategy::kRandom, 4, 0, lex), InvalidArgument);
  CHECK(build_pope(imgs, stats, PopeStrategy::kRandom, 2, 0, lex).size() == 2);
  const std::vector<std::set<int>> bad{{5}};
  CHECK_THROWS_AS(CooccurrenceStats::from(bad, 3), InvalidArgument);
}

TEST_CASE("annotations from scenes and records agree") {
  data::CorpusConfig cc;
  cc.n_scenes = 30;
  cc.n_heldout = 5;
  const auto corpus = data::gen_corpus(cc);
  CHECK(annotations_from(std::span<const data::Scene>(corpus.scenes)) ==
        annotations_from(std::span<const data::CaptionRecord>(corpus.captions),
                         corpus.vocab.lexicon()));
}

TEST_CASE("decoded reference captions score zero hallucination") {
  data::CorpusConfig cc;
  cc.n_scenes = 20;
  cc.n_heldout = 10;
  const auto corpus = data::gen_corpus(cc);
  std::vector<ChairInput> inputs;
  for (const auto& c : corpus.captions) inputs.push_back({c.scene_id, c.caption, 1});
  const auto r = chair(inputs, annotations_from(std::span<const data::Scene>(corpus.scenes)),
                       corpus.vocab.lexicon());
  CHECK(r.n_hallucinated == 0);
  CHECK(r.n_mentions > 0);
}

TEST_CASE("worked examples") {
  const data::ObjectLexicon lex({{"cat", "cats", {}}, {"dog", "dogs", {}}, {"tree", "trees", {}}});
  Annotations truth{{0, {0}}, {1, {2}}};
  const std::vector<ChairInput> caps{{0, "a cat and a dog", 5}, {1, "a tree", 2}};
  const auto r = chair(caps, truth, lex);
  CHECK(r.instance_ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.sentence_ratio == 0.5);

  std::vector<PopeTriple> triples(6);
  for (std::size_t i = 0; i < 6; ++i) triples[i].gold_yes = i % 2 == 0;
  const std::vector<PopeAnswer> all_yes(6, PopeAnswer{true, false, "yes"});
  const auto p = eval_pope(all_yes, triples);
  CHECK(p.recall == 1.0);
  CHECK(p.precision == 0.5);
  CHECK(p.yes_rate == 1.0);

  // generated corpus: dog rides along with cat, so it tops the adversarial list
  data::CorpusConfig cc;
  cc.n_scenes = 400;
  cc.n_heldout = 0;
  const auto corpus = data::gen_corpus(cc);
  const auto& clex = corpus.vocab.lexicon();
  std::vector<std::set<int>> sets;
  for (const auto& s : corpus.scenes) {
    const auto ids = s.object_ids();
    sets.emplace_back(ids.begin(), ids.end());
  }
  const auto stats = CooccurrenceStats::from(sets, clex.size());
  const Annotations cat_only{{0, {clex.require("cat")}}};
  const auto t = build_pope(cat_only, stats, PopeStrategy::kAdversarial, 2, 0, clex);
  REQUIRE(t.size() == 2);
  CHECK(t[1].object == clex.require("dog"));
  CHECK_FALSE(t[1].gold_yes);
}
