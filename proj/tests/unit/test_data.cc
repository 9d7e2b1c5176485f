#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpd/data/corpus.h"

using namespace helpd;
using namespace helpd::data;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("helpd_test_data_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("vocabulary has specials first and covers the lexicon") {
  const auto v = Vocabulary::standard();
  CHECK(v.word(Vocabulary::kPad) == "<pad>");
  CHECK(v.word(Vocabulary::kBos) == "<bos>");
  CHECK(v.word(Vocabulary::kEos) == "<eos>");
  CHECK(v.word(Vocabulary::kYes) == "yes");
  CHECK(v.word(Vocabulary::kNo) == "no");
  for (const auto& s : v.lexicon().surfaces()) {
    for (const auto& w : s.words) CHECK(v.contains(w));
  }
  // bijective
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.word(int(i))) == int(i));
  CHECK(v.lexicon().size() == 32);
  CHECK_THROWS_AS(v.word(int(v.size())), InvalidArgument);
}

TEST_CASE("tokenize: unknown words map to unk, punctuation splits") {
  const auto v = Vocabulary::standard();
  auto ids = tokenize("zzzqqq", v);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == Vocabulary::kUnk);
  CHECK(split_words("A Cat, two dogs.") ==
        std::vector<std::string>{"a", "cat", ",", "two", "dogs", "."});
  CHECK(tokenize("a red cat.", v) == tokenize("a red cat.", v));
}

TEST_CASE("gen_corpus is deterministic and round-trips through tokenize") {
  CorpusConfig cfg;
  cfg.seed = 11;
  cfg.n_scenes = 300;
  cfg.n_heldout = 40;
  const Corpus a = gen_corpus(cfg), b = gen_corpus(cfg);
  CHECK(a.scenes == b.scenes);
  CHECK(a.captions == b.captions);
  REQUIRE(a.captions.size() == a.scenes.size());
  for (const auto& c : a.captions) {
    const auto ids = tokenize(c.caption, a.vocab);
    CHECK(detokenize(ids, a.vocab) == c.caption);
    for (int id : ids) CHECK(id != Vocabulary::kUnk);
  }
  for (const auto& s : a.scenes) {
    CHECK(s.objects.size() >= 1);
    CHECK(s.objects.size() <= 6);
    std::set<int> uniq;
    for (const auto& o : s.objects) uniq.insert(o.object);
    CHECK(uniq.size() == s.objects.size());
  }
  cfg.seed = 12;
  CHECK_FALSE(gen_corpus(cfg).scenes == a.scenes);
}

TEST_CASE("same seed gives byte-identical corpus files") {
  CorpusConfig cfg;
  cfg.seed = 7;
  cfg.n_scenes = 200;
  cfg.n_heldout = 20;
  auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
  save_corpus(gen_corpus(cfg), cfg, d1);
  save_corpus(gen_corpus(cfg), cfg, d2);
  for (const char* f : {"scenes.jsonl", "train.jsonl", "heldout.jsonl", "vocab.json",
                        "bias_config.json"}) {
    CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(!slurp(d1 / f).empty());
  }
  const Corpus back = load_corpus(d1);
  const Corpus orig = gen_corpus(cfg);
  CHECK(back.scenes == orig.scenes);
  CHECK(back.vocab == orig.vocab);
  CHECK(back.captions.size() == orig.captions.size());
}

TEST_CASE("co-occurrence of a biased pair matches its configured rate") {
  CorpusConfig cfg;
  cfg.seed = 3;
  cfg.n_scenes = 1000;
  cfg.n_heldout = 0;
  cfg.bias.pairs = {{"cat", "dog", 0.8}};
  const Corpus c = gen_corpus(cfg);
  const auto& lex = c.vocab.lexicon();
  const int cat = lex.require("cat"), dog = lex.require("dog");
  // Independent count: P(both | either) over the train split.
  int either = 0, both = 0;
  for (const auto& s : c.scenes) {
    const bool hc = s.contains(cat), hd = s.contains(dog);
    either += (hc || hd);
    both += (hc && hd);
  }
  REQUIRE(either > 0);
  const double rate = double(both) / either;
  CHECK(rate >= 0.76);
  CHECK(rate <= 0.84);
}

TEST_CASE("standard bias: every pair within tolerance, members never filler") {
  CorpusConfig cfg;
  cfg.seed = 21;
  const Corpus c = gen_corpus(cfg);
  const auto& lex = c.vocab.lexicon();
  for (const auto& p : cfg.bias.pairs) {
    const int a = lex.require(p.first), b = lex.require(p.second);
    int either = 0, both = 0;
    for (const Scene* s : c.split("train")) {
      either += s->contains(a) || s->contains(b);
      both += s->contains(a) && s->contains(b);
    }
    CHECK(std::abs(double(both) / either - p.probability) <= 0.04);
  }
}

TEST_CASE("heldout split breaks every pair") {
  CorpusConfig cfg;
  cfg.seed = 5;
  cfg.n_scenes = 100;
  cfg.n_heldout = 200;
  const Corpus c = gen_corpus(cfg);
  const auto& lex = c.vocab.lexicon();
  const auto held = c.split("heldout");
  CHECK(held.size() == 200);
  for (const Scene* s : held) {
    int members = 0;
    for (const auto& p : cfg.bias.pairs) {
      const bool a = s->contains(lex.require(p.first));
      const bool b = s->contains(lex.require(p.second));
      CHECK_FALSE((a && b));
      members += a || b;
    }
    CHECK(members == 1);
  }
}

TEST_CASE("infeasible bias configs are rejected") {
  auto with = [](auto mutate) {
    CorpusConfig cfg;
    cfg.n_scenes = 10;
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.pairs[0].probability = 1.2; })),
                  InvalidArgument);
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.pairs[1].first = "cat"; })),
                  InvalidArgument);
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.pairs[0].second = "unicorn"; })),
                  InvalidArgument);
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.pairs[0].second = "cat"; })),
                  InvalidArgument);
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.max_objects = 1; })),
                  InvalidArgument);
  CHECK_THROWS_AS(gen_corpus(with([](CorpusConfig& c) { c.bias.min_objects = 0; })),
                  InvalidArgument);
}

TEST_CASE("jsonl round trip keeps unknown fields") {
  auto dir = temp_dir("jsonl");
  CaptionRecord r;
  r.scene_id = 4;
  r.caption = "a red cat.";
  r.objects = {"cat"};
  r.split = "train";
  r.extra["source"] = "manual";
  r.extra["score"] = 0.5;
  CaptionRecord r2 = r;
  r2.scene_id = 5;
  r2.extra = nlohmann::ordered_json::object();
  save_jsonl({r, r2}, dir / "a.jsonl");
  const auto back = load_jsonl(dir / "a.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  CHECK(back[1] == r2);
  save_jsonl(back, dir / "b.jsonl");
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
}

TEST_CASE("jsonl errors cite the line number") {
  auto dir = temp_dir("jsonl_bad");
  {
    std::ofstream os(dir / "bad.jsonl");
    for (int i = 0; i < 6; ++i) {
      os << R"({"scene_id":)" << i << R"(,"caption":"a cat.","objects":["cat"],"split":"train"})"
         << '\n';
    }
    os << "not json\n";
  }
  try {
    load_jsonl(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
    CHECK(std::string(e.what()).find(":7:") != std::string::npos);
  }
  { std::ofstream os(dir / "empty.jsonl"); }
  CHECK(load_jsonl(dir / "empty.jsonl").empty());
  {
    std::ofstream os(dir / "missing.jsonl");
    os << R"({"scene_id":1})" << '\n';
  }
  CHECK_THROWS_AS(load_jsonl(dir / "missing.jsonl"), ParseError);
}

TEST_CASE("bias config json round trip") {
  const auto b = BiasConfig::standard();
  const auto back = BiasConfig::from_json(b.to_json());
  CHECK(back.to_json() == b.to_json());
  CHECK(back.pairs.size() == 4);
}
