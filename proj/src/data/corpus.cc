#include "helpd/data/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace helpd::data {

using json = nlohmann::ordered_json;

const std::vector<std::string>& standard_attributes() {
  static const std::vector<std::string> kAttributes{
      "red", "blue", "green", "small", "large", "white", "black", "brown"};
  return kAttributes;
}

std::vector<ObjectId> Scene::object_ids() const {
  std::vector<ObjectId> ids;
  for (const auto& o : objects) ids.push_back(o.object);
  return ids;
}

bool Scene::contains(ObjectId id) const {
  return std::any_of(objects.begin(), objects.end(),
                     [id](const SceneObject& o) { return o.object == id; });
}

BiasConfig BiasConfig::standard() {
  BiasConfig c;
  c.pairs = {{"cat", "dog", 0.8},
             {"fork", "knife", 0.8},
             {"car", "traffic light", 0.8},
             {"bed", "pillow", 0.8}};
  return c;
}

json BiasConfig::to_json() const {
  json j;
  auto arr = json::array();
  for (const auto& p : pairs) {
    arr.push_back({{"first", p.first}, {"second", p.second}, {"probability", p.probability}});
  }
  j["pairs"] = arr;
  j["unanchored_fraction"] = unanchored_fraction;
  j["min_objects"] = min_objects;
  j["max_objects"] = max_objects;
  j["plural_rate"] = plural_rate;
  return j;
}

BiasConfig BiasConfig::from_json(const json& j) {
  BiasConfig c;
  c.pairs.clear();
  for (const auto& p : j.at("pairs")) {
    c.pairs.push_back({p.at("first").get<std::string>(),
                       p.at("second").get<std::string>(),
                       p.at("probability").get<double>()});
  }
  c.unanchored_fraction = j.value("unanchored_fraction", c.unanchored_fraction);
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.plural_rate = j.value("plural_rate", c.plural_rate);
  return c;
}

std::vector<const Scene*> Corpus::split(const std::string& name) const {
  std::vector<const Scene*> out;
  for (const auto& s : scenes) {
    if (s.split == name) out.push_back(&s);
  }
  return out;
}

const Scene& Corpus::scene(int id) const {
  if (id < 0 || std::size_t(id) >= scenes.size() || scenes[std::size_t(id)].id != id) {
    auto it = std::find_if(scenes.begin(), scenes.end(),
                           [id](const Scene& s) { return s.id == id; });
    if (it == scenes.end()) throw InvalidArgument("corpus: no scene " + std::to_string(id));
    return *it;
  }
  return scenes[std::size_t(id)];
}

std::string caption_text(const Scene& scene, std::span<const std::size_t> order,
                         const ObjectLexicon& lexicon) {
  std::string out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const SceneObject& o = scene.objects.at(order[k]);
    if (k) out += " and ";
    const auto& e = lexicon.entry(o.object);
    out += o.count > 1 ? "two " : "a ";
    out += standard_attributes().at(std::size_t(o.attribute)) + " ";
    out += o.count > 1 ? e.plural : e.name;
  }
  out += ".";
  return out;
}

std::string question_text(ObjectId object, const ObjectLexicon& lexicon) {
  return "is there a " + lexicon.name(object) + "?";
}

std::vector<TokenId> caption_prompt(const Vocabulary& vocab) {
  return {Vocabulary::kBos, vocab.id("describe")};
}

std::vector<TokenId> question_prompt(ObjectId object, const Vocabulary& vocab) {
  std::vector<TokenId> out{Vocabulary::kBos};
  for (TokenId t : tokenize(question_text(object, vocab.lexicon()), vocab)) out.push_back(t);
  return out;
}

namespace {

struct PairIds {
  ObjectId first, second;
  double probability;
};

std::vector<PairIds> validate(const CorpusConfig& config,
                              const ObjectLexicon& lexicon) {
  const BiasConfig& b = config.bias;
  auto infeasible = [](const std::string& why) {
    throw InvalidArgument("bias config infeasible: " + why);
  };
  if (config.n_scenes < 0 || config.n_heldout < 0) infeasible("negative scene count");
  if (b.min_objects < 1 || b.max_objects < b.min_objects) {
    infeasible("need 1 <= min_objects <= max_objects");
  }
  if (b.unanchored_fraction < 0 || b.unanchored_fraction > 1) {
    infeasible("unanchored_fraction outside [0,1]");
  }
  if (b.plural_rate < 0 || b.plural_rate > 1) infeasible("plural_rate outside [0,1]");
  if (b.pairs.empty() && b.unanchored_fraction < 1) {
    infeasible("no pairs but unanchored_fraction < 1");
  }
  std::vector<PairIds> pairs;
  std::set<ObjectId> used;
  for (const auto& p : b.pairs) {
    auto a = lexicon.find(p.first), c = lexicon.find(p.second);
    if (!a || !c) infeasible("unknown object in pair " + p.first + "/" + p.second);
    if (*a == *c) infeasible("pair " + p.first + " with itself");
    if (!(p.probability >= 0 && p.probability <= 1)) {
      infeasible("probability of " + p.first + "/" + p.second + " outside [0,1]");
    }
    if (!used.insert(*a).second || !used.insert(*c).second) {
      // One object in two pairs makes the two target rates interact.
      infeasible("object shared between pairs (" + p.first + "/" + p.second + ")");
    }
    if (p.probability > 0 && b.max_objects < 2) {
      infeasible("max_objects < 2 cannot hold a co-occurring pair");
    }
    pairs.push_back({*a, *c, p.probability});
  }
  const std::size_t filler = lexicon.size() - used.size();
  if (std::size_t(b.max_objects) > filler + 1) {
    infeasible("max_objects exceeds available filler objects");
  }
  return pairs;
}

Scene make_scene(int id, std::vector<ObjectId> seed_objects, int group,
                 const std::string& split, const std::vector<ObjectId>& filler,
                 const BiasConfig& bias, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(bias.min_objects, bias.max_objects);
  const std::size_t target =
      std::max<std::size_t>(std::size_t(count_dist(rng)), seed_objects.size());
  std::vector<ObjectId> pool = filler;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t k = 0; seed_objects.size() < target; ++k) {
    seed_objects.push_back(pool[k]);
  }
  std::sort(seed_objects.begin(), seed_objects.end());
  Scene s;
  s.id = id;
  s.group = group;
  s.split = split;
  std::uniform_int_distribution<int> attr(0, int(standard_attributes().size()) - 1);
  std::bernoulli_distribution plural(bias.plural_rate);
  for (ObjectId o : seed_objects) {
    s.objects.push_back({o, attr(rng), plural(rng) ? 2 : 1});
  }
  return s;
}

}  // namespace

Corpus gen_corpus(const CorpusConfig& config) {
  Corpus corpus;
  corpus.vocab = Vocabulary::standard();
  const ObjectLexicon& lex = corpus.vocab.lexicon();
  const auto pairs = validate(config, lex);
  const BiasConfig& bias = config.bias;

  std::vector<ObjectId> filler;
  for (std::size_t i = 0; i < lex.size(); ++i) {
    const auto id = ObjectId(i);
    const bool in_pair = std::any_of(pairs.begin(), pairs.end(), [id](const PairIds& p) {
      return p.first == id || p.second == id;
    });
    if (!in_pair) filler.push_back(id);
  }

  std::mt19937_64 rng(config.seed);
  const int n_pairs = int(pairs.size());

  // Group assignment, then per-group partner decisions stratified so the
  // realized co-occurrence rate is round(p * n) / n.
  std::vector<int> groups(std::size_t(config.n_scenes), kNoGroup);
  std::bernoulli_distribution unanchored(bias.unanchored_fraction);
  std::uniform_int_distribution<int> pick_pair(0, std::max(0, n_pairs - 1));
  for (auto& g : groups) g = (n_pairs == 0 || unanchored(rng)) ? kNoGroup : pick_pair(rng);
  std::vector<bool> with_partner(groups.size(), false);
  for (int k = 0; k < n_pairs; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] == k) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = std::size_t(std::llround(pairs[std::size_t(k)].probability *
                                               double(members.size())));
    for (std::size_t m = 0; m < take; ++m) with_partner[members[m]] = true;
  }

  std::bernoulli_distribution coin(0.5);
  auto anchored_objects = [&](int group, bool partner) {
    const PairIds& p = pairs[std::size_t(group)];
    const bool first = coin(rng);
    std::vector<ObjectId> objs{first ? p.first : p.second};
    if (partner) objs.push_back(first ? p.second : p.first);
    return objs;
  };

  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::vector<ObjectId> seed;
    if (groups[i] != kNoGroup) seed = anchored_objects(groups[i], with_partner[i]);
    corpus.scenes.push_back(
        make_scene(int(i), seed, groups[i], "train", filler, bias, rng));
  }
  for (int h = 0; h < config.n_heldout && n_pairs > 0; ++h) {
    const int group = pick_pair(rng);
    corpus.scenes.push_back(make_scene(config.n_scenes + h,
                                       anchored_objects(group, false), group,
                                       "heldout", filler, bias, rng));
  }

  for (const auto& s : corpus.scenes) {
    std::vector<std::size_t> order(s.objects.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    CaptionRecord rec;
    rec.scene_id = s.id;
    rec.caption = caption_text(s, order, lex);
    for (const auto& o : s.objects) rec.objects.push_back(lex.name(o.object));
    rec.split = s.split;
    corpus.captions.push_back(std::move(rec));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// File I/O

std::vector<CaptionRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("jsonl: cannot open " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                           ": malformed JSON (" + e.what() + ")",
                       lineno);
    }
    try {
      CaptionRecord r;
      r.scene_id = j.at("scene_id").get<int>();
      r.caption = j.at("caption").get<std::string>();
      r.objects = j.at("objects").get<std::vector<std::string>>();
      r.split = j.value("split", std::string("train"));
      for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "scene_id" && k != "caption" && k != "objects" && k != "split") {
          r.extra[k] = it.value();
        }
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                           ": bad record (" + e.what() + ")",
                       lineno);
    }
  }
  return out;
}

void save_jsonl(const std::vector<CaptionRecord>& records,
                const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("jsonl: cannot open " + path.string());
  for (const auto& r : records) {
    json j;
    j["scene_id"] = r.scene_id;
    j["caption"] = r.caption;
    j["objects"] = r.objects;
    j["split"] = r.split;
    for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
    os << j.dump() << '\n';
  }
}

std::vector<Scene> load_scenes(const std::filesystem::path& path,
                               const ObjectLexicon& lexicon) {
  std::ifstream is(path);
  if (!is) throw Error("scenes: cannot open " + path.string());
  const auto& attrs = standard_attributes();
  std::vector<Scene> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Scene s;
      s.id = j.at("id").get<int>();
      s.group = j.value("group", kNoGroup);
      s.split = j.value("split", std::string("train"));
      for (const auto& o : j.at("objects")) {
        SceneObject so;
        so.object = lexicon.require(o.at("name").get<std::string>());
        const auto a = o.value("attribute", attrs[0]);
        auto it = std::find(attrs.begin(), attrs.end(), a);
        if (it == attrs.end()) throw InvalidArgument("unknown attribute " + a);
        so.attribute = int(it - attrs.begin());
        so.count = o.value("count", 1);
        s.objects.push_back(so);
      }
      std::sort(s.objects.begin(), s.objects.end(),
                [](const SceneObject& a, const SceneObject& b) { return a.object < b.object; });
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(),
                       lineno);
    }
  }
  return out;
}

void save_scenes(const std::vector<Scene>& scenes,
                 const std::filesystem::path& path,
                 const ObjectLexicon& lexicon) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("scenes: cannot open " + path.string());
  for (const auto& s : scenes) {
    json j;
    j["id"] = s.id;
    auto objs = json::array();
    for (const auto& o : s.objects) {
      objs.push_back({{"name", lexicon.name(o.object)},
                      {"attribute", standard_attributes().at(std::size_t(o.attribute))},
                      {"count", o.count}});
    }
    j["objects"] = objs;
    j["group"] = s.group;
    j["split"] = s.split;
    os << j.dump() << '\n';
  }
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("vocab: cannot open " + path.string());
  try {
    return Vocabulary::from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw ParseError("vocab: " + std::string(e.what()), 0);
  }
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("vocab: cannot open " + path.string());
  os << vocab.to_json().dump(2) << '\n';
}

void save_corpus(const Corpus& corpus, const CorpusConfig& config,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_scenes(corpus.scenes, dir / "scenes.jsonl", corpus.vocab.lexicon());
  std::vector<CaptionRecord> train, heldout;
  for (const auto& c : corpus.captions) (c.split == "heldout" ? heldout : train).push_back(c);
  save_jsonl(train, dir / "train.jsonl");
  save_jsonl(heldout, dir / "heldout.jsonl");
  save_vocab(corpus.vocab, dir / "vocab.json");
  json cfg = config.bias.to_json();
  cfg["seed"] = config.seed;
  cfg["n_scenes"] = config.n_scenes;
  cfg["n_heldout"] = config.n_heldout;
  std::ofstream os(dir / "bias_config.json", std::ios::trunc);
  os << cfg.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.vocab = load_vocab(dir / "vocab.json");
  c.scenes = load_scenes(dir / "scenes.jsonl", c.vocab.lexicon());
  std::sort(c.scenes.begin(), c.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.id < b.id; });
  c.captions = load_jsonl(dir / "train.jsonl");
  auto held = load_jsonl(dir / "heldout.jsonl");
  c.captions.insert(c.captions.end(), held.begin(), held.end());
  return c;
}

}  // namespace helpd::data
