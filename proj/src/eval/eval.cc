#include "helpd/eval/eval.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <numeric>
#include <random>
#include <thread>

#include "helpd/feedback/objects.h"

namespace helpd::eval {

nlohmann::ordered_json ChairReport::to_json() const {
  return {{"instance_ratio", instance_ratio},
          {"sentence_ratio", sentence_ratio},
          {"avg_len", avg_len},
          {"n_captions", n_captions},
          {"n_mentions", n_mentions},
          {"n_hallucinated", n_hallucinated},
          {"n_hallucinated_captions", n_hallucinated_captions}};
}

ChairReport ChairReport::from_json(const nlohmann::ordered_json& j) {
  ChairReport r;
  r.instance_ratio = j.at("instance_ratio").get<double>();
  r.sentence_ratio = j.at("sentence_ratio").get<double>();
  r.avg_len = j.at("avg_len").get<double>();
  r.n_captions = j.value("n_captions", std::size_t(0));
  r.n_mentions = j.value("n_mentions", std::size_t(0));
  r.n_hallucinated = j.value("n_hallucinated", std::size_t(0));
  r.n_hallucinated_captions = j.value("n_hallucinated_captions", std::size_t(0));
  return r;
}

ChairReport chair(std::span<const ChairInput> captions, const Annotations& annotations,
                  const data::ObjectLexicon& lexicon) {
  ChairReport r;
  std::size_t total_len = 0;
  for (const auto& c : captions) {
    auto it = annotations.find(c.image_id);
    if (it == annotations.end())
      throw InvalidArgument("chair: no annotation for image " + std::to_string(c.image_id));
    const auto found = feedback::extract_objects(c.caption, lexicon);
    std::size_t bad = 0;
    for (auto id : found.objects) bad += it->second.count(id) ? 0 : 1;
    r.n_mentions += found.size();
    r.n_hallucinated += bad;
    r.n_hallucinated_captions += bad ? 1 : 0;
    total_len += c.n_tokens;
  }
  r.n_captions = captions.size();
  if (r.n_mentions) r.instance_ratio = double(r.n_hallucinated) / double(r.n_mentions);
  if (r.n_captions) {
    r.sentence_ratio = double(r.n_hallucinated_captions) / double(r.n_captions);
    r.avg_len = double(total_len) / double(r.n_captions);
  }
  return r;
}

std::vector<ChairInput> describe_scenes(const model::Model& model,
                                        std::span<const data::Scene* const> scenes,
                                        const data::Vocabulary& vocab,
                                        const decoding::DecodeConfig& config, std::size_t jobs) {
  std::vector<model::VisualPrefix> prefixes;
  prefixes.reserve(scenes.size());
  for (const auto* s : scenes) prefixes.push_back(model.encode_scene(*s));
  const auto prompt = data::caption_prompt(vocab);
  const auto results = decoding::generate_many(model, prefixes, prompt, config, jobs);
  std::vector<ChairInput> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& toks = results[i].best().tokens;
    out.push_back({scenes[i]->id, data::detokenize(toks, vocab), toks.size()});
  }
  return out;
}

Annotations annotations_from(std::span<const data::Scene* const> scenes) {
  Annotations a;
  for (const auto* s : scenes) {
    auto ids = s->object_ids();
    a[s->id] = std::set<ObjectId>(ids.begin(), ids.end());
  }
  return a;
}

Annotations annotations_from(std::span<const data::Scene> scenes) {
  Annotations a;
  for (const auto& s : scenes) {
    auto ids = s.object_ids();
    a[s.id] = std::set<ObjectId>(ids.begin(), ids.end());
  }
  return a;
}

Annotations annotations_from(std::span<const data::CaptionRecord> records,
                             const data::ObjectLexicon& lexicon) {
  Annotations a;
  for (const auto& r : records) {
    auto& set = a[r.scene_id];
    for (const auto& name : r.objects) set.insert(lexicon.require(name));
  }
  return a;
}

PopeStrategy parse_pope_strategy(std::string_view s) {
  if (s == "random") return PopeStrategy::kRandom;
  if (s == "popular") return PopeStrategy::kPopular;
  if (s == "adversarial") return PopeStrategy::kAdversarial;
  throw InvalidArgument("unknown POPE strategy '" + std::string(s) + "'");
}

std::string pope_strategy_name(PopeStrategy s) {
  switch (s) {
    case PopeStrategy::kRandom: return "random";
    case PopeStrategy::kPopular: return "popular";
    case PopeStrategy::kAdversarial: return "adversarial";
  }
  return "?";
}

CooccurrenceStats CooccurrenceStats::from(std::span<const std::set<ObjectId>> scenes,
                                          std::size_t n_objects) {
  CooccurrenceStats st;
  st.frequency.assign(n_objects, 0);
  st.counts.assign(n_objects, std::vector<std::size_t>(n_objects, 0));
  for (const auto& s : scenes) {
    for (auto a : s) {
      if (a < 0 || std::size_t(a) >= n_objects)
        throw InvalidArgument("cooccurrence: object id " + std::to_string(a) + " out of range");
      ++st.frequency[std::size_t(a)];
      for (auto b : s) {
        if (a != b) ++st.counts[std::size_t(a)][std::size_t(b)];
      }
    }
  }
  return st;
}

std::vector<PopeTriple> build_pope(const Annotations& images, const CooccurrenceStats& stats,
                                   PopeStrategy strategy, std::size_t qpi, std::uint64_t seed,
                                   const data::ObjectLexicon& lexicon) {
  if (qpi == 0 || qpi % 2) throw InvalidArgument("build_pope: questions_per_image must be even and > 0");
  const std::size_t n_obj = lexicon.size();
  if (stats.frequency.size() != n_obj) throw InvalidArgument("build_pope: stats/lexicon size mismatch");
  std::mt19937_64 rng(seed);
  std::vector<PopeTriple> out;
  for (const auto& [image, present] : images) {
    std::vector<ObjectId> yes(present.begin(), present.end());
    const std::size_t k = std::min(qpi / 2, yes.size());
    std::shuffle(yes.begin(), yes.end(), rng);
    yes.resize(k);
    std::vector<ObjectId> absent;
    for (std::size_t o = 0; o < n_obj; ++o) {
      if (!present.count(ObjectId(o))) absent.push_back(ObjectId(o));
    }
    if (absent.size() < k)
      throw InvalidArgument("build_pope: image " + std::to_string(image) + " has only " +
                            std::to_string(absent.size()) + " absent objects, need " +
                            std::to_string(k));
    std::vector<ObjectId> no = absent;
    if (strategy == PopeStrategy::kRandom) {
      std::shuffle(no.begin(), no.end(), rng);
    } else {
      std::vector<std::size_t> key(n_obj, 0);
      for (auto o : absent) {
        if (strategy == PopeStrategy::kPopular) {
          key[std::size_t(o)] = stats.frequency[std::size_t(o)];
        } else {
          for (auto p : present) key[std::size_t(o)] += stats.counts[std::size_t(p)][std::size_t(o)];
        }
      }
      std::stable_sort(no.begin(), no.end(), [&](ObjectId a, ObjectId b) {
        return key[std::size_t(a)] > key[std::size_t(b)];
      });  // absent is ascending, so ties keep the lower id first
    }
    no.resize(k);
    auto emit = [&](ObjectId o, bool gold) {
      out.push_back({image, o, data::question_text(o, lexicon), gold, strategy});
    };
    for (auto o : yes) emit(o, true);
    for (auto o : no) emit(o, false);
  }
  return out;
}

PopeAnswer map_answer(std::string_view text) {
  PopeAnswer a;
  a.text = std::string(text);
  std::string word;
  std::size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i])))
    word += char(std::tolower(static_cast<unsigned char>(text[i++])));
  static const std::set<std::string, std::less<>> kYes{"yes", "yeah", "yep", "true"};
  static const std::set<std::string, std::less<>> kNo{"no", "nope", "false"};
  if (kYes.count(word)) {
    a.yes = true;
  } else if (!kNo.count(word)) {
    a.unmappable = true;
  }
  return a;
}

PopeAnswer answer_pope(const model::Model& model, const data::Scene& scene,
                       const PopeTriple& triple, const data::Vocabulary& vocab,
                       const decoding::DecodeConfig& config) {
  const auto prompt = data::question_prompt(triple.object, vocab);
  const auto res = decoding::generate(model, model.encode_scene(scene), prompt, config);
  return map_answer(data::detokenize(res.best().tokens, vocab));
}

std::vector<PopeAnswer> answer_pope_all(const model::Model& model, const data::Corpus& corpus,
                                        std::span<const PopeTriple> triples,
                                        const decoding::DecodeConfig& config, std::size_t jobs) {
  std::vector<PopeAnswer> out(triples.size());
  std::vector<std::exception_ptr> errors(triples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < triples.size();) {
      try {
        out[i] = answer_pope(model, corpus.scene(triples[i].image_id), triples[i], corpus.vocab,
                             config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, triples.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

nlohmann::ordered_json PopeReport::to_json() const {
  return {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall},
          {"f1", f1},             {"yes_rate", yes_rate},   {"n", n},
          {"tp", tp},             {"fp", fp},               {"tn", tn},
          {"fn", fn},             {"unmappable", unmappable}};
}

PopeReport PopeReport::from_json(const nlohmann::ordered_json& j) {
  PopeReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.yes_rate = j.at("yes_rate").get<double>();
  r.n = j.value("n", std::size_t(0));
  r.tp = j.value("tp", std::size_t(0));
  r.fp = j.value("fp", std::size_t(0));
  r.tn = j.value("tn", std::size_t(0));
  r.fn = j.value("fn", std::size_t(0));
  r.unmappable = j.value("unmappable", std::size_t(0));
  return r;
}

PopeReport eval_pope(std::span<const PopeAnswer> predictions, std::span<const PopeTriple> triples) {
  if (predictions.size() != triples.size())
    throw InvalidArgument("eval_pope: " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(triples.size()) + " triples");
  PopeReport r;
  r.n = triples.size();
  for (std::size_t i = 0; i < r.n; ++i) {
    const bool p = predictions[i].yes, g = triples[i].gold_yes;
    (p ? (g ? r.tp : r.fp) : (g ? r.fn : r.tn)) += 1;
    r.unmappable += predictions[i].unmappable ? 1 : 0;
  }
  if (r.n == 0) return r;
  const double n = double(r.n);
  r.accuracy = double(r.tp + r.tn) / n;
  r.yes_rate = double(r.tp + r.fp) / n;
  r.precision = r.tp + r.fp ? double(r.tp) / double(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? double(r.tp) / double(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

}  // namespace helpd::eval
