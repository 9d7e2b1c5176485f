// helpd: corpus generation, training, decoding, evaluation, attention dumps
// and report tables. Every command writes run_config.json into --out; pass
// it back with --config to repeat the run.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "helpd/data/corpus.h"
#include "helpd/decoding/decoding.h"
#include "helpd/eval/eval.h"
#include "helpd/experiment.h"
#include "helpd/feedback/trainer.h"
#include "helpd/judge/judge.h"
#include "helpd/presets.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace helpd;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every file a command produces goes through here, from one thread.
class OutputWriter {
 public:
  explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }
  void text(const std::string& name, const std::string& body) {
    std::ofstream f(path(name), std::ios::binary);
    f << body;
    if (!f) throw Error("cannot write " + path(name).string());
  }
  void json(const std::string& name, const ordered_json& j) { text(name, j.dump(2) + "\n"); }
  void jsonl(const std::string& name, const std::vector<ordered_json>& rows) {
    std::string body;
    for (const auto& r : rows) body += r.dump() + "\n";
    text(name, body);
  }

 private:
  fs::path dir_;
};

ordered_json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw UsageError("cannot open " + p.string());
  try {
    return ordered_json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

std::vector<ordered_json> read_jsonl(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw UsageError("cannot open " + p.string());
  std::vector<ordered_json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(ordered_json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(p.string() + ": " + e.what(), n);
    }
  }
  return rows;
}

// Flags as parsed; unset optionals leave the file/default value alone.
struct Flags {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  // gen-data
  std::optional<int> scenes, heldout;
  std::string bias_config;
  // train
  std::optional<int> total_steps;
  std::optional<double> c, sigma, lr;
  std::string judge = "";
  // decode / eval / attn
  std::string data, model, split, strategy;
  std::optional<std::size_t> beam_width, max_new_tokens;
  std::optional<double> gamma;
  std::string captions, annotations, pope_strategy;
  std::optional<std::size_t> questions_per_image;
  std::optional<int> layer, head, scene;
  bool ppm = false;
  // report
  std::vector<std::string> in;
  std::string format = "table";
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string out;
  Preset preset;
  std::string judge = "mock";
  ordered_json inputs = ordered_json::object();

  ordered_json to_json() const {
    ordered_json j = {{"command", command}, {"seed", seed}, {"out", out}};
    const auto pj = preset.to_json();
    for (const auto& [k, v] : pj.items()) j[k] = v;
    j["judge"] = {{"kind", judge}};
    j["inputs"] = inputs;
    return j;
  }
};

void set_seed(Preset& p, std::uint64_t seed) {
  p.corpus.seed = seed;
  p.train.seed = seed;
  p.decode.seed = seed;
}

// defaults < config file < flags
RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig rc;
  rc.command = command;
  rc.preset = desk_preset(0);
  ordered_json file = ordered_json::object();
  if (!f.config.empty()) {
    file = read_json(f.config);
    if (file.contains("seed")) {
      rc.seed = file.at("seed").get<std::uint64_t>();
      set_seed(rc.preset, rc.seed);
    }
    rc.preset = Preset::from_json(file, rc.preset);
    if (file.contains("judge")) rc.judge = file.at("judge").value("kind", rc.judge);
    if (file.contains("inputs")) rc.inputs = file.at("inputs");
    rc.out = file.value("out", "");
  }
  if (f.seed) {
    rc.seed = *f.seed;
    set_seed(rc.preset, rc.seed);
  }
  auto& p = rc.preset;
  if (f.jobs) p.jobs = *f.jobs;
  if (f.scenes) p.corpus.n_scenes = *f.scenes;
  if (f.heldout) p.corpus.n_heldout = *f.heldout;
  if (!f.bias_config.empty()) p.corpus.bias = data::BiasConfig::from_json(read_json(f.bias_config));
  if (f.total_steps) p.train.feedback.total_steps = *f.total_steps;
  if (f.c) p.train.feedback.c = *f.c;
  if (f.sigma) p.train.feedback.sigma = *f.sigma;
  if (f.lr) p.train.lr = *f.lr;
  if (!f.judge.empty()) rc.judge = f.judge;
  if (!f.strategy.empty()) {
    const auto flags = decoding::DecodeConfig::for_strategy(decoding::parse_strategy(f.strategy));
    p.decode.strategy = flags.strategy;
    p.decode.enable_overtrust = flags.enable_overtrust;
    p.decode.enable_vision = flags.enable_vision;
  }
  if (f.beam_width) p.decode.beam_width = *f.beam_width;
  if (f.max_new_tokens) p.decode.max_new_tokens = *f.max_new_tokens;
  if (f.gamma) p.decode.gamma = *f.gamma;
  if (!f.pope_strategy.empty()) p.pope_strategy = f.pope_strategy;
  if (f.questions_per_image) p.pope_questions = *f.questions_per_image;
  auto input = [&](const char* key, const std::string& v) {
    if (!v.empty()) rc.inputs[key] = v;
  };
  input("data", f.data);
  input("model", f.model);
  input("split", f.split);
  input("captions", f.captions);
  input("annotations", f.annotations);
  if (f.layer) rc.inputs["layer"] = *f.layer;
  if (f.head) rc.inputs["head"] = *f.head;
  if (f.scene) rc.inputs["scene"] = *f.scene;
  if (f.ppm) rc.inputs["ppm"] = true;
  if (!f.out.empty()) rc.out = f.out;
  if (rc.out.empty()) rc.out = "runs/" + command;

  // fail before any work starts
  p.train.validate();
  p.decode.validate();
  p.model.validate();
  eval::parse_pope_strategy(p.pope_strategy);
  if (rc.judge != "mock" && rc.judge != "remote")
    throw UsageError("--judge must be mock or remote, got '" + rc.judge + "'");
  return rc;
}

std::string input(const RunConfig& rc, const char* key, const char* flag) {
  if (!rc.inputs.contains(key)) throw UsageError(std::string("missing ") + flag);
  return rc.inputs.at(key).get<std::string>();
}

std::string input_or(const RunConfig& rc, const char* key, std::string fallback) {
  return rc.inputs.contains(key) ? rc.inputs.at(key).get<std::string>() : fallback;
}

// Corpus from --data, or generated from the resolved corpus config.
data::Corpus corpus_for(const RunConfig& rc) {
  if (rc.inputs.contains("data")) return data::load_corpus(rc.inputs.at("data").get<std::string>());
  return data::gen_corpus(rc.preset.corpus);
}

std::vector<const data::Scene*> scenes_of(const data::Corpus& c, const std::string& split) {
  if (split == "all") {
    std::vector<const data::Scene*> out;
    for (const auto& s : c.scenes) out.push_back(&s);
    return out;
  }
  if (split != "train" && split != "heldout")
    throw UsageError("--split must be train, heldout or all");
  return c.split(split);
}

std::unique_ptr<judge::Judge> make_judge(const RunConfig& rc, const data::Corpus& corpus) {
  if (rc.judge == "remote") {
    const auto cfg = judge::RemoteConfig::from_env();
    if (cfg.url.empty()) throw UsageError("--judge remote needs HELPD_JUDGE_URL");
    return std::make_unique<judge::RemoteJudge>(cfg);
  }
  return std::make_unique<judge::MockJudge>(corpus.vocab.lexicon());
}

// ------------------------------------------------------------------ commands

int gen_data(const RunConfig& rc, OutputWriter& out) {
  const auto corpus = data::gen_corpus(rc.preset.corpus);
  data::save_corpus(corpus, rc.preset.corpus, out.dir());
  std::printf("%zu scenes (%zu train, %zu heldout) -> %s\n", corpus.scenes.size(),
              corpus.split("train").size(), corpus.split("heldout").size(), out.dir().c_str());
  return 0;
}

int train(const RunConfig& rc, OutputWriter& out) {
  const auto corpus = corpus_for(rc);
  auto judge = make_judge(rc, corpus);
  auto mc = rc.preset.model;
  mc.vocab_size = corpus.vocab.size();
  mc.n_objects = corpus.vocab.lexicon().size();
  model::Model m = rc.inputs.contains("model")
                       ? model::Model::load(rc.inputs.at("model").get<std::string>())
                       : model::Model(mc, rc.preset.train.seed);
  feedback::Trainer trainer(m, corpus, *judge, rc.preset.train);
  std::vector<ordered_json> log;
  std::size_t combined = 0, fallbacks = 0;
  const auto every = std::max<std::int64_t>(1, rc.preset.train.feedback.total_steps / 20);
  trainer.run(
      [&](const feedback::LossReport& r) {
        log.push_back(r.to_json());
        combined += r.phase == feedback::Phase::kCombined;
        fallbacks += r.judge_fallback;
        if (r.step % every == 0 || r.step + 1 == rc.preset.train.feedback.total_steps)
          std::printf("step %5lld %-8s l_ce %.4f l_rl %.4f total %.4f lr %.2e\n",
                      static_cast<long long>(r.step), feedback::phase_name(r.phase).c_str(), r.l_ce,
                      r.l_rl, r.l_total, r.lr);
      },
      [&](const model::Model& ce) { ce.save(out.path("model_ce.bin")); });
  m.save(out.path("model.bin"));
  out.jsonl("train_log.jsonl", log);
  std::printf("%zu steps, %zu combined-phase, %zu judge fallbacks -> %s\n", log.size(), combined,
              fallbacks, out.dir().c_str());
  return 0;
}

int decode(const RunConfig& rc, OutputWriter& out) {
  const auto corpus = corpus_for(rc);
  const auto m = model::Model::load(input(rc, "model", "--model"));
  const auto scenes = scenes_of(corpus, input_or(rc, "split", "heldout"));
  const auto caps = eval::describe_scenes(m, scenes, corpus.vocab, rc.preset.decode, rc.preset.jobs);
  std::vector<ordered_json> rows;
  for (const auto& c : caps) {
    rows.push_back({{"scene_id", c.image_id},
                    {"caption", c.caption},
                    {"n_tokens", c.n_tokens},
                    {"strategy", decoding::strategy_name(rc.preset.decode.strategy)}});
  }
  out.jsonl("captions.jsonl", rows);
  std::printf("%zu captions -> %s\n", rows.size(), out.path("captions.jsonl").c_str());
  return 0;
}

std::string table_chair(const std::vector<std::pair<std::string, eval::ChairReport>>& rows);
std::string table_pope(const std::vector<std::pair<std::string, eval::PopeReport>>& rows);

int eval_chair(const RunConfig& rc, OutputWriter& out) {
  const auto vocab = rc.inputs.contains("data")
                         ? data::load_vocab(fs::path(rc.inputs.at("data").get<std::string>()) / "vocab.json")
                         : data::Vocabulary::standard();
  const auto records = data::load_jsonl(input(rc, "annotations", "--annotations"));
  const auto ann = eval::annotations_from(records, vocab.lexicon());
  std::vector<eval::ChairInput> caps;
  for (const auto& r : read_jsonl(input(rc, "captions", "--captions"))) {
    eval::ChairInput c;
    c.image_id = r.contains("scene_id") ? r.at("scene_id").get<int>() : r.at("image_id").get<int>();
    c.caption = r.at("caption").get<std::string>();
    c.n_tokens = r.contains("n_tokens") ? r.at("n_tokens").get<std::size_t>()
                                        : data::tokenize(c.caption, vocab).size();
    caps.push_back(std::move(c));
  }
  const auto rep = eval::chair(caps, ann, vocab.lexicon());
  ordered_json j = {{"kind", "chair"},
                    {"name", fs::path(input(rc, "captions", "--captions")).stem().string()},
                    {"report", rep.to_json()}};
  out.json("chair.json", j);
  std::fputs(table_chair({{j["name"].get<std::string>(), rep}}).c_str(), stdout);
  return 0;
}

int eval_pope(const RunConfig& rc, OutputWriter& out) {
  const auto corpus = corpus_for(rc);
  const auto m = model::Model::load(input(rc, "model", "--model"));
  auto preset = rc.preset;
  std::vector<std::set<data::ObjectId>> train;
  for (const auto* s : corpus.split("train")) {
    const auto ids = s->object_ids();
    train.emplace_back(ids.begin(), ids.end());
  }
  const auto& lex = corpus.vocab.lexicon();
  const auto scenes = scenes_of(corpus, input_or(rc, "split", "heldout"));
  const auto triples = eval::build_pope(
      eval::annotations_from(std::span<const data::Scene* const>(scenes)),
      eval::CooccurrenceStats::from(train, lex.size()), eval::parse_pope_strategy(preset.pope_strategy),
      preset.pope_questions, rc.seed, lex);
  auto cfg = decoding::DecodeConfig::for_strategy(decoding::Strategy::kGreedy);
  cfg.max_new_tokens = 2;
  const auto answers = eval::answer_pope_all(m, corpus, triples, cfg, preset.jobs);
  const auto rep = eval::eval_pope(answers, triples);
  std::vector<ordered_json> rows;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    rows.push_back({{"image_id", triples[i].image_id},
                    {"object", lex.name(triples[i].object)},
                    {"question", triples[i].question},
                    {"gold", triples[i].gold_yes ? "yes" : "no"},
                    {"answer", answers[i].text},
                    {"predicted", answers[i].yes ? "yes" : "no"},
                    {"unmappable", answers[i].unmappable}});
  }
  out.jsonl("pope_answers.jsonl", rows);
  ordered_json j = {{"kind", "pope"}, {"name", preset.pope_strategy}, {"report", rep.to_json()}};
  out.json("pope.json", j);
  std::fputs(table_pope({{preset.pope_strategy, rep}}).c_str(), stdout);
  return 0;
}

std::string token_label(int t, const data::Vocabulary& v) {
  std::string w = v.word(t);
  for (char& ch : w) {
    if (ch == ',' || ch == '"' || ch == ' ') ch = '_';
  }
  return "txt_" + w;
}

int attn_dump(const RunConfig& rc, OutputWriter& out) {
  const auto corpus = corpus_for(rc);
  const auto m = model::Model::load(input(rc, "model", "--model"));
  const auto& mc = m.config();
  const int scene_id = rc.inputs.value("scene", corpus.split("heldout").empty()
                                                    ? corpus.scenes.front().id
                                                    : corpus.split("heldout").front()->id);
  const int layer = rc.inputs.value("layer", -1), head = rc.inputs.value("head", -1);
  if (layer < -1 || layer >= int(mc.n_layers))
    throw UsageError("--layer out of range: model has " + std::to_string(mc.n_layers) + " layers");
  if (head < -1 || head >= int(mc.n_heads))
    throw UsageError("--head out of range: model has " + std::to_string(mc.n_heads) + " heads");
  const auto& scene = corpus.scene(scene_id);
  const auto prefix = m.encode_scene(scene);
  const auto prompt = data::caption_prompt(corpus.vocab);
  const auto res = decoding::generate(m, prefix, prompt, rc.preset.decode);
  std::vector<int> tokens = prompt;
  const auto& gen = res.best().tokens;
  tokens.insert(tokens.end(), gen.begin(), gen.end());
  const auto fo = m.forward(prefix, tokens);
  const std::size_t P = mc.prefix_len, S = fo.attention.seq_len;
  const std::size_t first = P + prompt.size();  // first generated position

  std::vector<std::string> cols;
  for (std::size_t j = 0; j < P; ++j) cols.push_back("img_" + std::to_string(j));
  for (int t : tokens) cols.push_back(token_label(t, corpus.vocab));

  std::vector<std::string> files;
  for (std::size_t l = 0; l < mc.n_layers; ++l) {
    if (layer >= 0 && int(l) != layer) continue;
    for (std::size_t h = 0; h < mc.n_heads; ++h) {
      if (head >= 0 && int(h) != head) continue;
      // rows: the query of every generated token (the decoding window)
      std::ostringstream csv;
      csv << std::setprecision(9) << "row";
      for (const auto& c : cols) csv << ',' << c;
      csv << '\n';
      double peak = 0;
      for (std::size_t i = first; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) peak = std::max(peak, double(fo.attention.at(l, h, i, j)));
      }
      std::string ppm;
      const std::size_t cell = 8, W = S * cell, H = (S - first) * cell;
      if (rc.inputs.value("ppm", false) && S > first)
        ppm = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
      for (std::size_t i = first; i < S; ++i) {
        csv << token_label(tokens[i - P], corpus.vocab);
        std::string line;
        for (std::size_t j = 0; j < S; ++j) {
          const double w = fo.attention.at(l, h, i, j);
          csv << ',' << w;
          const auto px = static_cast<unsigned char>(peak > 0 ? std::lround(255.0 * w / peak) : 0);
          line.append(cell, char(px));
        }
        csv << '\n';
        if (!ppm.empty()) {
          for (std::size_t r = 0; r < cell; ++r) ppm += line;
        }
      }
      const std::string stem = "attn_L" + std::to_string(l) + "_H" + std::to_string(h);
      out.text(stem + ".csv", csv.str());
      files.push_back(stem + ".csv");
      if (!ppm.empty()) {
        out.text(stem + ".ppm", ppm);
        files.push_back(stem + ".ppm");
      }
    }
  }
  out.json("attn_tokens.json", {{"scene_id", scene_id},
                                {"prefix_len", P},
                                {"caption", data::detokenize(gen, corpus.vocab)},
                                {"columns", cols},
                                {"files", files}});
  std::printf("%zu files for scene %d -> %s\n", files.size(), scene_id, out.dir().c_str());
  return 0;
}

// ------------------------------------------------------------------ report

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string num(double v, int prec = 1) {
  char b[32];
  std::snprintf(b, sizeof b, "%.*f", prec, v);
  return b;
}

// Both labelings. The alt C_S / C_I columns are the instance / sentence
// ratios; original CHAIR names them the other way round.
std::string table_chair(const std::vector<std::pair<std::string, eval::ChairReport>>& rows) {
  std::string t = pad("run", 24) + pad("instance%", 11) + pad("sentence%", 11) + pad("Len", 8) +
                  pad("C_S(alt)", 12) + pad("C_I(alt)", 12) + pad("CHAIRi", 9) + "CHAIRs\n";
  for (const auto& [name, r] : rows) {
    const auto inst = num(100 * r.instance_ratio), sent = num(100 * r.sentence_ratio);
    t += pad(name, 24) + pad(inst, 11) + pad(sent, 11) + pad(num(r.avg_len, 2), 8) + pad(inst, 12) +
         pad(sent, 12) + pad(inst, 9) + sent + "\n";
  }
  return t;
}

std::string table_pope(const std::vector<std::pair<std::string, eval::PopeReport>>& rows) {
  std::string t = pad("run", 24) + pad("Accuracy", 10) + pad("Precision", 11) + pad("Recall", 9) +
                  pad("F1", 8) + "Yes(%)\n";
  for (const auto& [name, r] : rows) {
    t += pad(name, 24) + pad(num(100 * r.accuracy), 10) + pad(num(100 * r.precision), 11) +
         pad(num(100 * r.recall), 9) + pad(num(100 * r.f1), 8) + num(100 * r.yes_rate) + "\n";
  }
  return t;
}

int report(const RunConfig&, OutputWriter& out, const Flags& f) {
  if (f.in.empty()) throw UsageError("report needs --in");
  if (f.format != "json" && f.format != "table") throw UsageError("--format must be json or table");
  std::vector<std::pair<std::string, eval::ChairReport>> chairs;
  std::vector<std::pair<std::string, eval::PopeReport>> popes;
  ordered_json all = ordered_json::array();
  for (const auto& p : f.in) {
    const auto j = read_json(p);
    const std::string kind = j.value("kind", "");
    const std::string name = j.value("name", fs::path(p).stem().string());
    if (kind == "chair") {
      chairs.push_back({name, eval::ChairReport::from_json(j.at("report"))});
    } else if (kind == "pope") {
      popes.push_back({name, eval::PopeReport::from_json(j.at("report"))});
    } else {
      throw UsageError(p + ": not a chair or pope metric file");
    }
    all.push_back(j);
  }
  std::string body;
  if (f.format == "json") {
    body = all.dump(2) + "\n";
  } else {
    if (!chairs.empty()) body += table_chair(chairs);
    if (!chairs.empty() && !popes.empty()) body += "\n";
    if (!popes.empty()) body += table_pope(popes);
  }
  out.text(f.format == "json" ? "report.json" : "report.txt", body);
  std::fputs(body.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"helpd: hallucination feedback and penalty decoding lab"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON run config (flags override it)")->check(CLI::ExistingFile);
    s->add_option("--out", f.out, "output directory");
    s->add_option("--seed", f.seed, "seed for corpus, training and sampling");
    s->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  auto data_opt = [&](CLI::App* s) {
    s->add_option("--data", f.data, "corpus directory from gen-data (default: generate)");
  };
  auto model_opt = [&](CLI::App* s) {
    s->add_option("--model", f.model, "model checkpoint")->check(CLI::ExistingFile);
  };
  auto decode_opts = [&](CLI::App* s) {
    s->add_option("--strategy", f.strategy, "greedy, beam, nucleus, overtrust or vep")
        ->check(CLI::IsMember({"greedy", "beam", "nucleus", "overtrust", "vep"}));
    s->add_option("--beam-width", f.beam_width);
    s->add_option("--gamma", f.gamma);
    s->add_option("--max-new-tokens", f.max_new_tokens);
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  common(gen);
  gen->add_option("--scenes", f.scenes, "train scenes");
  gen->add_option("--heldout", f.heldout, "heldout scenes");
  gen->add_option("--bias-config", f.bias_config, "bias config JSON")->check(CLI::ExistingFile);

  auto* tr = app.add_subcommand("train", "CE then hierarchical-feedback training");
  common(tr);
  data_opt(tr);
  tr->add_option("--init", f.model, "start from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--total-steps", f.total_steps);
  tr->add_option("--c", f.c, "fraction of steps before feedback starts");
  tr->add_option("--sigma", f.sigma, "sentence-reward weight");
  tr->add_option("--lr", f.lr);
  tr->add_option("--judge", f.judge, "mock or remote")->check(CLI::IsMember({"mock", "remote"}));

  auto* dec = app.add_subcommand("decode", "caption a split");
  common(dec);
  data_opt(dec);
  model_opt(dec);
  decode_opts(dec);
  dec->add_option("--split", f.split, "train, heldout or all");

  auto* ec = app.add_subcommand("eval-chair", "CHAIR ratios of a caption file");
  common(ec);
  ec->add_option("--captions", f.captions, "JSONL with scene_id, caption[, n_tokens]")
      ->check(CLI::ExistingFile);
  ec->add_option("--annotations", f.annotations, "JSONL with scene_id and objects")
      ->check(CLI::ExistingFile);
  ec->add_option("--data", f.data, "corpus directory whose vocab.json to use");

  auto* ep = app.add_subcommand("eval-pope", "POPE polling on a split");
  common(ep);
  data_opt(ep);
  model_opt(ep);
  ep->add_option("--strategy", f.pope_strategy)
      ->check(CLI::IsMember({"random", "popular", "adversarial"}));
  ep->add_option("--questions-per-image", f.questions_per_image);
  ep->add_option("--split", f.split, "train, heldout or all");

  auto* ad = app.add_subcommand("attn-dump", "attention maps of one generation");
  common(ad);
  data_opt(ad);
  model_opt(ad);
  decode_opts(ad);
  ad->add_option("--scene", f.scene, "scene id (default: first heldout)");
  ad->add_option("--layer", f.layer, "layer index (default: all)");
  ad->add_option("--head", f.head, "head index (default: all)");
  ad->add_flag("--ppm", f.ppm, "also write greyscale PGM-in-PPM-family maps");

  auto* rp = app.add_subcommand("report", "tables from stored metric JSON");
  common(rp);
  rp->add_option("--in", f.in, "chair.json / pope.json files")->required()->check(CLI::ExistingFile);
  rp->add_option("--format", f.format, "json or table")->check(CLI::IsMember({"json", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  try {
    const RunConfig rc = resolve(cmd, f);
    OutputWriter out(rc.out);
    out.json("run_config.json", rc.to_json());
    if (cmd == "gen-data") return gen_data(rc, out);
    if (cmd == "train") return train(rc, out);
    if (cmd == "decode") return decode(rc, out);
    if (cmd == "eval-chair") return eval_chair(rc, out);
    if (cmd == "eval-pope") return eval_pope(rc, out);
    if (cmd == "attn-dump") return attn_dump(rc, out);
    if (cmd == "report") return report(rc, out, f);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "helpd %s: %s\n", cmd.c_str(), e.what());
    return 2;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "helpd %s: %s\n", cmd.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "helpd %s: error: %s\n", cmd.c_str(), e.what());
    return 1;
  }
  return 2;
}
