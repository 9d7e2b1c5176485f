#include "helpd/decoding/decoding.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "helpd/numerics/kernels.h"

namespace helpd::decoding {

using json = nlohmann::ordered_json;

Strategy parse_strategy(const std::string& name) {
  if (name == "greedy") return Strategy::kGreedy;
  if (name == "beam") return Strategy::kBeam;
  if (name == "nucleus") return Strategy::kNucleus;
  if (name == "overtrust") return Strategy::kOvertrust;
  if (name == "vep") return Strategy::kVep;
  throw InvalidArgument("unknown decoding strategy '" + name +
                        "' (greedy, beam, nucleus, overtrust, vep)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kBeam: return "beam";
    case Strategy::kNucleus: return "nucleus";
    case Strategy::kOvertrust: return "overtrust";
    case Strategy::kVep: return "vep";
  }
  return "?";
}

DecodeConfig DecodeConfig::for_strategy(Strategy s) {
  DecodeConfig c;
  c.strategy = s;
  c.enable_overtrust = s == Strategy::kOvertrust || s == Strategy::kVep;
  c.enable_vision = s == Strategy::kVep;
  return c;
}

bool DecodeConfig::uses_beam() const {
  return strategy == Strategy::kBeam || strategy == Strategy::kOvertrust ||
         strategy == Strategy::kVep;
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw InvalidArgument("decode: beam_width must be >= 1");
  if (!(nucleus_p > 0 && nucleus_p <= 1)) {
    throw InvalidArgument("decode: nucleus_p must be in (0, 1], got " + std::to_string(nucleus_p));
  }
  if (!(gamma > 0)) throw InvalidArgument("decode: gamma must be > 0");
  if (!(temperature > 0)) throw InvalidArgument("decode: temperature must be > 0");
  if (max_new_tokens < 1) throw InvalidArgument("decode: max_new_tokens must be >= 1");
}

json DecodeConfig::to_json() const {
  return {{"strategy", strategy_name(strategy)},
          {"beam_width", beam_width},
          {"gamma", gamma},
          {"enable_overtrust", enable_overtrust},
          {"enable_vision", enable_vision},
          {"attention_layer", source.layer},
          {"attention_heads", source.mean_heads ? "mean" : "single"},
          {"attention_head", source.head},
          {"max_new_tokens", max_new_tokens},
          {"nucleus_p", nucleus_p},
          {"temperature", temperature},
          {"seed", seed}};
}

DecodeConfig DecodeConfig::from_json(const json& j) {
  DecodeConfig c = for_strategy(parse_strategy(j.value("strategy", std::string("beam"))));
  c.beam_width = j.value("beam_width", c.beam_width);
  c.gamma = j.value("gamma", c.gamma);
  c.enable_overtrust = j.value("enable_overtrust", c.enable_overtrust);
  c.enable_vision = j.value("enable_vision", c.enable_vision);
  c.source.layer = j.value("attention_layer", c.source.layer);
  c.source.mean_heads = j.value("attention_heads", std::string("mean")) != "single";
  c.source.head = j.value("attention_head", c.source.head);
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.nucleus_p = j.value("nucleus_p", c.nucleus_p);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  return c;
}

json to_json(const TraceRecord& r) {
  return {{"step", r.step},       {"candidate", r.candidate}, {"phi", r.scores.phi},
          {"psi", r.scores.psi},  {"beta", r.scores.beta},    {"rho", r.scores.rho},
          {"chosen_token", r.chosen_token}};
}

AttentionWindow make_window(const std::vector<std::vector<Real>>& rows,
                            const std::vector<std::size_t>& positions,
                            std::size_t prefix_len) {
  const std::size_t h = rows.size();
  AttentionWindow w;
  if (h == 0) return w;
  w.vision = Tensor({h, prefix_len});
  w.text = Tensor({h, h});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < prefix_len; ++j) w.vision.at(i, j) = rows[i].at(j);
    for (std::size_t j = 0; j <= i; ++j) w.text.at(i, j) = rows[i].at(positions[j]);
  }
  return w;
}

std::vector<Real> select_attention(const model::StepOutput& out,
                                   const model::ModelConfig& config,
                                   const AttentionSource& source) {
  const int L = int(config.n_layers);
  const int layer = source.layer < 0 ? L + source.layer : source.layer;
  if (layer < 0 || layer >= L) {
    throw InvalidArgument("decode: attention layer " + std::to_string(source.layer) +
                          " out of range for " + std::to_string(L) + " layers");
  }
  const std::size_t H = config.n_heads;
  if (!source.mean_heads) {
    if (source.head >= H) throw InvalidArgument("decode: attention head out of range");
    auto r = out.attention_row(std::size_t(layer), source.head, H);
    return {r.begin(), r.end()};
  }
  auto first = out.attention_row(std::size_t(layer), 0, H);
  std::vector<Real> row(first.size(), Real(0));
  for (std::size_t h = 0; h < H; ++h) {
    auto r = out.attention_row(std::size_t(layer), h, H);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += r[j];
  }
  for (auto& v : row) v /= Real(H);
  return row;
}

namespace {

struct Beam {
  model::DecodeState state;
  std::vector<int> tokens;
  double log_prob = 0.0;
  std::vector<Real> next_lp;
  std::vector<std::vector<Real>> rows;
  std::vector<std::size_t> positions;
  BetaState beta;
  PenaltyScores last;
};

struct Candidate {
  std::size_t beam = 0;
  int token = 0;
  double log_prob = 0.0;
  double score = 0.0;
  PenaltyScores pen;
  BetaState beta;
  std::vector<Real> row;
  model::StepOutput out;
  bool has_out = false;
};

PenaltyScores penalize(const AttentionWindow& w, BetaState& state, const DecodeConfig& cfg) {
  const double phi = overtrust_penalty(w.text, cfg.gamma);
  const double psi = vision_penalty(w.vision, cfg.gamma).psi;
  PenaltyScores s = combined_penalty(phi, psi, state);
  if (!cfg.enable_vision) {
    s.beta = 0.0;
    s.rho = s.phi;
  }
  if (!cfg.enable_overtrust) {
    s.phi = 0.0;
    s.rho = -s.beta * s.psi;
  }
  return s;
}

std::vector<Real> log_softmax(const std::vector<Real>& logits) {
  std::vector<Real> lp = logits;
  kernels::log_softmax_row(lp.data(), lp.size());
  return lp;
}

// Runs the prompt; returns the state after it and the last step output.
model::StepOutput run_prompt(const model::Model& m, model::DecodeState& st,
                             std::span<const int> prompt) {
  if (prompt.empty()) throw InvalidArgument("decode: empty prompt");
  model::StepOutput out;
  for (int t : prompt) out = m.step(st, t);
  return out;
}

std::size_t horizon(const model::Model& m, std::span<const int> prompt,
                    const DecodeConfig& cfg) {
  const std::size_t room = m.config().max_text_len > prompt.size()
                               ? m.config().max_text_len - prompt.size()
                               : 0;
  if (room == 0) throw InvalidArgument("decode: prompt fills max_text_len");
  return std::min(cfg.max_new_tokens, room);
}

// Indices of the k largest entries, larger first, lower id first on ties.
std::vector<int> top_k(const std::vector<Real>& v, std::size_t k) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx.end(),
                    [&](int a, int b) {
                      return v[std::size_t(a)] > v[std::size_t(b)] ||
                             (v[std::size_t(a)] == v[std::size_t(b)] && a < b);
                    });
  idx.resize(k);
  return idx;
}

}  // namespace

DecodeResult beam_search(const model::Model& m, const model::VisualPrefix& prefix,
                         std::span<const int> prompt, const DecodeConfig& cfg) {
  cfg.validate();
  const std::size_t W = cfg.beam_width, steps = horizon(m, prompt, cfg);
  const bool pen = cfg.penalties();
  const std::size_t l = m.config().prefix_len;
  DecodeResult res;

  std::vector<Beam> beams(1);
  beams[0].state = m.start(prefix);
  beams[0].next_lp = log_softmax(run_prompt(m, beams[0].state, prompt).logits);
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < steps && !beams.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const Beam& beam = beams[b];
      for (int tok : top_k(beam.next_lp, W)) {
        Candidate c;
        c.beam = b;
        c.token = tok;
        c.log_prob = beam.log_prob + double(beam.next_lp[std::size_t(tok)]);
        const double len = double(beam.tokens.size() + 1);
        c.score = c.log_prob / len;
        if (pen) {
          c.out = m.peek(beam.state, tok);
          c.has_out = true;
          c.row = select_attention(c.out, m.config(), cfg.source);
          auto rows = beam.rows;
          auto pos = beam.positions;
          rows.push_back(c.row);
          pos.push_back(beam.state.pos);
          c.beta = beam.beta;
          c.pen = penalize(make_window(rows, pos, l), c.beta, cfg);
          c.score -= c.pen.rho;
        }
        cands.push_back(std::move(c));
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<Beam> next;
    for (std::size_t rank = 0; rank < cands.size() && next.size() < W; ++rank) {
      Candidate& c = cands[rank];
      const Beam& parent = beams[c.beam];
      if (cfg.stop_at_eos && c.token == cfg.eos_token) {
        if (rank < W) {
          Hypothesis h;
          h.tokens = parent.tokens;
          h.finished = true;
          h.log_prob = c.log_prob;
          h.score = c.score;
          finished.push_back(std::move(h));
        }
        continue;
      }
      Beam nb;
      nb.state = parent.state;
      nb.tokens = parent.tokens;
      nb.tokens.push_back(c.token);
      nb.log_prob = c.log_prob;
      const std::size_t pos = parent.state.pos;
      if (!c.has_out) {
        c.out = m.step(nb.state, c.token);
      } else {
        m.commit(nb.state, c.out);
      }
      nb.next_lp = log_softmax(c.out.logits);
      if (pen) {
        nb.rows = parent.rows;
        nb.rows.push_back(std::move(c.row));
        nb.positions = parent.positions;
        nb.positions.push_back(pos);
        nb.beta = c.beta;
        nb.last = c.pen;
      }
      if (cfg.trace) res.trace.push_back({t, next.size(), c.pen, c.token});
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
    if (finished.size() >= W) break;
  }

  res.ranked = std::move(finished);
  if (res.ranked.size() < W) {
    for (const Beam& b : beams) {
      Hypothesis h;
      h.tokens = b.tokens;
      h.log_prob = b.log_prob;
      h.score = b.log_prob / double(std::max<std::size_t>(b.tokens.size(), 1)) - b.last.rho;
      res.ranked.push_back(std::move(h));
    }
  }
  std::stable_sort(res.ranked.begin(), res.ranked.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return res;
}

namespace {

DecodeResult single_path(const model::Model& m, const model::VisualPrefix& prefix,
                         std::span<const int> prompt, const DecodeConfig& cfg, bool sample) {
  cfg.validate();
  const std::size_t steps = horizon(m, prompt, cfg);
  const std::size_t l = m.config().prefix_len;
  const bool pen = cfg.penalties() || cfg.trace;
  DecodeResult res;
  model::DecodeState st = m.start(prefix);
  model::StepOutput out = run_prompt(m, st, prompt);
  std::mt19937_64 rng(cfg.seed);
  Hypothesis h;
  std::vector<std::vector<Real>> rows;
  std::vector<std::size_t> positions;
  BetaState beta;
  double rho = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto lp = log_softmax(out.logits);
    int tok;
    if (!sample) {
      tok = decode_step(lp, rho);
    } else {
      std::vector<Real> p = out.logits;
      for (auto& v : p) v /= Real(cfg.temperature);
      kernels::softmax_row(p.data(), p.size());
      auto order = top_k(p, p.size());
      double total = 0;
      std::size_t keep = 0;
      while (keep < order.size()) {
        total += double(p[std::size_t(order[keep++])]);
        if (total >= cfg.nucleus_p) break;
      }
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0;
      tok = order[keep - 1];
      for (std::size_t k = 0; k < keep; ++k) {
        acc += double(p[std::size_t(order[k])]);
        if (u < acc) {
          tok = order[k];
          break;
        }
      }
    }
    h.log_prob += double(lp[std::size_t(tok)]);
    if (cfg.stop_at_eos && tok == cfg.eos_token) {
      h.finished = true;
      break;
    }
    h.tokens.push_back(tok);
    const std::size_t pos = st.pos;
    out = m.step(st, tok);
    if (pen) {
      rows.push_back(select_attention(out, m.config(), cfg.source));
      positions.push_back(pos);
      const PenaltyScores s = penalize(make_window(rows, positions, l), beta, cfg);
      rho = s.rho;
      if (cfg.trace) res.trace.push_back({t, 0, s, tok});
    }
  }
  h.score = h.log_prob / double(std::max<std::size_t>(h.length(), 1)) - rho;
  res.ranked.push_back(std::move(h));
  return res;
}

}  // namespace

DecodeResult generate(const model::Model& m, const model::VisualPrefix& prefix,
                      std::span<const int> prompt, const DecodeConfig& cfg) {
  if (cfg.uses_beam()) return beam_search(m, prefix, prompt, cfg);
  return single_path(m, prefix, prompt, cfg, cfg.strategy == Strategy::kNucleus);
}

std::vector<DecodeResult> generate_many(const model::Model& m,
                                        const std::vector<model::VisualPrefix>& prefixes,
                                        std::span<const int> prompt,
                                        const DecodeConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::vector<DecodeResult> out(prefixes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < prefixes.size();) {
      try {
        DecodeConfig c = cfg;
        c.seed = cfg.seed + i;
        out[i] = generate(m, prefixes[i], prompt, c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, prefixes.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < jobs; ++k) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace helpd::decoding
