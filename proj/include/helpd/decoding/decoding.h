#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "helpd/decoding/penalty.h"
#include "helpd/model/model.h"
#include "json.hpp"

namespace helpd::decoding {

enum class Strategy { kGreedy, kBeam, kNucleus, kOvertrust, kVep };

Strategy parse_strategy(const std::string& name);  // throws InvalidArgument
std::string strategy_name(Strategy s);

// Which attention feeds the penalties: one layer (negative counts from the
// end) and either the mean over heads or a single head.
struct AttentionSource {
  int layer = -1;
  bool mean_heads = true;
  std::size_t head = 0;
};

struct DecodeConfig {
  Strategy strategy = Strategy::kBeam;
  std::size_t beam_width = 5;
  double gamma = 50.0;
  bool enable_overtrust = false;
  bool enable_vision = false;
  AttentionSource source;
  std::size_t max_new_tokens = 32;
  double nucleus_p = 0.9;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int eos_token = 2;
  bool stop_at_eos = true;
  bool trace = false;

  // Presets: overtrust = beam + over-trust penalty, vep = beam + both.
  static DecodeConfig for_strategy(Strategy s);
  void validate() const;  // throws InvalidArgument
  bool penalties() const { return enable_overtrust || enable_vision; }
  bool uses_beam() const;

  nlohmann::ordered_json to_json() const;
  static DecodeConfig from_json(const nlohmann::ordered_json& j);
};

struct TraceRecord {
  std::size_t step = 0;
  std::size_t candidate = 0;  // beam slot the record belongs to
  PenaltyScores scores;
  int chosen_token = -1;
};
nlohmann::ordered_json to_json(const TraceRecord& r);

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, eos excluded
  bool finished = false;    // ended with eos
  double log_prob = 0.0;    // cumulative, eos included
  double score = 0.0;       // log_prob / length - rho at the last step

  std::size_t length() const { return tokens.size() + (finished ? 1 : 0); }
};

struct DecodeResult {
  std::vector<Hypothesis> ranked;  // best first
  std::vector<TraceRecord> trace;

  const Hypothesis& best() const { return ranked.at(0); }
};

// Penalty window of the generated tokens from their attention rows. Row i
// of `rows` is the attention of generated token i over positions
// 0..positions[i]; `positions` are the sequence positions of the generated
// tokens, `prefix_len` the number of image positions.
AttentionWindow make_window(const std::vector<std::vector<Real>>& rows,
                            const std::vector<std::size_t>& positions,
                            std::size_t prefix_len);

// Selected attention row of a step output (mean over heads or one head).
std::vector<Real> select_attention(const model::StepOutput& out,
                                   const model::ModelConfig& config,
                                   const AttentionSource& source);

// Length-normalized beam search; with penalties on, each candidate is
// scored by log_prob / length - rho using its own attention state. The
// candidates of a beam are its beam_width most likely continuations.
DecodeResult beam_search(const model::Model& model, const model::VisualPrefix& prefix,
                         std::span<const int> prompt, const DecodeConfig& config);

// Dispatches on config.strategy. Greedy and nucleus compute the penalty
// only for the trace: on a single path rho is shared by every candidate.
DecodeResult generate(const model::Model& model, const model::VisualPrefix& prefix,
                      std::span<const int> prompt, const DecodeConfig& config);

// generate() over many prefixes with up to `jobs` worker threads; results
// keep the input order.
std::vector<DecodeResult> generate_many(const model::Model& model,
                                        const std::vector<model::VisualPrefix>& prefixes,
                                        std::span<const int> prompt,
                                        const DecodeConfig& config, std::size_t jobs = 1);

}  // namespace helpd::decoding
