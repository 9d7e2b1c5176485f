#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "helpd/data/corpus.h"
#include "helpd/numerics/graph.h"
#include "json.hpp"

namespace helpd::model {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t vocab_size = 0;
  std::size_t prefix_len = 16;    // l
  std::size_t max_text_len = 48;  // t_max
  std::size_t n_objects = 32;
  std::size_t n_attributes = 8;
  double init_std = 0.02;

  std::size_t max_seq_len() const { return prefix_len + max_text_len; }
  void validate() const;  // throws InvalidArgument
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::ordered_json& j);
};

// Object and attribute ids of the l prefix slots. Unused slots hold the
// blank object id (n_objects) and attribute -1 (no attribute row).
struct PrefixSlots {
  std::vector<int> objects;
  std::vector<int> attributes;
};
PrefixSlots prefix_slots(const data::Scene& scene, const ModelConfig& config);

// l x d_model rows fed in front of the text.
struct VisualPrefix {
  Tensor embeddings;
};

// Attention probabilities of one forward pass: per layer a [H, S, S] tensor
// for S = l + len.
struct AttentionRecord {
  std::size_t seq_len = 0;
  std::vector<Tensor> layers;

  std::size_t n_layers() const { return layers.size(); }
  std::size_t n_heads() const { return layers.empty() ? 0 : layers[0].dim(0); }
  Real at(std::size_t layer, std::size_t head, std::size_t i, std::size_t j) const;
  // [S, S] matrix of one head.
  Tensor head(std::size_t layer, std::size_t head) const;
};

struct ForwardOutput {
  Tensor logits;  // [len, V]; row j predicts the token after tokens[j]
  AttentionRecord attention;
};

// Key/value cache of one sequence for incremental decoding. Plain value
// type: copying it forks the sequence.
struct DecodeState {
  std::size_t pos = 0;                 // positions filled so far
  std::vector<std::vector<Real>> keys;    // per layer, [max_seq_len, d]
  std::vector<std::vector<Real>> values;  // per layer, [max_seq_len, d]
};

// Result of feeding one token at position `pos`.
struct StepOutput {
  std::vector<Real> logits;     // [V], next-token logits
  std::vector<Real> attention;  // [n_layers, n_heads, pos + 1]
  // New key/value rows per layer, to commit without recomputation.
  std::vector<std::vector<Real>> new_keys, new_values;

  std::span<const Real> attention_row(std::size_t layer, std::size_t head,
                                      std::size_t n_heads) const;
};

// Teacher-forced training batch. inputs[b] starts with <bos>; targets[b] is
// aligned with inputs[b] (targets[b][j] is the token after inputs[b][j]),
// -1 where no loss applies.
struct TokenBatch {
  std::vector<PrefixSlots> prefixes;
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;

  std::size_t size() const { return inputs.size(); }
  std::size_t text_len() const;  // longest input
};

struct GraphForward {
  Var logits;  // [B * T, V]; row b*T + j follows inputs[b][0..j]
  std::size_t batch = 0;
  std::size_t text_len = 0;
  std::vector<Var> params;  // parallel to Model::parameters()
  std::vector<std::shared_ptr<Tensor>> attention;  // per layer [B,H,S,S]
};

// Decoder-only transformer with a visual prefix. Pre-LN blocks; prefix
// positions attend to each other bidirectionally, text positions causally
// and to the whole prefix.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;

  VisualPrefix encode_scene(const data::Scene& scene) const;
  VisualPrefix encode_slots(const PrefixSlots& slots) const;

  ForwardOutput forward(const VisualPrefix& prefix, std::span<const int> tokens) const;

  // Incremental path. start() runs the prefix; step() appends one token
  // and commits it; peek() computes the same output without committing.
  DecodeState start(const VisualPrefix& prefix) const;
  StepOutput step(DecodeState& state, int token) const;
  StepOutput peek(const DecodeState& state, int token) const;
  void commit(DecodeState& state, const StepOutput& out) const;

  // Differentiable batched forward over the current parameter values.
  GraphForward build(Graph& g, const TokenBatch& batch,
                     bool keep_attention = false) const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  struct LayerIdx {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc,
        w_proj, b_proj;
  };
  std::size_t add_param(const std::string& name, Tensor t);
  const Tensor& p(std::size_t i) const { return params_[i]; }
  void check_token(int token) const;
  // Runs rows x [n, d] placed at positions state.pos.. against the cache.
  // Bidirectional rows see each other (the prefix); otherwise n must be 1.
  // out.attention is [n_layers, n_heads, n, state.pos + n].
  void run_rows(const DecodeState& state, std::vector<Real> x, std::size_t n,
                bool bidirectional, StepOutput& out) const;

  ModelConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, obj_emb_ = 0, attr_emb_ = 0;
  std::size_t lnf_g_ = 0, lnf_b_ = 0, w_out_ = 0, b_out_ = 0;
  std::vector<LayerIdx> layers_;
};

// log-softmax of each row of logits [n, V].
Tensor log_probs(const Tensor& logits);

}  // namespace helpd::model
