#include "helpd/model/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "helpd/numerics/checkpoint.h"
#include "helpd/numerics/kernels.h"
#include "helpd/numerics/ops.h"

namespace helpd::model {

using json = nlohmann::ordered_json;

void ModelConfig::validate() const {
  auto bad = [](const std::string& why) { throw InvalidArgument("model config: " + why); };
  if (n_layers < 1) bad("n_layers must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) bad("d_model must be divisible by n_heads");
  if (vocab_size < 4) bad("vocab_size must be >= 4");
  if (prefix_len < 1) bad("prefix_len must be >= 1");
  if (max_text_len < 1) bad("max_text_len must be >= 1");
  if (n_objects < 1) bad("n_objects must be >= 1");
  if (!(init_std > 0)) bad("init_std must be > 0");
}

json ModelConfig::to_json() const {
  return {{"n_layers", n_layers},         {"n_heads", n_heads},
          {"d_model", d_model},           {"vocab_size", vocab_size},
          {"prefix_len", prefix_len},     {"max_text_len", max_text_len},
          {"n_objects", n_objects},       {"n_attributes", n_attributes},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_model = j.value("d_model", c.d_model);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.prefix_len = j.value("prefix_len", c.prefix_len);
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.n_objects = j.value("n_objects", c.n_objects);
  c.n_attributes = j.value("n_attributes", c.n_attributes);
  c.init_std = j.value("init_std", c.init_std);
  return c;
}

PrefixSlots prefix_slots(const data::Scene& scene, const ModelConfig& config) {
  PrefixSlots s;
  s.objects.assign(config.prefix_len, int(config.n_objects));
  s.attributes.assign(config.prefix_len, -1);
  // scene.objects is kept in ascending object id order
  std::vector<data::SceneObject> objs = scene.objects;
  std::sort(objs.begin(), objs.end(),
            [](const auto& a, const auto& b) { return a.object < b.object; });
  const std::size_t n = std::min(objs.size(), config.prefix_len);
  for (std::size_t i = 0; i < n; ++i) {
    if (objs[i].object < 0 || std::size_t(objs[i].object) >= config.n_objects) {
      throw InvalidArgument("prefix: object id " + std::to_string(objs[i].object) +
                            " outside the model's object table");
    }
    s.objects[i] = objs[i].object;
    const int a = objs[i].attribute;
    s.attributes[i] = (a >= 0 && std::size_t(a) < config.n_attributes) ? a : -1;
  }
  return s;
}

Real AttentionRecord::at(std::size_t layer, std::size_t h, std::size_t i,
                         std::size_t j) const {
  const Tensor& t = layers.at(layer);
  return t[(h * seq_len + i) * seq_len + j];
}

Tensor AttentionRecord::head(std::size_t layer, std::size_t h) const {
  const Tensor& t = layers.at(layer);
  if (h >= t.dim(0)) throw InvalidArgument("attention: head out of range");
  Tensor out({seq_len, seq_len});
  std::memcpy(out.data(), t.data() + h * seq_len * seq_len,
              seq_len * seq_len * sizeof(Real));
  return out;
}

std::span<const Real> StepOutput::attention_row(std::size_t layer, std::size_t head,
                                                std::size_t n_heads) const {
  const std::size_t width = attention.size() / (new_keys.size() * n_heads);
  return std::span<const Real>(attention).subspan((layer * n_heads + head) * width,
                                                  width);
}

std::size_t TokenBatch::text_len() const {
  std::size_t t = 0;
  for (const auto& in : inputs) t = std::max(t, in.size());
  return t;
}

// ---------------------------------------------------------------------------

std::size_t Model::add_param(const std::string& name, Tensor t) {
  names_.push_back(name);
  params_.push_back(std::move(t));
  return params_.size() - 1;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d_model;
  auto normal = [&](Shape shape, double std) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, std);
    for (auto& v : t.values()) v = Real(dist(rng));
    return t;
  };
  const double s = config_.init_std;
  const double s_proj = s / std::sqrt(2.0 * double(config_.n_layers));
  tok_emb_ = add_param("tok_emb", normal({config_.vocab_size, d}, s));
  pos_emb_ = add_param("pos_emb", normal({config_.max_seq_len(), d}, s));
  obj_emb_ = add_param("obj_emb", normal({config_.n_objects + 1, d}, s));
  attr_emb_ = add_param("attr_emb", normal({std::max<std::size_t>(config_.n_attributes, 1), d}, s));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerIdx li{};
    li.ln1_g = add_param(pre + "ln1.gain", Tensor({d}, Real(1)));
    li.ln1_b = add_param(pre + "ln1.bias", Tensor({d}));
    li.w_qkv = add_param(pre + "attn.w_qkv", normal({d, 3 * d}, s));
    li.b_qkv = add_param(pre + "attn.b_qkv", Tensor({3 * d}));
    li.w_o = add_param(pre + "attn.w_o", normal({d, d}, s_proj));
    li.b_o = add_param(pre + "attn.b_o", Tensor({d}));
    li.ln2_g = add_param(pre + "ln2.gain", Tensor({d}, Real(1)));
    li.ln2_b = add_param(pre + "ln2.bias", Tensor({d}));
    li.w_fc = add_param(pre + "mlp.w_fc", normal({d, 4 * d}, s));
    li.b_fc = add_param(pre + "mlp.b_fc", Tensor({4 * d}));
    li.w_proj = add_param(pre + "mlp.w_proj", normal({4 * d, d}, s_proj));
    li.b_proj = add_param(pre + "mlp.b_proj", Tensor({d}));
    layers_.push_back(li);
  }
  lnf_g_ = add_param("ln_f.gain", Tensor({d}, Real(1)));
  lnf_b_ = add_param("ln_f.bias", Tensor({d}));
  w_out_ = add_param("w_out", normal({d, config_.vocab_size}, s));
  b_out_ = add_param("b_out", Tensor({config_.vocab_size}));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.size();
  return n;
}

void Model::check_token(int token) const {
  if (token < 0 || std::size_t(token) >= config_.vocab_size) {
    throw InvalidArgument("model: token id " + std::to_string(token) +
                          " outside vocabulary of size " +
                          std::to_string(config_.vocab_size));
  }
}

VisualPrefix Model::encode_slots(const PrefixSlots& slots) const {
  const std::size_t l = config_.prefix_len, d = config_.d_model;
  if (slots.objects.size() != l || slots.attributes.size() != l) {
    throw ShapeError("encode: expected " + std::to_string(l) + " prefix slots");
  }
  VisualPrefix out{Tensor({l, d})};
  for (std::size_t i = 0; i < l; ++i) {
    const int o = slots.objects[i], a = slots.attributes[i];
    if (o < 0 || std::size_t(o) > config_.n_objects) {
      throw InvalidArgument("encode: object id " + std::to_string(o) + " out of range");
    }
    Real* dst = out.embeddings.data() + i * d;
    const Real* orow = p(obj_emb_).data() + std::size_t(o) * d;
    const Real* prow = p(pos_emb_).data() + i * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] = orow[c];
    if (a >= 0) {
      const Real* arow = p(attr_emb_).data() + std::size_t(a) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += arow[c];
    }
    for (std::size_t c = 0; c < d; ++c) dst[c] += prow[c];
  }
  return out;
}

VisualPrefix Model::encode_scene(const data::Scene& scene) const {
  return encode_slots(prefix_slots(scene, config_));
}

void Model::run_rows(const DecodeState& state, std::vector<Real> x, std::size_t n,
                     bool bidirectional, StepOutput& out) const {
  const std::size_t d = config_.d_model, H = config_.n_heads, dh = d / H;
  const std::size_t L = config_.n_layers, V = config_.vocab_size;
  const std::size_t p0 = state.pos, width = p0 + n;
  if (width > config_.max_seq_len()) {
    throw InvalidArgument("model: sequence longer than " +
                          std::to_string(config_.max_seq_len()) + " positions");
  }
  if (!bidirectional && n != 1) throw InvalidArgument("model: causal rows one at a time");
  const Real inv = Real(1) / std::sqrt(Real(dh));

  out.new_keys.assign(L, std::vector<Real>(n * d));
  out.new_values.assign(L, std::vector<Real>(n * d));
  out.attention.assign(L * H * n * width, Real(0));

  std::vector<Real> a(n * d), qkv(n * 3 * d), ctx(n * d), hid(n * 4 * d), tmp(n * d);
  std::vector<Real> scores(width);
  for (std::size_t l = 0; l < L; ++l) {
    const LayerIdx& li = layers_[l];
    for (std::size_t r = 0; r < n; ++r) {
      kernels::layer_norm_row(x.data() + r * d, p(li.ln1_g).data(), p(li.ln1_b).data(),
                              a.data() + r * d, nullptr, d);
    }
    kernels::matmul(a.data(), p(li.w_qkv).data(), qkv.data(), n, d, 3 * d);
    for (std::size_t r = 0; r < n; ++r) {
      Real* row = qkv.data() + r * 3 * d;
      for (std::size_t c = 0; c < 3 * d; ++c) row[c] += p(li.b_qkv)[c];
      std::memcpy(out.new_keys[l].data() + r * d, row + d, d * sizeof(Real));
      std::memcpy(out.new_values[l].data() + r * d, row + 2 * d, d * sizeof(Real));
    }
    auto key = [&](std::size_t j) -> const Real* {
      return j < p0 ? state.keys[l].data() + j * d : out.new_keys[l].data() + (j - p0) * d;
    };
    auto value = [&](std::size_t j) -> const Real* {
      return j < p0 ? state.values[l].data() + j * d
                    : out.new_values[l].data() + (j - p0) * d;
    };
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t keys = bidirectional ? width : p0 + r + 1;
      for (std::size_t h = 0; h < H; ++h) {
        const Real* q = qkv.data() + r * 3 * d + h * dh;
        for (std::size_t j = 0; j < keys; ++j) {
          scores[j] = kernels::dot(q, key(j) + h * dh, dh) * inv;
        }
        kernels::softmax_row(scores.data(), keys);
        Real* prob = out.attention.data() + ((l * H + h) * n + r) * width;
        std::copy(scores.begin(), scores.begin() + std::ptrdiff_t(keys), prob);
        Real* c = ctx.data() + r * d + h * dh;
        std::fill(c, c + dh, Real(0));
        for (std::size_t j = 0; j < keys; ++j) {
          const Real w = scores[j];
          const Real* v = value(j) + h * dh;
          for (std::size_t k = 0; k < dh; ++k) c[k] += w * v[k];
        }
      }
    }
    kernels::matmul(ctx.data(), p(li.w_o).data(), tmp.data(), n, d, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) x[r * d + c] += tmp[r * d + c] + p(li.b_o)[c];
    }
    for (std::size_t r = 0; r < n; ++r) {
      kernels::layer_norm_row(x.data() + r * d, p(li.ln2_g).data(), p(li.ln2_b).data(),
                              a.data() + r * d, nullptr, d);
    }
    kernels::matmul(a.data(), p(li.w_fc).data(), hid.data(), n, d, 4 * d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < 4 * d; ++c) {
        Real& v = hid[r * 4 * d + c];
        v = kernels::gelu(v + p(li.b_fc)[c]);
      }
    }
    kernels::matmul(hid.data(), p(li.w_proj).data(), tmp.data(), n, 4 * d, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) x[r * d + c] += tmp[r * d + c] + p(li.b_proj)[c];
    }
  }
  // logits of the last row only
  const Real* last = x.data() + (n - 1) * d;
  kernels::layer_norm_row(last, p(lnf_g_).data(), p(lnf_b_).data(), a.data(), nullptr, d);
  out.logits.assign(V, Real(0));
  kernels::matmul(a.data(), p(w_out_).data(), out.logits.data(), 1, d, V);
  for (std::size_t c = 0; c < V; ++c) out.logits[c] += p(b_out_)[c];
}

DecodeState Model::start(const VisualPrefix& prefix) const {
  const std::size_t l = config_.prefix_len, d = config_.d_model;
  if (prefix.embeddings.shape() != Shape{l, d}) {
    throw ShapeError("model: prefix must be " + shape_str({l, d}) + ", got " +
                     shape_str(prefix.embeddings.shape()));
  }
  DecodeState st;
  st.keys.assign(config_.n_layers, std::vector<Real>(config_.max_seq_len() * d));
  st.values.assign(config_.n_layers, std::vector<Real>(config_.max_seq_len() * d));
  StepOutput out;
  std::vector<Real> x(prefix.embeddings.values().begin(), prefix.embeddings.values().end());
  run_rows(st, std::move(x), l, true, out);
  commit(st, out);
  return st;
}

StepOutput Model::peek(const DecodeState& state, int token) const {
  check_token(token);
  const std::size_t d = config_.d_model;
  if (state.pos >= config_.max_seq_len()) {
    throw InvalidArgument("model: text longer than max_text_len");
  }
  std::vector<Real> x(d);
  const Real* t = p(tok_emb_).data() + std::size_t(token) * d;
  const Real* ps = p(pos_emb_).data() + state.pos * d;
  for (std::size_t c = 0; c < d; ++c) x[c] = t[c] + ps[c];
  StepOutput out;
  run_rows(state, std::move(x), 1, false, out);
  return out;
}

void Model::commit(DecodeState& state, const StepOutput& out) const {
  const std::size_t d = config_.d_model;
  const std::size_t n = out.new_keys.at(0).size() / d;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    std::copy(out.new_keys[l].begin(), out.new_keys[l].end(),
              state.keys[l].begin() + std::ptrdiff_t(state.pos * d));
    std::copy(out.new_values[l].begin(), out.new_values[l].end(),
              state.values[l].begin() + std::ptrdiff_t(state.pos * d));
  }
  state.pos += n;
}

StepOutput Model::step(DecodeState& state, int token) const {
  StepOutput out = peek(state, token);
  commit(state, out);
  return out;
}

ForwardOutput Model::forward(const VisualPrefix& prefix, std::span<const int> tokens) const {
  if (tokens.size() > config_.max_text_len) {
    throw InvalidArgument("model: " + std::to_string(tokens.size()) +
                          " tokens exceed max_text_len " +
                          std::to_string(config_.max_text_len));
  }
  for (int t : tokens) check_token(t);
  const std::size_t l = config_.prefix_len, S = l + tokens.size();
  const std::size_t L = config_.n_layers, H = config_.n_heads, V = config_.vocab_size;
  ForwardOutput fo;
  fo.logits = Tensor({tokens.size(), V});
  fo.attention.seq_len = S;
  fo.attention.layers.assign(L, Tensor({H, S, S}));

  const std::size_t d = config_.d_model;
  DecodeState st;
  st.keys.assign(L, std::vector<Real>(config_.max_seq_len() * d));
  st.values.assign(L, std::vector<Real>(config_.max_seq_len() * d));
  StepOutput pre;
  std::vector<Real> x(prefix.embeddings.values().begin(), prefix.embeddings.values().end());
  if (prefix.embeddings.shape() != Shape{l, d}) {
    throw ShapeError("model: prefix must be " + shape_str({l, d}));
  }
  run_rows(st, std::move(x), l, true, pre);
  commit(st, pre);
  for (std::size_t ly = 0; ly < L; ++ly) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < l; ++i) {
        const Real* src = pre.attention.data() + ((ly * H + h) * l + i) * l;
        Real* dst = fo.attention.layers[ly].data() + (h * S + i) * S;
        std::copy(src, src + l, dst);
      }
    }
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    StepOutput so = step(st, tokens[t]);
    std::copy(so.logits.begin(), so.logits.end(), fo.logits.data() + t * V);
    const std::size_t w = l + t + 1;
    for (std::size_t ly = 0; ly < L; ++ly) {
      for (std::size_t h = 0; h < H; ++h) {
        const Real* src = so.attention.data() + (ly * H + h) * w;
        Real* dst = fo.attention.layers[ly].data() + (h * S + l + t) * S;
        std::copy(src, src + w, dst);
      }
    }
  }
  return fo;
}

GraphForward Model::build(Graph& g, const TokenBatch& batch, bool keep_attention) const {
  const std::size_t B = batch.size(), T = batch.text_len(), l = config_.prefix_len;
  const std::size_t S = l + T;
  if (B == 0 || T == 0) throw InvalidArgument("model: empty batch");
  if (batch.prefixes.size() != B || batch.targets.size() != B) {
    throw ShapeError("model: batch fields have different item counts");
  }
  if (T > config_.max_text_len) {
    throw InvalidArgument("model: batch text length " + std::to_string(T) +
                          " exceeds max_text_len");
  }
  GraphForward gf;
  gf.batch = B;
  gf.text_len = T;
  for (const auto& t : params_) gf.params.push_back(g.parameter(t));
  auto P = [&](std::size_t i) { return gf.params[i]; };

  std::vector<int> obj_ids, attr_ids, tok_ids, pos_ids;
  std::vector<std::size_t> valid;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = batch.prefixes[b];
    if (s.objects.size() != l || s.attributes.size() != l) {
      throw ShapeError("model: prefix slots must have length " + std::to_string(l));
    }
    obj_ids.insert(obj_ids.end(), s.objects.begin(), s.objects.end());
    attr_ids.insert(attr_ids.end(), s.attributes.begin(), s.attributes.end());
    const auto& in = batch.inputs[b];
    if (batch.targets[b].size() != in.size()) {
      throw ShapeError("model: targets and inputs differ in length for item " +
                       std::to_string(b));
    }
    for (std::size_t j = 0; j < T; ++j) {
      if (j < in.size()) check_token(in[j]);
      tok_ids.push_back(j < in.size() ? in[j] : -1);
    }
    for (std::size_t s2 = 0; s2 < S; ++s2) pos_ids.push_back(int(s2));
    valid.push_back(l + in.size());
  }
  Var prefix = ops::add(g, ops::embedding(g, P(obj_emb_), obj_ids),
                        ops::embedding(g, P(attr_emb_), attr_ids));
  Var text = ops::embedding(g, P(tok_emb_), tok_ids);
  std::vector<Var> parts;
  for (std::size_t b = 0; b < B; ++b) {
    parts.push_back(ops::slice_rows(g, prefix, b * l, (b + 1) * l));
    parts.push_back(ops::slice_rows(g, text, b * T, (b + 1) * T));
  }
  Var x = ops::add(g, ops::concat(g, parts),
                   ops::embedding(g, P(pos_emb_), pos_ids));

  ops::AttentionLayout layout;
  layout.batch = B;
  layout.seq_len = S;
  layout.n_heads = config_.n_heads;
  layout.prefix_len = l;
  layout.valid_len = valid;
  for (const LayerIdx& li : layers_) {
    Var a = ops::layer_norm(g, x, P(li.ln1_g), P(li.ln1_b));
    Var qkv = ops::add(g, ops::matmul(g, a, P(li.w_qkv)), P(li.b_qkv));
    std::shared_ptr<Tensor> probs = keep_attention ? std::make_shared<Tensor>() : nullptr;
    if (probs) gf.attention.push_back(probs);
    Var att = ops::attention(g, qkv, layout, probs);
    x = ops::add(g, x, ops::add(g, ops::matmul(g, att, P(li.w_o)), P(li.b_o)));
    Var m = ops::layer_norm(g, x, P(li.ln2_g), P(li.ln2_b));
    Var h = ops::gelu(g, ops::add(g, ops::matmul(g, m, P(li.w_fc)), P(li.b_fc)));
    x = ops::add(g, x, ops::add(g, ops::matmul(g, h, P(li.w_proj)), P(li.b_proj)));
  }
  std::vector<Var> text_rows;
  for (std::size_t b = 0; b < B; ++b) {
    text_rows.push_back(ops::slice_rows(g, x, b * S + l, (b + 1) * S));
  }
  Var xt = B == 1 ? text_rows[0] : ops::concat(g, text_rows);
  Var hf = ops::layer_norm(g, xt, P(lnf_g_), P(lnf_b_));
  gf.logits = ops::add(g, ops::matmul(g, hf, P(w_out_)), P(b_out_));
  return gf;
}

void Model::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> out;
  const ModelConfig& c = config_;
  Tensor cfg({9});
  const double vals[9] = {double(c.n_layers),     double(c.n_heads),    double(c.d_model),
                          double(c.vocab_size),   double(c.prefix_len), double(c.max_text_len),
                          double(c.n_objects),    double(c.n_attributes), c.init_std};
  for (std::size_t i = 0; i < 9; ++i) cfg[i] = Real(vals[i]);
  out.push_back({"__config__", cfg});
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({names_[i], params_[i]});
  save_checkpoint(path, out);
}

Model Model::load(const std::filesystem::path& path) {
  auto tensors = load_checkpoint(path);
  if (tensors.empty() || tensors[0].name != "__config__" || tensors[0].tensor.size() != 9) {
    throw ParseError("checkpoint " + path.string() + " has no model config", 0);
  }
  const Tensor& c = tensors[0].tensor;
  ModelConfig cfg;
  cfg.n_layers = std::size_t(c[0]);
  cfg.n_heads = std::size_t(c[1]);
  cfg.d_model = std::size_t(c[2]);
  cfg.vocab_size = std::size_t(c[3]);
  cfg.prefix_len = std::size_t(c[4]);
  cfg.max_text_len = std::size_t(c[5]);
  cfg.n_objects = std::size_t(c[6]);
  cfg.n_attributes = std::size_t(c[7]);
  cfg.init_std = double(c[8]);
  Model m(cfg, 0);
  if (tensors.size() != m.params_.size() + 1) {
    throw ParseError("checkpoint " + path.string() + ": expected " +
                         std::to_string(m.params_.size()) + " tensors",
                     0);
  }
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const auto& nt = tensors[i + 1];
    if (nt.name != m.names_[i] || nt.tensor.shape() != m.params_[i].shape()) {
      throw ParseError("checkpoint " + path.string() + ": tensor '" + nt.name +
                           "' does not match '" + m.names_[i] + "' " +
                           shape_str(m.params_[i].shape()),
                       0);
    }
    m.params_[i] = nt.tensor;
  }
  return m;
}

Tensor log_probs(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("log_probs: expected [n, V], got " +
                                           shape_str(logits.shape()));
  Tensor out = logits;
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    kernels::log_softmax_row(out.data() + r * out.dim(1), out.dim(1));
  }
  return out;
}

}  // namespace helpd::model
