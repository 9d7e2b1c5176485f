#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "helpd/model/model.h"
#include "helpd/model/sample.h"
#include "helpd/numerics/grad_check.h"
#include "helpd/numerics/ops.h"

using namespace helpd;
using namespace helpd::model;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.vocab_size = 11;
  c.prefix_len = 4;
  c.max_text_len = 10;
  c.n_objects = 6;
  c.n_attributes = 3;
  c.init_std = 0.3;
  return c;
}

data::Scene scene_of(std::vector<int> objects) {
  data::Scene s;
  for (int o : objects) s.objects.push_back({o, o % 3, 1});
  return s;
}

std::vector<int> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t V) {
  std::uniform_int_distribution<int> d(0, int(V) - 1);
  std::vector<int> t(n);
  for (auto& x : t) x = d(rng);
  return t;
}

// Independent log-sum-exp in long double.
long double ref_log_prob(std::span<const Real> logits, int index) {
  long double m = logits[0];
  for (Real v : logits) m = std::max<long double>(m, v);
  long double s = 0;
  for (Real v : logits) s += std::exp((long double)v - m);
  return (long double)logits[std::size_t(index)] - m - std::log(s);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  c.d_model = 9;
  CHECK_THROWS_AS(Model(c, 1), InvalidArgument);
  c = small_config();
  c.vocab_size = 3;
  CHECK_THROWS_AS(Model(c, 1), InvalidArgument);
  c = small_config();
  c.prefix_len = 0;
  CHECK_THROWS_AS(Model(c, 1), InvalidArgument);
}

TEST_CASE("encode_scene: determinism, truncation, blank rows") {
  const Model m(small_config(), 3);
  const auto s = scene_of({1, 4});
  CHECK(m.encode_scene(s).embeddings == m.encode_scene(s).embeddings);

  // 6 objects with l = 4: the 4 lowest ids are kept.
  const auto slots = prefix_slots(scene_of({5, 0, 3, 2, 4, 1}), m.config());
  CHECK(slots.objects == std::vector<int>{0, 1, 2, 3});

  const auto empty = prefix_slots(data::Scene{}, m.config());
  CHECK(empty.objects == std::vector<int>(4, 6));
  const auto pe = m.encode_slots(empty).embeddings;
  const auto& obj = m.parameters()[2];  // obj_emb
  const auto& pos = m.parameters()[1];  // pos_emb
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(pe.at(i, c) == obj.at(6, c) + pos.at(i, c));
    }
  }
  CHECK(m.parameter_names()[2] == "obj_emb");
}

TEST_CASE("forward: shapes, stochastic rows, causality") {
  const Model m(small_config(), 5);
  std::mt19937_64 rng(9);
  const auto prefix = m.encode_scene(scene_of({0, 2, 5}));
  const auto toks = random_tokens(rng, 6, 11);
  const auto out = m.forward(prefix, toks);
  CHECK(out.logits.shape() == Shape{6, 11});
  const std::size_t S = 4 + 6;
  REQUIRE(out.attention.seq_len == S);
  REQUIRE(out.attention.n_layers() == 2);
  REQUIRE(out.attention.n_heads() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < S; ++i) {
        Real sum = 0;
        for (std::size_t j = 0; j < S; ++j) {
          const Real a = out.attention.at(l, h, i, j);
          CHECK(a >= 0);
          sum += a;
          if (i >= 4 && j > i) CHECK(a == 0);  // text is causal
          if (i < 4 && j >= 4) CHECK(a == 0);  // prefix never sees text
          if (i < 4 && j < 4) CHECK(a > 0);    // prefix is bidirectional
          if (i >= 4 && j < 4) CHECK(a > 0);   // text sees the whole prefix
        }
        CHECK(std::abs(sum - 1) < 1e-9);
      }
    }
  }
  CHECK(out.attention.at(0, 0, 4, 5) == 0);  // text position 0 -> 1

  // Perturbing token j never changes logits at positions < j.
  for (std::size_t j = 0; j < toks.size(); ++j) {
    auto pert = toks;
    pert[j] = (pert[j] + 1) % 11;
    const auto po = m.forward(prefix, pert);
    for (std::size_t r = 0; r < j; ++r) {
      for (std::size_t c = 0; c < 11; ++c) CHECK(po.logits.at(r, c) == out.logits.at(r, c));
    }
    bool changed = false;
    for (std::size_t c = 0; c < 11; ++c) changed |= po.logits.at(j, c) != out.logits.at(j, c);
    CHECK(changed);
  }
  const auto again = m.forward(prefix, toks);
  CHECK(again.logits == out.logits);
}

TEST_CASE("forward rejects bad input") {
  const Model m(small_config(), 5);
  const auto prefix = m.encode_scene(scene_of({1}));
  std::vector<int> bad{1, 11};
  CHECK_THROWS_AS(m.forward(prefix, bad), InvalidArgument);
  std::vector<int> neg{-1};
  CHECK_THROWS_AS(m.forward(prefix, neg), InvalidArgument);
  std::vector<int> longer(11, 1);
  CHECK_THROWS_AS(m.forward(prefix, longer), InvalidArgument);
  CHECK_THROWS_AS(m.encode_scene(scene_of({6})), InvalidArgument);
}

TEST_CASE("log_probs examples") {
  auto lp = log_probs(Tensor({1, 4}));
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(lp[c] - std::log(0.25)) < 1e-15);
  auto two = log_probs(Tensor({1, 2}, {0.0, std::log(3.0)}));
  CHECK(std::abs(two[0] - std::log(0.25)) < 1e-12);
  CHECK(std::abs(two[1] - std::log(0.75)) < 1e-12);
  Tensor x({2, 5}, {0.3, -1, 2, 0.1, 4, 1, 1, 1, 2, 3});
  Tensor y = x;
  for (std::size_t c = 0; c < 5; ++c) y[c] += 17.5;
  const auto a = log_probs(x), b = log_probs(y);
  for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
  for (std::size_t r = 0; r < 2; ++r) {
    long double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += std::exp((long double)a.at(r, c));
    CHECK(std::abs(double(s) - 1) < 1e-12);
  }
}

TEST_CASE("graph forward matches the incremental forward") {
  const Model m(small_config(), 7);
  std::mt19937_64 rng(2);
  TokenBatch batch;
  const std::vector<std::vector<int>> scenes{{0, 1}, {3}, {}};
  for (std::size_t b = 0; b < 3; ++b) {
    batch.prefixes.push_back(prefix_slots(scene_of(scenes[b]), m.config()));
    batch.inputs.push_back(random_tokens(rng, 3 + 2 * b, 11));
    batch.targets.push_back(std::vector<int>(batch.inputs.back().size(), -1));
  }
  Graph g;
  const auto gf = m.build(g, batch, true);
  const Tensor& logits = g.value(gf.logits);
  const std::size_t T = batch.text_len();
  REQUIRE(logits.shape() == Shape{3 * T, 11});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto ref = m.forward(m.encode_slots(batch.prefixes[b]), batch.inputs[b]);
    for (std::size_t j = 0; j < batch.inputs[b].size(); ++j) {
      for (std::size_t c = 0; c < 11; ++c) {
        CHECK(std::abs(logits.at(b * T + j, c) - ref.logits.at(j, c)) < 1e-9);
      }
    }
    // attention of the graph pass agrees too
    const std::size_t S = 4 + T, Sb = ref.attention.seq_len;
    const Tensor& probs = *gf.attention[1];
    for (std::size_t i = 0; i < Sb; ++i) {
      for (std::size_t j = 0; j < Sb; ++j) {
        const Real a = probs[((b * 2 + 1) * S + i) * S + j];
        CHECK(std::abs(a - ref.attention.at(1, 1, i, j)) < 1e-9);
      }
    }
  }
}

TEST_CASE("two-layer model loss passes the gradient check") {
  ModelConfig c = small_config();
  const Model m(c, 11);
  std::mt19937_64 rng(4);
  TokenBatch batch;
  for (std::size_t b = 0; b < 2; ++b) {
    batch.prefixes.push_back(prefix_slots(scene_of({int(b), 4}), c));
    batch.inputs.push_back(random_tokens(rng, 4 + b, c.vocab_size));
    auto tg = random_tokens(rng, 4 + b, c.vocab_size);
    tg[0] = -1;
    batch.targets.push_back(tg);
  }
  Graph g;
  const auto gf = m.build(g, batch);
  std::vector<int> targets;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < batch.text_len(); ++j) {
      targets.push_back(j < batch.targets[b].size() ? batch.targets[b][j] : -1);
    }
  }
  Var loss = ops::cross_entropy(g, gf.logits, targets);
  g.backward(loss);
  const auto report = grad_check(g, loss, gf.params, m.parameter_names());
  INFO("worst " << report.worst << " " << report.max_rel_error);
  CHECK(report.passed());
  CHECK(report.parameters.size() == m.parameters().size());
}

TEST_CASE("sample_batch: log-probs by construction, greedy, determinism") {
  const Model m(small_config(), 13);
  std::mt19937_64 rng(6);
  TokenBatch batch;
  for (std::size_t b = 0; b < 3; ++b) {
    batch.prefixes.push_back(prefix_slots(scene_of({int(b)}), m.config()));
    batch.inputs.push_back(random_tokens(rng, 5, 11));
    std::vector<int> tg = random_tokens(rng, 5, 11);
    tg[0] = -1;
    batch.targets.push_back(tg);
  }
  SampleOptions opt;
  opt.seed = 99;
  Graph g;
  const auto sb = sample_batch(g, m, batch, opt);
  CHECK(sb.count() == 12);
  const Tensor& logits = g.value(sb.forward.logits);
  const Tensor& lpv = g.value(sb.log_prob_var);
  for (std::size_t b = 0; b < 3; ++b) {
    REQUIRE(sb.actions[b].size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t r = sb.rows[b][k];
      const int a = sb.actions[b][k];
      CHECK(a >= 0);
      CHECK(a < 11);
      CHECK(sb.log_probs[b][k] <= 0);
      CHECK(std::abs(double(sb.log_probs[b][k] - ref_log_prob(logits.row(r), a))) < 1e-12);
      CHECK(lpv[r] == sb.log_probs[b][k]);
    }
  }
  Graph g2;
  const auto sb2 = sample_batch(g2, m, batch, opt);
  CHECK(sb2.actions == sb.actions);

  opt.greedy = true;
  Graph g3;
  const auto gr = sample_batch(g3, m, batch, opt);
  const Tensor& lg = g3.value(gr.forward.logits);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < 4; ++k) {
      const auto row = lg.row(gr.rows[b][k]);
      CHECK(gr.actions[b][k] == int(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  opt.greedy = false;
  opt.temperature = 0;
  Graph g4;
  CHECK_THROWS_AS(sample_batch(g4, m, batch, opt), InvalidArgument);
}

TEST_CASE("rollout sampling rescoring matches the decode path") {
  const Model m(small_config(), 17);
  TokenBatch batch;
  batch.prefixes.push_back(prefix_slots(scene_of({2, 3}), m.config()));
  batch.inputs.push_back({1, 7, 8, 9});
  batch.targets.push_back({-1, 8, 9, 2});
  SampleOptions opt;
  opt.rollout = true;
  opt.seed = 5;
  opt.max_new_tokens = 6;
  Graph g;
  const auto sb = sample_batch(g, m, batch, opt);
  REQUIRE(!sb.actions[0].empty());
  CHECK(sb.actions[0].size() <= 6);
  std::vector<int> seq{1, 7};
  for (std::size_t k = 0; k + 1 < sb.actions[0].size(); ++k) seq.push_back(sb.actions[0][k]);
  const auto ref = m.forward(m.encode_slots(batch.prefixes[0]), seq);
  const auto lp = log_probs(ref.logits);
  for (std::size_t k = 0; k < sb.actions[0].size(); ++k) {
    CHECK(std::abs(sb.log_probs[0][k] - lp.at(1 + k, std::size_t(sb.actions[0][k]))) < 1e-9);
  }
}

TEST_CASE("checkpoint round trip preserves the model") {
  const Model m(small_config(), 21);
  auto path = std::filesystem::temp_directory_path() / "helpd_test_model.ckpt";
  m.save(path);
  const Model back = Model::load(path);
  CHECK(back.parameters() == m.parameters());
  CHECK(back.parameter_names() == m.parameter_names());
  CHECK(back.config().to_json() == m.config().to_json());
  std::vector<int> t{1, 2, 3};
  const auto p = m.encode_scene(scene_of({1}));
  CHECK(back.forward(p, t).logits == m.forward(p, t).logits);
}
