#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpd/numerics/checkpoint.h"
#include "helpd/numerics/grad_check.h"
#include "helpd/numerics/kernels.h"
#include "helpd/numerics/ops.h"
#include "helpd/numerics/optim.h"

using namespace helpd;

namespace {

Tensor random_tensor(Shape shape, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = Real(n(rng));
  return t;
}

// Reduce an arbitrary tensor to a scalar with fixed random weights so every
// output element carries gradient.
Var weighted_sum(Graph& g, Var x, std::mt19937& rng) {
  Var w = g.constant(random_tensor(g.value(x).shape(), rng));
  return ops::sum(g, ops::mul(g, x, w));
}

GradCheckReport check(Graph& g, Var loss, std::vector<Var> leaves) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    labels.push_back("x" + std::to_string(i));
  }
  return grad_check(g, loss, leaves, labels);
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Graph g;
  Var x = g.constant(Tensor::vector({0, 0}));
  const Tensor& y = g.value(ops::softmax(g, x));
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));
}

TEST_CASE("matmul with identity returns the operand") {
  Graph g;
  Var eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(g.value(ops::matmul(g, eye, m)) == Tensor::matrix({{1, 2}, {3, 4}}));
}

TEST_CASE("cross-entropy of uniform logits is ln V") {
  Graph g;
  Var logits = g.constant(Tensor({1, 4}, Real(0.3)));
  for (int target = 0; target < 4; ++target) {
    Var ce = ops::cross_entropy(g, logits, {target});
    CHECK(g.value(ce).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
}

TEST_CASE("shape mismatch names the op and the dimensions") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    ops::matmul(g, a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(g, a, g.constant(Tensor({4}))), ShapeError);
  CHECK_THROWS_AS(ops::layer_norm(g, a, g.constant(Tensor({2})),
                                  g.constant(Tensor({3}))),
                  ShapeError);
}

TEST_CASE("backward: d(x*x)/dx at 3 is 6") {
  Graph g;
  Var x = g.variable(Tensor::scalar(3));
  Var loss = ops::mul(g, x, x);
  g.backward(loss);
  CHECK(g.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: constant loss gives zero gradients") {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2, 3}));
  Var c = g.constant(Tensor::scalar(5));
  Var loss = ops::add(g, ops::scale(g, ops::sum(g, x), 0), c);
  g.backward(loss);
  for (Real v : g.grad(x).values()) CHECK(v == 0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(g.backward(ops::scale(g, x, 2)), ShapeError);
}

TEST_CASE("batch-2 softmax cross-entropy matches central differences") {
  // Independent oracle: perturb each logit and re-evaluate the loss by hand.
  std::mt19937 rng(7);
  const Tensor logits = random_tensor({2, 5}, rng);
  const std::vector<int> targets{1, 4};
  auto loss_of = [&](const Tensor& z) {
    double total = 0;
    for (std::size_t r = 0; r < 2; ++r) {
      double mx = -1e300;
      for (std::size_t c = 0; c < 5; ++c) mx = std::max(mx, double(z.at(r, c)));
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += std::exp(z.at(r, c) - mx);
      total += mx + std::log(s) - z.at(r, std::size_t(targets[r]));
    }
    return total / 2;
  };
  Graph g;
  Var x = g.variable(logits);
  Var loss = ops::cross_entropy(g, x, targets);
  g.backward(loss);
  const double h = 1e-5;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor plus = logits, minus = logits;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (loss_of(plus) - loss_of(minus)) / (2 * h);
    const double an = g.grad(x)[i];
    CHECK(std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12) < 1e-6);
  }
}

TEST_CASE("every differentiable op passes grad_check at 1e-5") {
  std::mt19937 rng(11);
  auto leaf = [&](Graph& g, Shape s, double scale = 1.0) {
    return g.variable(random_tensor(std::move(s), rng, scale));
  };

  SUBCASE("matmul, add (row broadcast), mul, scale") {
    Graph g;
    Var a = leaf(g, {3, 4}), b = leaf(g, {4, 2}), bias = leaf(g, {2});
    Var s = leaf(g, {3, 2});
    Var y = ops::scale(g, ops::mul(g, ops::add(g, ops::matmul(g, a, b), bias), s), 0.7);
    auto r = check(g, weighted_sum(g, y, rng), {a, b, bias, s});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("embedding-gather") {
    Graph g;
    Var table = leaf(g, {5, 3});
    Var y = ops::embedding(g, table, {0, 4, -1, 4, 2});
    auto r = check(g, weighted_sum(g, y, rng), {table});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("softmax, log-softmax") {
    Graph g;
    Var a = leaf(g, {3, 6});
    Var y = ops::add(g, ops::softmax(g, a), ops::log_softmax(g, a));
    auto r = check(g, weighted_sum(g, y, rng), {a});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("layer-norm, gelu") {
    Graph g;
    Var x = leaf(g, {4, 6}), gain = leaf(g, {6}), bias = leaf(g, {6});
    Var y = ops::gelu(g, ops::layer_norm(g, x, gain, bias));
    auto r = check(g, weighted_sum(g, y, rng), {x, gain, bias});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("reshape, concat, slice-rows, mean") {
    Graph g;
    Var a = leaf(g, {2, 6}), b = leaf(g, {3, 4});
    Var ra = ops::reshape(g, a, {3, 4});
    Var c = ops::concat(g, {ra, b});
    Var s = ops::slice_rows(g, c, 1, 5);
    Var y = ops::mean(g, ops::mul(g, s, s));
    auto r = check(g, y, {a, b});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("pick and cross-entropy (sum and mean)") {
    Graph g;
    Var z = leaf(g, {4, 5});
    Var lp = ops::log_softmax(g, z);
    Var picked = ops::sum(g, ops::pick(g, lp, {0, 3, -1, 2}));
    Var ce1 = ops::cross_entropy(g, z, {1, -1, 4, 0}, ops::Reduction::kSum);
    Var ce2 = ops::cross_entropy(g, z, {2, 2, 2, -1});
    Var y = ops::add(g, ops::add(g, picked, ce1), ce2);
    auto r = check(g, y, {z});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
  SUBCASE("prefix-LM attention with padding") {
    Graph g;
    ops::AttentionLayout layout;
    layout.batch = 2;
    layout.seq_len = 5;
    layout.n_heads = 2;
    layout.prefix_len = 2;
    layout.valid_len = {5, 4};
    Var qkv = leaf(g, {10, 12});
    Var y = ops::attention(g, qkv, layout);
    auto r = check(g, weighted_sum(g, y, rng), {qkv});
    CHECK_MESSAGE(r.passed(), r.worst, " ", r.max_rel_error);
  }
}

TEST_CASE("grad_check flags a corrupted gradient rule by op name") {
  Graph g;
  Var x = g.variable(Tensor::vector({0.5, -1.5, 2.0}));
  OpRule bad;
  bad.name = "bad-square";
  bad.forward = [](TensorRefs in) {
    Tensor out = *in[0];
    for (auto& v : out.values()) v = v * v;
    return out;
  };
  bad.backward = [](TensorRefs in, const Tensor&, const Tensor& go,
                    GradRefs gi) {
    // Wrong on purpose: should be 2 * x.
    for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += 3 * (*in[0])[i] * go[i];
  };
  Var y = g.apply(bad, {x});
  Var loss = ops::sum(g, y);
  const std::vector<std::string> labels{"x"};
  const std::vector<Var> leaves{x};
  auto r = grad_check(g, loss, leaves, labels);
  CHECK_FALSE(r.passed());
  bool flagged = false;
  for (const auto& e : r.ops) {
    if (e.name == "bad-square") flagged = e.max_rel_error > 1e-2;
  }
  CHECK(flagged);
}

TEST_CASE("softmax rows are probability vectors; log-softmax agrees") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> dim(1, 12);
    Tensor x = random_tensor({std::size_t(dim(rng)), std::size_t(dim(rng))}, rng, 5.0);
    Graph g;
    Var v = g.constant(x);
    const Tensor& p = g.value(ops::softmax(g, v));
    const Tensor& lp = g.value(ops::log_softmax(g, v));
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < x.dim(1); ++c) {
        s += p.at(r, c);
        CHECK(std::abs(std::exp(lp.at(r, c)) - p.at(r, c)) < 1e-12);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("forward ops are bit-deterministic") {
  std::mt19937 rng(5);
  const Tensor x = random_tensor({6, 8}, rng);
  const Tensor w = random_tensor({8, 8}, rng);
  auto run = [&] {
    Graph g;
    Var y = ops::gelu(g, ops::matmul(g, g.constant(x), g.constant(w)));
    return g.value(ops::softmax(g, y));
  };
  CHECK(run() == run());
}

TEST_CASE("adamw: decay-only update for zero gradient") {
  std::vector<Tensor> params{Tensor::scalar(1)};
  std::vector<Tensor> grads{Tensor::scalar(0)};
  auto state = OptimState::for_parameters(params, {.lr = 1e-4, .weight_decay = 0.1});
  REQUIRE(adamw_step(params, grads, state) == StepStatus::kApplied);
  CHECK(params[0][0] == doctest::Approx(0.99999).epsilon(1e-15));
  CHECK(state.step == 1);
}

TEST_CASE("adamw: lr 0 leaves parameters unchanged") {
  std::mt19937 rng(2);
  std::vector<Tensor> params{random_tensor({3, 3}, rng)};
  const auto before = params;
  std::vector<Tensor> grads{random_tensor({3, 3}, rng)};
  auto state = OptimState::for_parameters(params);
  REQUIRE(adamw_step(params, grads, state, 0.0) == StepStatus::kApplied);
  CHECK(params == before);
}

TEST_CASE("adamw: zero gradient and zero decay is the identity") {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> params{random_tensor({4}, rng), random_tensor({2, 2}, rng)};
    const auto before = params;
    std::vector<Tensor> grads{Tensor({4}), Tensor({2, 2})};
    auto state = OptimState::for_parameters(params, {.lr = 0.01, .weight_decay = 0.0});
    for (int s = 0; s < 3; ++s) REQUIRE(adamw_step(params, grads, state) == StepStatus::kApplied);
    CHECK(params == before);
  }
}

TEST_CASE("adamw: identical state and inputs give identical outputs") {
  std::mt19937 rng(4);
  std::vector<Tensor> p1{random_tensor({5}, rng)};
  std::vector<Tensor> g1{random_tensor({5}, rng)};
  auto s1 = OptimState::for_parameters(p1);
  auto p2 = p1;
  auto s2 = s1;
  REQUIRE(adamw_step(p1, g1, s1) == StepStatus::kApplied);
  REQUIRE(adamw_step(p2, g1, s2) == StepStatus::kApplied);
  CHECK(p1 == p2);
  CHECK(s1.first_moment == s2.first_moment);
  CHECK(s1.second_moment == s2.second_moment);
}

TEST_CASE("adamw: NaN gradient refuses the step") {
  std::vector<Tensor> params{Tensor::vector({1, 2})};
  std::vector<Tensor> grads{Tensor::vector({0.5, std::nan("")})};
  auto state = OptimState::for_parameters(params);
  const auto before = params;
  CHECK(adamw_step(params, grads, state) == StepStatus::kRefusedNonFinite);
  CHECK(params == before);
  CHECK(state.step == 0);
  CHECK(state.first_moment[0] == Tensor({2}));
}

TEST_CASE("lr schedule: warmup then cosine") {
  LrSchedule s{.peak_lr = 1e-4, .warmup_ratio = 0.03, .total_steps = 1000};
  REQUIRE(s.warmup_steps() == 30);
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(15, s) == doctest::Approx(0.5e-4));
  CHECK(lr_at(30, s) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(1000, s) == doctest::Approx(0.0).epsilon(1e-20));
  // Cosine half period: midpoint of [30, 1000] is 515.
  CHECK(lr_at(515, s) == doctest::Approx(0.5e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, s), InvalidArgument);
  CHECK_THROWS_AS(lr_at(1001, s), InvalidArgument);
  CHECK_THROWS_AS(lr_at(0, LrSchedule{.peak_lr = 0}), InvalidArgument);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937 rng(8);
  std::vector<NamedTensor> tensors{{"tok_emb", random_tensor({7, 3}, rng)},
                                   {"scalar", Tensor::scalar(2.5)},
                                   {"vec", random_tensor({4}, rng)}};
  const auto path = std::filesystem::temp_directory_path() / "helpd_ckpt_test.bin";
  save_checkpoint(path, tensors);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].name == tensors[i].name);
    CHECK(loaded[i].tensor == tensors[i].tensor);
  }
  // Header layout: magic, dtype code, count.
  std::ifstream is(path, std::ios::binary);
  char head[11];
  is.read(head, 11);
  CHECK(std::string(head, 6) == "HELPD1");
  CHECK(std::uint8_t(head[6]) == kDtypeCode);
  CHECK(std::uint8_t(head[7]) == 3);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects a foreign file") {
  const auto path = std::filesystem::temp_directory_path() / "helpd_not_ckpt.bin";
  {
    std::ofstream os(path);
    os << "NOTAHELPDFILE";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}
