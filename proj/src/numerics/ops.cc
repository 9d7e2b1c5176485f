#include "helpd/numerics/ops.h"

#include <cmath>
#include <cstring>

#include "helpd/numerics/kernels.h"

namespace helpd::ops {
namespace {

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank,
                  const char* which) {
  if (t.rank() != rank) {
    shape_fail(op, std::string(which) + " must be rank " +
                       std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const std::string& op, const Tensor& a,
                         const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    return Broadcast::kRow;
  }
  shape_fail(op, "cannot broadcast " + shape_str(b.shape()) + " onto " +
                     shape_str(a.shape()));
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require_rank("matmul", ta, 2, "lhs");
  require_rank("matmul", tb, 2, "rhs");
  if (ta.dim(1) != tb.dim(0)) {
    shape_fail("matmul", "inner dimensions differ: " + shape_str(ta.shape()) +
                             " x " + shape_str(tb.shape()));
  }
  OpRule rule;
  rule.name = "matmul";
  rule.forward = [](TensorRefs in) {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    Tensor out({x.dim(0), w.dim(1)});
    kernels::matmul(x.data(), w.data(), out.data(), x.dim(0), x.dim(1),
                    w.dim(1));
    return out;
  };
  rule.backward = [](TensorRefs in, const Tensor&, const Tensor& go,
                     GradRefs gi) {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
    if (gi[0]) kernels::matmul_nt(go.data(), w.data(), gi[0]->data(), m, n, k, true);
    if (gi[1]) kernels::matmul_tn(x.data(), go.data(), gi[1]->data(), k, m, n, true);
  };
  return g.apply(std::move(rule), {a, b});
}

namespace {

Var binary(Graph& g, Var a, Var b, bool multiply) {
  const std::string name = multiply ? "mul" : "add";
  const Broadcast kind = broadcast_kind(name, g.value(a), g.value(b));
  OpRule rule;
  rule.name = name;
  rule.forward = [kind, multiply](TensorRefs in) {
    const Tensor& x = *in[0];
    const Tensor& y = *in[1];
    Tensor out = x;
    Real* o = out.data();
    const Real* yv = y.data();
    const std::size_t n = x.size();
    const std::size_t w = kind == Broadcast::kRow ? y.size() : 1;
    for (std::size_t i = 0; i < n; ++i) {
      const Real rhs = kind == Broadcast::kSame   ? yv[i]
                       : kind == Broadcast::kRow ? yv[i % w]
                                                 : yv[0];
      o[i] = multiply ? o[i] * rhs : o[i] + rhs;
    }
    return out;
  };
  rule.backward = [kind, multiply](TensorRefs in, const Tensor&,
                                   const Tensor& go, GradRefs gi) {
    const Tensor& x = *in[0];
    const Tensor& y = *in[1];
    const std::size_t n = x.size();
    const std::size_t w = kind == Broadcast::kRow ? y.size() : 1;
    auto yi = [&](std::size_t i) -> std::size_t {
      return kind == Broadcast::kSame ? i : kind == Broadcast::kRow ? i % w : 0;
    };
    if (gi[0]) {
      Real* d = gi[0]->data();
      for (std::size_t i = 0; i < n; ++i) {
        d[i] += multiply ? go[i] * y[yi(i)] : go[i];
      }
    }
    if (gi[1]) {
      Real* d = gi[1]->data();
      for (std::size_t i = 0; i < n; ++i) {
        d[yi(i)] += multiply ? go[i] * x[i] : go[i];
      }
    }
  };
  return g.apply(std::move(rule), {a, b});
}

}  // namespace

Var add(Graph& g, Var a, Var b) { return binary(g, a, b, false); }
Var mul(Graph& g, Var a, Var b) { return binary(g, a, b, true); }

Var scale(Graph& g, Var a, Real c) {
  OpRule rule;
  rule.name = "scale";
  rule.forward = [c](TensorRefs in) {
    Tensor out = *in[0];
    for (auto& v : out.values()) v *= c;
    return out;
  };
  rule.backward = [c](TensorRefs, const Tensor&, const Tensor& go,
                      GradRefs gi) {
    if (!gi[0]) return;
    Real* d = gi[0]->data();
    for (std::size_t i = 0; i < go.size(); ++i) d[i] += c * go[i];
  };
  return g.apply(std::move(rule), {a});
}

Var embedding(Graph& g, Var table, std::vector<int> ids) {
  const Tensor& t = g.value(table);
  require_rank("embedding-gather", t, 2, "table");
  for (int id : ids) {
    if (id >= static_cast<int>(t.dim(0))) {
      shape_fail("embedding-gather", "id " + std::to_string(id) +
                                         " out of range for table " +
                                         shape_str(t.shape()));
    }
  }
  OpRule rule;
  rule.name = "embedding-gather";
  auto shared_ids = std::make_shared<const std::vector<int>>(std::move(ids));
  rule.forward = [shared_ids](TensorRefs in) {
    const Tensor& tab = *in[0];
    const std::size_t d = tab.dim(1);
    Tensor out({shared_ids->size(), d});
    for (std::size_t r = 0; r < shared_ids->size(); ++r) {
      const int id = (*shared_ids)[r];
      if (id < 0) continue;
      std::memcpy(out.data() + r * d, tab.data() + std::size_t(id) * d,
                  d * sizeof(Real));
    }
    return out;
  };
  rule.backward = [shared_ids](TensorRefs in, const Tensor&, const Tensor& go,
                               GradRefs gi) {
    if (!gi[0]) return;
    const std::size_t d = in[0]->dim(1);
    Real* dt = gi[0]->data();
    for (std::size_t r = 0; r < shared_ids->size(); ++r) {
      const int id = (*shared_ids)[r];
      if (id < 0) continue;
      Real* dst = dt + std::size_t(id) * d;
      const Real* src = go.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  };
  return g.apply(std::move(rule), {table});
}

Var softmax(Graph& g, Var a) {
  if (g.value(a).rank() == 0) shape_fail("softmax", "needs rank >= 1");
  OpRule rule;
  rule.name = "softmax";
  rule.forward = [](TensorRefs in) {
    Tensor out = *in[0];
    const std::size_t n = out.shape().back();
    for (std::size_t r = 0; r < out.size() / n; ++r) {
      kernels::softmax_row(out.data() + r * n, n);
    }
    return out;
  };
  rule.backward = [](TensorRefs, const Tensor& out, const Tensor& go,
                     GradRefs gi) {
    if (!gi[0]) return;
    const std::size_t n = out.shape().back();
    for (std::size_t r = 0; r < out.size() / n; ++r) {
      const Real* p = out.data() + r * n;
      const Real* gr = go.data() + r * n;
      const Real s = kernels::dot(p, gr, n);
      Real* d = gi[0]->data() + r * n;
      for (std::size_t i = 0; i < n; ++i) d[i] += p[i] * (gr[i] - s);
    }
  };
  return g.apply(std::move(rule), {a});
}

Var log_softmax(Graph& g, Var a) {
  if (g.value(a).rank() == 0) shape_fail("log-softmax", "needs rank >= 1");
  OpRule rule;
  rule.name = "log-softmax";
  rule.forward = [](TensorRefs in) {
    Tensor out = *in[0];
    const std::size_t n = out.shape().back();
    for (std::size_t r = 0; r < out.size() / n; ++r) {
      kernels::log_softmax_row(out.data() + r * n, n);
    }
    return out;
  };
  rule.backward = [](TensorRefs, const Tensor& out, const Tensor& go,
                     GradRefs gi) {
    if (!gi[0]) return;
    const std::size_t n = out.shape().back();
    for (std::size_t r = 0; r < out.size() / n; ++r) {
      const Real* lp = out.data() + r * n;
      const Real* gr = go.data() + r * n;
      Real s = 0;
      for (std::size_t i = 0; i < n; ++i) s += gr[i];
      Real* d = gi[0]->data() + r * n;
      for (std::size_t i = 0; i < n; ++i) d[i] += gr[i] - std::exp(lp[i]) * s;
    }
  };
  return g.apply(std::move(rule), {a});
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias) {
  const Tensor& tx = g.value(x);
  require_rank("layer-norm", tx, 2, "input");
  const std::size_t n = tx.dim(1);
  for (Var p : {gain, bias}) {
    const Tensor& t = g.value(p);
    if (t.rank() != 1 || t.dim(0) != n) {
      shape_fail("layer-norm", "affine parameter " + shape_str(t.shape()) +
                                   " does not match width " + std::to_string(n));
    }
  }
  OpRule rule;
  rule.name = "layer-norm";
  rule.forward = [](TensorRefs in) {
    const Tensor& xi = *in[0];
    const std::size_t m = xi.dim(0), w = xi.dim(1);
    Tensor out({m, w});
    for (std::size_t r = 0; r < m; ++r) {
      kernels::layer_norm_row(xi.data() + r * w, in[1]->data(), in[2]->data(),
                              out.data() + r * w, nullptr, w);
    }
    return out;
  };
  rule.backward = [](TensorRefs in, const Tensor&, const Tensor& go,
                     GradRefs gi) {
    const Tensor& xi = *in[0];
    const Real* gain_v = in[1]->data();
    const std::size_t m = xi.dim(0), w = xi.dim(1);
    std::vector<Real> xhat(w), y(w), dxhat(w);
    std::vector<Real> zeros(w, Real(0)), ones(w, Real(1));
    for (std::size_t r = 0; r < m; ++r) {
      const Real rstd = kernels::layer_norm_row(
          xi.data() + r * w, ones.data(), zeros.data(), y.data(), xhat.data(), w);
      const Real* gr = go.data() + r * w;
      if (gi[1]) {
        for (std::size_t i = 0; i < w; ++i) (*gi[1])[i] += gr[i] * xhat[i];
      }
      if (gi[2]) {
        for (std::size_t i = 0; i < w; ++i) (*gi[2])[i] += gr[i];
      }
      if (gi[0]) {
        Real mean_d = 0, mean_dx = 0;
        for (std::size_t i = 0; i < w; ++i) {
          dxhat[i] = gr[i] * gain_v[i];
          mean_d += dxhat[i];
          mean_dx += dxhat[i] * xhat[i];
        }
        mean_d /= Real(w);
        mean_dx /= Real(w);
        Real* d = gi[0]->data() + r * w;
        for (std::size_t i = 0; i < w; ++i) {
          d[i] += rstd * (dxhat[i] - mean_d - xhat[i] * mean_dx);
        }
      }
    }
  };
  return g.apply(std::move(rule), {x, gain, bias});
}

Var gelu(Graph& g, Var a) {
  OpRule rule;
  rule.name = "gelu";
  rule.forward = [](TensorRefs in) {
    Tensor out = *in[0];
    for (auto& v : out.values()) v = kernels::gelu(v);
    return out;
  };
  rule.backward = [](TensorRefs in, const Tensor&, const Tensor& go,
                     GradRefs gi) {
    if (!gi[0]) return;
    const Tensor& x = *in[0];
    Real* d = gi[0]->data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      d[i] += go[i] * kernels::gelu_grad(x[i]);
    }
  };
  return g.apply(std::move(rule), {a});
}

Var reshape(Graph& g, Var a, Shape shape) {
  const Tensor& t = g.value(a);
  if (shape_numel(shape) != t.size()) {
    shape_fail("reshape", "cannot view " + shape_str(t.shape()) + " as " +
                              shape_str(shape));
  }
  OpRule rule;
  rule.name = "reshape";
  rule.forward = [shape](TensorRefs in) { return in[0]->reshaped(shape); };
  rule.backward = [](TensorRefs, const Tensor&, const Tensor& go,
                     GradRefs gi) {
    if (!gi[0]) return;
    Real* d = gi[0]->data();
    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
  };
  return g.apply(std::move(rule), {a});
}

Var concat(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const std::size_t cols = g.value(parts[0]).shape().back();
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    if (t.rank() != 2 || t.dim(1) != cols) {
      shape_fail("concat", "part " + shape_str(t.shape()) +
                               " does not have " + std::to_string(cols) +
                               " columns");
    }
  }
  OpRule rule;
  rule.name = "concat";
  rule.forward = [](TensorRefs in) {
    std::size_t rows = 0;
    for (auto* t : in) rows += t->dim(0);
    const std::size_t c = in[0]->dim(1);
    Tensor out({rows, c});
    Real* o = out.data();
    for (auto* t : in) {
      std::memcpy(o, t->data(), t->size() * sizeof(Real));
      o += t->size();
    }
    return out;
  };
  rule.backward = [](TensorRefs in, const Tensor&, const Tensor& go,
                     GradRefs gi) {
    const Real* src = go.data();
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t n = in[k]->size();
      if (gi[k]) {
        Real* d = gi[k]->data();
        for (std::size_t i = 0; i < n; ++i) d[i] += src[i];
      }
      src += n;
    }
  };
  return g.apply(std::move(rule), parts);
}

Var slice_rows(Graph& g, Var a, std::size_t begin, std::size_t end) {
  const Tensor& t = g.value(a);
  require_rank("slice-rows", t, 2, "input");
  if (begin > end || end > t.dim(0)) {
    shape_fail("slice-rows", "range [" + std::to_string(begin) + "," +
                                 std::to_string(end) + ") outside " +
                                 shape_str(t.shape()));
  }
  OpRule rule;
  rule.name = "slice-rows";
  rule.forward = [begin, end](TensorRefs in) {
    const std::size_t c = in[0]->dim(1);
    Tensor out({end - begin, c});
    std::memcpy(out.data(), in[0]->data() + begin * c,
                out.size() * sizeof(Real));
    return out;
  };
  rule.backward = [begin](TensorRefs in, const Tensor&, const Tensor& go,
                          GradRefs gi) {
    if (!gi[0]) return;
    Real* d = gi[0]->data() + begin * in[0]->dim(1);
    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
  };
  return g.apply(std::move(rule), {a});
}

namespace {

Var reduce(Graph& g, Var a, bool average) {
  const std::string name = average ? "mean" : "sum";
  if (average && g.value(a).size() == 0) shape_fail(name, "empty input");
  OpRule rule;
  rule.name = name;
  rule.forward = [average](TensorRefs in) {
    Real s = 0;
    for (Real v : in[0]->values()) s += v;
    if (average) s /= Real(in[0]->size());
    return Tensor::scalar(s);
  };
  rule.backward = [average](TensorRefs in, const Tensor&, const Tensor& go,
                            GradRefs gi) {
    if (!gi[0]) return;
    const Real gv = average ? go[0] / Real(in[0]->size()) : go[0];
    for (auto& d : gi[0]->values()) d += gv;
  };
  return g.apply(std::move(rule), {a});
}

}  // namespace

Var mean(Graph& g, Var a) { return reduce(g, a, true); }
Var sum(Graph& g, Var a) { return reduce(g, a, false); }

Var pick(Graph& g, Var a, std::vector<int> index) {
  const Tensor& t = g.value(a);
  require_rank("pick", t, 2, "input");
  if (index.size() != t.dim(0)) {
    shape_fail("pick", std::to_string(index.size()) + " indices for " +
                           shape_str(t.shape()));
  }
  for (int i : index) {
    if (i >= static_cast<int>(t.dim(1))) {
      shape_fail("pick", "index " + std::to_string(i) + " outside " +
                             shape_str(t.shape()));
    }
  }
  auto idx = std::make_shared<const std::vector<int>>(std::move(index));
  OpRule rule;
  rule.name = "pick";
  rule.forward = [idx](TensorRefs in) {
    const Tensor& x = *in[0];
    Tensor out({x.dim(0)});
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const int c = (*idx)[r];
      out[r] = c < 0 ? Real(0) : x.at(r, std::size_t(c));
    }
    return out;
  };
  rule.backward = [idx](TensorRefs in, const Tensor&, const Tensor& go,
                        GradRefs gi) {
    if (!gi[0]) return;
    const std::size_t n = in[0]->dim(1);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      const int c = (*idx)[r];
      if (c >= 0) (*gi[0])[r * n + std::size_t(c)] += go[r];
    }
  };
  return g.apply(std::move(rule), {a});
}

Var cross_entropy(Graph& g, Var logits, std::vector<int> targets,
                  Reduction reduction) {
  const Tensor& t = g.value(logits);
  require_rank("cross-entropy", t, 2, "logits");
  if (targets.size() != t.dim(0)) {
    shape_fail("cross-entropy", std::to_string(targets.size()) +
                                    " targets for logits " +
                                    shape_str(t.shape()));
  }
  std::size_t counted = 0;
  for (int y : targets) {
    if (y >= static_cast<int>(t.dim(1))) {
      shape_fail("cross-entropy", "target " + std::to_string(y) +
                                      " outside vocabulary of " +
                                      std::to_string(t.dim(1)));
    }
    if (y >= 0) ++counted;
  }
  const Real denom = reduction == Reduction::kMean
                         ? Real(std::max<std::size_t>(counted, 1))
                         : Real(1);
  auto tgt = std::make_shared<const std::vector<int>>(std::move(targets));
  OpRule rule;
  rule.name = "cross-entropy";
  rule.forward = [tgt, denom](TensorRefs in) {
    const Tensor& x = *in[0];
    const std::size_t n = x.dim(1);
    Real total = 0;
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const int y = (*tgt)[r];
      if (y < 0) continue;
      const Real* row = x.data() + r * n;
      total += kernels::logsumexp_row(row, n) - row[y];
    }
    return Tensor::scalar(total / denom);
  };
  rule.backward = [tgt, denom](TensorRefs in, const Tensor&, const Tensor& go,
                               GradRefs gi) {
    if (!gi[0]) return;
    const Tensor& x = *in[0];
    const std::size_t n = x.dim(1);
    const Real scale_g = go[0] / denom;
    std::vector<Real> p(n);
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const int y = (*tgt)[r];
      if (y < 0) continue;
      std::memcpy(p.data(), x.data() + r * n, n * sizeof(Real));
      kernels::softmax_row(p.data(), n);
      Real* d = gi[0]->data() + r * n;
      for (std::size_t i = 0; i < n; ++i) d[i] += scale_g * p[i];
      d[y] -= scale_g;
    }
  };
  return g.apply(std::move(rule), {logits});
}

bool AttentionLayout::visible(std::size_t item, std::size_t query,
                              std::size_t key) const {
  const std::size_t valid = valid_len.empty() ? seq_len : valid_len[item];
  if (key >= valid) return false;
  if (key < prefix_len) return true;
  return query >= prefix_len && key <= query;
}

Var attention(Graph& g, Var qkv, AttentionLayout layout,
              std::shared_ptr<Tensor> probs) {
  const Tensor& t = g.value(qkv);
  require_rank("attention", t, 2, "qkv");
  if (t.dim(0) != layout.batch * layout.seq_len) {
    shape_fail("attention", "expected " +
                                std::to_string(layout.batch * layout.seq_len) +
                                " rows, got " + shape_str(t.shape()));
  }
  if (t.dim(1) % 3 != 0 || (t.dim(1) / 3) % layout.n_heads != 0) {
    shape_fail("attention", "width " + std::to_string(t.dim(1)) +
                                " is not 3 * heads * head_dim for " +
                                std::to_string(layout.n_heads) + " heads");
  }
  if (!layout.valid_len.empty() && layout.valid_len.size() != layout.batch) {
    shape_fail("attention", "valid_len has wrong item count");
  }
  if (!probs) probs = std::make_shared<Tensor>();

  // Shared between forward and backward: the probabilities of the most
  // recent forward pass, [B, H, T, T].
  auto stash = probs;
  OpRule rule;
  rule.name = "attention";
  rule.forward = [layout, stash](TensorRefs in) {
    const Tensor& x = *in[0];
    const std::size_t B = layout.batch, T = layout.seq_len, H = layout.n_heads;
    const std::size_t d = x.dim(1) / 3, dh = d / H;
    const Real inv = Real(1) / std::sqrt(Real(dh));
    Tensor out({B * T, d});
    *stash = Tensor({B, H, T, T});
    std::vector<Real> row(T);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < T; ++i) {
          const Real* q = x.data() + (b * T + i) * 3 * d + h * dh;
          Real mx = -std::numeric_limits<Real>::infinity();
          for (std::size_t j = 0; j < T; ++j) {
            if (!layout.visible(b, i, j)) continue;
            const Real* k = x.data() + (b * T + j) * 3 * d + d + h * dh;
            row[j] = kernels::dot(q, k, dh) * inv;
            mx = std::max(mx, row[j]);
          }
          Real s = 0;
          for (std::size_t j = 0; j < T; ++j) {
            if (!layout.visible(b, i, j)) {
              row[j] = 0;
              continue;
            }
            row[j] = std::exp(row[j] - mx);
            s += row[j];
          }
          Real* p = stash->data() + ((b * H + h) * T + i) * T;
          Real* o = out.data() + (b * T + i) * d + h * dh;
          for (std::size_t j = 0; j < T; ++j) {
            p[j] = s > 0 ? row[j] / s : Real(0);
            if (p[j] == Real(0)) continue;
            const Real* v = x.data() + (b * T + j) * 3 * d + 2 * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * v[c];
          }
        }
      }
    }
    return out;
  };
  rule.backward = [layout, stash](TensorRefs in, const Tensor&,
                                  const Tensor& go, GradRefs gi) {
    if (!gi[0]) return;
    const Tensor& x = *in[0];
    Tensor& dx = *gi[0];
    const std::size_t B = layout.batch, T = layout.seq_len, H = layout.n_heads;
    const std::size_t d = x.dim(1) / 3, dh = d / H;
    const Real inv = Real(1) / std::sqrt(Real(dh));
    std::vector<Real> dp(T);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < T; ++i) {
          const Real* p = stash->data() + ((b * H + h) * T + i) * T;
          const Real* dout = go.data() + (b * T + i) * d + h * dh;
          Real s = 0;
          for (std::size_t j = 0; j < T; ++j) {
            if (p[j] == Real(0)) {
              dp[j] = 0;
              continue;
            }
            const std::size_t vrow = (b * T + j) * 3 * d + 2 * d + h * dh;
            dp[j] = kernels::dot(dout, x.data() + vrow, dh);
            s += p[j] * dp[j];
            Real* dv = dx.data() + vrow;
            for (std::size_t c = 0; c < dh; ++c) dv[c] += p[j] * dout[c];
          }
          const std::size_t qrow = (b * T + i) * 3 * d + h * dh;
          for (std::size_t j = 0; j < T; ++j) {
            if (p[j] == Real(0)) continue;
            const Real ds = p[j] * (dp[j] - s) * inv;
            const std::size_t krow = (b * T + j) * 3 * d + d + h * dh;
            Real* dq = dx.data() + qrow;
            Real* dk = dx.data() + krow;
            const Real* q = x.data() + qrow;
            const Real* k = x.data() + krow;
            for (std::size_t c = 0; c < dh; ++c) {
              dq[c] += ds * k[c];
              dk[c] += ds * q[c];
            }
          }
        }
      }
    }
  };
  return g.apply(std::move(rule), {qkv});
}

}  // namespace helpd::ops
