#pragma once

// Differentiable ops recorded on a Graph. Every op validates shapes up
// front and throws ShapeError naming the op and the offending dimensions.

#include <memory>
#include <vector>

#include "helpd/numerics/graph.h"

namespace helpd::ops {

// [m,k] x [k,n] -> [m,n]
Var matmul(Graph& g, Var a, Var b);
// Elementwise a + b; b may also be a row vector [n] broadcast over a [m,n],
// or a single element broadcast everywhere.
Var add(Graph& g, Var a, Var b);
// Elementwise a * b with the same broadcasting rules as add().
Var mul(Graph& g, Var a, Var b);
// a * c for a constant c.
Var scale(Graph& g, Var a, Real c);

// Rows of `table` [n,d] selected by ids; id < 0 yields a zero row.
Var embedding(Graph& g, Var table, std::vector<int> ids);

// Along the last axis.
Var softmax(Graph& g, Var a);
Var log_softmax(Graph& g, Var a);

// Row-wise layer norm of x [m,n] with gain [n] and bias [n].
Var layer_norm(Graph& g, Var x, Var gain, Var bias);
Var gelu(Graph& g, Var a);

Var reshape(Graph& g, Var a, Shape shape);
// Row-wise concatenation of rank-2 tensors sharing the column count.
Var concat(Graph& g, const std::vector<Var>& parts);
Var slice_rows(Graph& g, Var a, std::size_t begin, std::size_t end);

// Scalar mean / sum of all elements.
Var mean(Graph& g, Var a);
Var sum(Graph& g, Var a);

// out[i] = a[i, index[i]] for a [m,n]; index[i] < 0 yields 0.
Var pick(Graph& g, Var a, std::vector<int> index);

enum class Reduction { kMean, kSum };
// Softmax cross-entropy of logits [m,V] against targets; target < 0 is
// ignored. kMean divides by the number of non-ignored targets.
Var cross_entropy(Graph& g, Var logits, std::vector<int> targets,
                  Reduction reduction = Reduction::kMean);

// Visibility pattern of a batch of prefix-LM sequences laid out as
// [batch * seq_len] rows: key j is visible to query i iff j < valid_len[b]
// and (j < prefix_len or prefix_len <= j <= i).
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t seq_len = 0;
  std::size_t n_heads = 1;
  std::size_t prefix_len = 0;
  std::vector<std::size_t> valid_len;  // per item; empty means seq_len

  bool visible(std::size_t item, std::size_t query, std::size_t key) const;
};

// Multi-head scaled dot-product attention over packed qkv [B*T, 3d]
// returning [B*T, d]. When `probs` is non-null the forward pass stores the
// attention probabilities there as [B, H, T, T].
Var attention(Graph& g, Var qkv, AttentionLayout layout,
              std::shared_ptr<Tensor> probs = nullptr);

}  // namespace helpd::ops
