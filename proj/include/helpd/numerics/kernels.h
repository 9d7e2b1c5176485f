#pragma once

// Raw row-major kernels shared by the differentiable graph and the
// inference-only decode path. All of them write (or accumulate) into the
// caller's buffer and never allocate.

#include <cstddef>

#include "helpd/common.h"

namespace helpd::kernels {

// C[m,n] (+)= A[m,k] * B[k,n]
void matmul(const Real* a, const Real* b, Real* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

Real dot(const Real* a, const Real* b, std::size_t n);

// In-place numerically stable softmax / log-softmax of one row.
void softmax_row(Real* x, std::size_t n);
void log_softmax_row(Real* x, std::size_t n);
Real logsumexp_row(const Real* x, std::size_t n);

inline constexpr Real kLayerNormEps = Real(1e-5);

// y = (x - mean) / sqrt(var + eps) * gain + bias over one row of width n.
// Writes the normalized (pre-affine) row into xhat and returns 1/std.
Real layer_norm_row(const Real* x, const Real* gain, const Real* bias, Real* y,
                    Real* xhat, std::size_t n);

// tanh approximation of GELU and its derivative.
Real gelu(Real x);
Real gelu_grad(Real x);

}  // namespace helpd::kernels
