#include "helpd/numerics/kernels.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace helpd::kernels {

void matmul(const Real* a, const Real* b, Real* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, Real(0));
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    const Real* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      if (aip == Real(0)) continue;
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = dot(ai, b + j * k, k);
      ci[j] = accumulate ? ci[j] + d : d;
    }
  }
}

void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, Real(0));
  for (std::size_t p = 0; p < k; ++p) {
    const Real* ap = a + p * m;
    const Real* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real api = ap[i];
      if (api == Real(0)) continue;
      Real* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

Real dot(const Real* a, const Real* b, std::size_t n) {
  // Four partial sums let the compiler vectorize without -ffast-math.
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Real logsumexp_row(const Real* x, std::size_t n) {
  const Real mx = *std::max_element(x, x + n);
  if (!std::isfinite(mx)) return mx;
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

void softmax_row(Real* x, std::size_t n) {
  const Real mx = *std::max_element(x, x + n);
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    s += x[i];
  }
  const Real inv = Real(1) / s;
  for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

void log_softmax_row(Real* x, std::size_t n) {
  const Real lse = logsumexp_row(x, n);
  for (std::size_t i = 0; i < n; ++i) x[i] -= lse;
}

Real layer_norm_row(const Real* x, const Real* gain, const Real* bias, Real* y,
                    Real* xhat, std::size_t n) {
  Real mu = 0;
  for (std::size_t i = 0; i < n; ++i) mu += x[i];
  mu /= Real(n);
  Real var = 0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
  var /= Real(n);
  const Real rstd = Real(1) / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i) {
    const Real h = (x[i] - mu) * rstd;
    if (xhat) xhat[i] = h;
    y[i] = h * gain[i] + bias[i];
  }
  return rstd;
}

namespace {
constexpr Real kGeluC = Real(0.7978845608028654);  // sqrt(2/pi)
constexpr Real kGeluA = Real(0.044715);
}  // namespace

Real gelu(Real x) {
  const Real u = kGeluC * (x + kGeluA * x * x * x);
  return Real(0.5) * x * (Real(1) + std::tanh(u));
}

Real gelu_grad(Real x) {
  const Real u = kGeluC * (x + kGeluA * x * x * x);
  const Real t = std::tanh(u);
  const Real du = kGeluC * (Real(1) + Real(3) * kGeluA * x * x);
  return Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du;
}

}  // namespace helpd::kernels
