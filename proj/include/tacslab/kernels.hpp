#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "tacslab/common.hpp"

// Forward arithmetic shared by the autodiff ops and the no-grad inference
// paths. Using one set of kernels keeps tracked and untracked forwards
// bit-identical, which the determinism contracts rely on.
namespace tacslab::kernels {

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// out = W x + b where W is rows x cols row-major, x has cols entries.
inline void affine(const double* w, const double* b, const double* x,
                   std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = b[r] + dot(w + r * cols, x, cols);
}

inline void tanh_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

// Max over entries; -inf entries (masked logits) are skipped naturally.
inline double max_entry(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

// Stable softmax. Entries of exactly -inf get probability exactly 0.
// Requires at least one finite entry.
inline void softmax(const double* x, std::size_t n, double* out) {
  const double m = max_entry(x, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::isinf(x[i]) ? 0.0 : std::exp(x[i] - m);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

inline double log_sum_exp(const double* x, std::size_t n) {
  const double m = max_entry(x, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isinf(x[i])) z += std::exp(x[i] - m);
  return m + std::log(z);
}

// -log softmax(logits)[label], evaluated in log space so saturated logits
// cannot overflow.
inline double cross_entropy(const double* logits, std::size_t n,
                            std::size_t label) {
  return log_sum_exp(logits, n) - logits[label];
}

// Smallest index attaining the maximum (deterministic tie-break).
inline std::size_t argmax(const double* x, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

inline std::size_t argmax(const std::vector<double>& x) {
  return argmax(x.data(), x.size());
}

// Entropy of a probability vector in nats; 0 * log 0 = 0.
inline double entropy(const double* p, std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

}  // namespace tacslab::kernels
