// Scalar reference lane. This file defines the arithmetic contract the
// SIMD lanes must reproduce bit-for-bit, so the accumulation patterns
// here are deliberate, not incidental.

#include "lanes.hpp"

#include <cmath>

namespace dubstyle::kernels::detail {

void scalar_gemm_nn(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc = std::fma(arow[p], b[p * n + j], acc);
      crow[j] += acc;
    }
  }
}

namespace {

// Pinned pairwise fold of the eight stride accumulators.
inline double fold8(const double* acc) {
  double s0 = acc[0] + acc[4];
  double s1 = acc[1] + acc[5];
  double s2 = acc[2] + acc[6];
  double s3 = acc[3] + acc[7];
  double t0 = s0 + s2;
  double t1 = s1 + s3;
  return t0 + t1;
}

}  // namespace

void scalar_gemm_nt(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (std::size_t p = 0; p < k; ++p)
        acc[p & 7] = std::fma(arow[p], brow[p], acc[p & 7]);
      crow[j] += fold8(acc);
    }
  }
}

void scalar_gemm_tn(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc = std::fma(a[p * m + i], b[p * n + j], acc);
      crow[j] += acc;
    }
  }
}

void scalar_add(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void scalar_sub(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scalar_mul(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scalar_scale(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void scalar_axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scalar_madd(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(a[i], b[i], out[i]);
}

void scalar_relu(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void scalar_relu_backward(std::size_t n, const double* x, const double* dy,
                          double* dx) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

double scalar_sum(std::size_t n, const double* x) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) acc[i & 7] += x[i];
  return fold8(acc);
}

double scalar_dot(std::size_t n, const double* a, const double* b) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) acc[i & 7] = std::fma(a[i], b[i], acc[i & 7]);
  return fold8(acc);
}

double scalar_l1_norm(std::size_t n, const double* x) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) acc[i & 7] += std::fabs(x[i]);
  return fold8(acc);
}

double scalar_l2_norm_sq(std::size_t n, const double* x) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) acc[i & 7] = std::fma(x[i], x[i], acc[i & 7]);
  return fold8(acc);
}

void scalar_adam_update(std::size_t n, double* w, const double* g, double* m,
                        double* v, double lr, double beta1, double beta2,
                        double eps, double inv_bc1, double inv_bc2) {
  const double one_m_b1 = 1.0 - beta1;
  const double one_m_b2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = std::fma(beta1, m[i], one_m_b1 * g[i]);
    v[i] = std::fma(beta2, v[i], one_m_b2 * (g[i] * g[i]));
    double mh = m[i] * inv_bc1;
    double vh = v[i] * inv_bc2;
    w[i] = w[i] - (lr * mh) / (std::sqrt(vh) + eps);
  }
}

}  // namespace dubstyle::kernels::detail
