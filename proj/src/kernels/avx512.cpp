// AVX-512F lane. Compiled with -mavx512f only; dispatch.cpp guards entry
// behind a runtime CPU check. Accumulation orders match scalar.cpp exactly.

#include "lanes.hpp"

#include <immintrin.h>

#include <cmath>
#include <vector>

namespace dubstyle::kernels::detail {

namespace {

inline __mmask8 tail_mask(std::size_t r) {
  return static_cast<__mmask8>((1u << r) - 1u);
}

// Pinned fold: lane l += lane l+4, lane l += lane l+2, lane 0 += lane 1.
inline double reduce8(__m512d v) {
  __m256d lo = _mm512_castpd512_pd256(v);
  __m256d hi = _mm512_extractf64x4_pd(v, 1);
  __m256d s4 = _mm256_add_pd(lo, hi);
  __m128d lo2 = _mm256_castpd256_pd128(s4);
  __m128d hi2 = _mm256_extractf128_pd(s4, 1);
  __m128d s2 = _mm_add_pd(lo2, hi2);
  __m128d swapped = _mm_unpackhi_pd(s2, s2);
  return _mm_cvtsd_f64(_mm_add_sd(s2, swapped));
}

// gemm_nn inner tile: MR rows x 32 columns against a packed strip of B
// (k rows x 32 doubles, zero-filled past the edge). Each C element keeps
// one plain fma chain, as in the scalar lane; zero fill never perturbs a
// live lane and dead lanes are discarded by the masked store.
template <int MR>
inline void nn_tile(std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* pack, double* c, std::size_t j0,
                    const __mmask8* masks) {
  __m512d acc[MR][4];
  for (int r = 0; r < MR; ++r)
    for (int q = 0; q < 4; ++q) acc[r][q] = _mm512_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* prow = pack + p * 32;
    __m512d b0 = _mm512_loadu_pd(prow);
    __m512d b1 = _mm512_loadu_pd(prow + 8);
    __m512d b2 = _mm512_loadu_pd(prow + 16);
    __m512d b3 = _mm512_loadu_pd(prow + 24);
    for (int r = 0; r < MR; ++r) {
      __m512d av = _mm512_set1_pd(a[r * lda + p]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
      acc[r][2] = _mm512_fmadd_pd(av, b2, acc[r][2]);
      acc[r][3] = _mm512_fmadd_pd(av, b3, acc[r][3]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + r * n + j0;
    for (int q = 0; q < 4; ++q) {
      __m512d cv = _mm512_maskz_loadu_pd(masks[q], crow + 8 * q);
      _mm512_mask_storeu_pd(crow + 8 * q, masks[q], _mm512_add_pd(cv, acc[r][q]));
    }
  }
}

// Column-block width for cache blocking: a block of B columns (nn/tn) or
// B rows (nt) is swept repeatedly while it stays resident in L2.
constexpr std::size_t kBlockJ = 64;

// gemm_tn inner tile: like nn but A is k x m, element A[p][i].
template <int MR>
inline void tn_tile(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    std::size_t i0, const double* b, double* c, std::size_t j0,
                    __mmask8 m_lo, __mmask8 m_hi) {
  __m512d acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    const double* acol = a + p * m + i0;
    __m512d b0 = _mm512_maskz_loadu_pd(m_lo, brow);
    __m512d b1 = _mm512_maskz_loadu_pd(m_hi, brow + 8);
    for (int r = 0; r < MR; ++r) {
      __m512d av = _mm512_set1_pd(acol[r]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + (i0 + r) * n + j0;
    __m512d c0 = _mm512_maskz_loadu_pd(m_lo, crow);
    __m512d c1 = _mm512_maskz_loadu_pd(m_hi, crow + 8);
    _mm512_mask_storeu_pd(crow, m_lo, _mm512_add_pd(c0, acc[r][0]));
    _mm512_mask_storeu_pd(crow + 8, m_hi, _mm512_add_pd(c1, acc[r][1]));
  }
}

// gemm_nt register tile: MR rows of A against four rows of B. Every C
// element owns its eight stride accumulators (the zmm lanes) folded by
// reduce8, so the result matches the scalar lane bit-for-bit.
template <int MR>
inline void nt_block(std::size_t n, std::size_t k, std::size_t k8, __mmask8 ktail,
                     const double* a, const double* b, double* c, std::size_t jb,
                     std::size_t jend) {
  std::size_t j = jb;
  for (; j + 4 <= jend; j += 4) {
    const double* b0 = b + (j + 0) * k;
    const double* b1 = b + (j + 1) * k;
    const double* b2 = b + (j + 2) * k;
    const double* b3 = b + (j + 3) * k;
    __m512d acc[MR][4];
    for (int r = 0; r < MR; ++r)
      for (int q = 0; q < 4; ++q) acc[r][q] = _mm512_setzero_pd();
    for (std::size_t p = 0; p < k8; p += 8) {
      __m512d vb0 = _mm512_loadu_pd(b0 + p);
      __m512d vb1 = _mm512_loadu_pd(b1 + p);
      __m512d vb2 = _mm512_loadu_pd(b2 + p);
      __m512d vb3 = _mm512_loadu_pd(b3 + p);
      for (int r = 0; r < MR; ++r) {
        __m512d av = _mm512_loadu_pd(a + r * k + p);
        acc[r][0] = _mm512_fmadd_pd(av, vb0, acc[r][0]);
        acc[r][1] = _mm512_fmadd_pd(av, vb1, acc[r][1]);
        acc[r][2] = _mm512_fmadd_pd(av, vb2, acc[r][2]);
        acc[r][3] = _mm512_fmadd_pd(av, vb3, acc[r][3]);
      }
    }
    if (k8 < k) {
      __m512d vb0 = _mm512_maskz_loadu_pd(ktail, b0 + k8);
      __m512d vb1 = _mm512_maskz_loadu_pd(ktail, b1 + k8);
      __m512d vb2 = _mm512_maskz_loadu_pd(ktail, b2 + k8);
      __m512d vb3 = _mm512_maskz_loadu_pd(ktail, b3 + k8);
      for (int r = 0; r < MR; ++r) {
        __m512d av = _mm512_maskz_loadu_pd(ktail, a + r * k + k8);
        acc[r][0] = _mm512_mask3_fmadd_pd(av, vb0, acc[r][0], ktail);
        acc[r][1] = _mm512_mask3_fmadd_pd(av, vb1, acc[r][1], ktail);
        acc[r][2] = _mm512_mask3_fmadd_pd(av, vb2, acc[r][2], ktail);
        acc[r][3] = _mm512_mask3_fmadd_pd(av, vb3, acc[r][3], ktail);
      }
    }
    for (int r = 0; r < MR; ++r) {
      double* crow = c + r * n;
      crow[j + 0] += reduce8(acc[r][0]);
      crow[j + 1] += reduce8(acc[r][1]);
      crow[j + 2] += reduce8(acc[r][2]);
      crow[j + 3] += reduce8(acc[r][3]);
    }
  }
  for (; j < jend; ++j) {
    const double* brow = b + j * k;
    for (int r = 0; r < MR; ++r) {
      const double* arow = a + r * k;
      __m512d acc = _mm512_setzero_pd();
      for (std::size_t p = 0; p < k8; p += 8)
        acc = _mm512_fmadd_pd(_mm512_loadu_pd(arow + p), _mm512_loadu_pd(brow + p), acc);
      if (k8 < k)
        acc = _mm512_mask3_fmadd_pd(_mm512_maskz_loadu_pd(ktail, arow + k8),
                                    _mm512_maskz_loadu_pd(ktail, brow + k8), acc, ktail);
      c[r * n + j] += reduce8(acc);
    }
  }
}

}  // namespace

void avx512_gemm_nn(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  // Pack each 32-column strip of B once (the strided walk touches every
  // page of B), then sweep the contiguous, cache-resident strip with all
  // row tiles. Packing copies values verbatim.
  std::vector<double> pack(k * 32);
  for (std::size_t j0 = 0; j0 < n; j0 += 32) {
    std::size_t jr = n - j0;
    __mmask8 masks[4];
    for (int q = 0; q < 4; ++q) {
      std::size_t off = static_cast<std::size_t>(8 * q);
      masks[q] = jr >= off + 8 ? __mmask8(0xff)
                               : (jr > off ? tail_mask(jr - off) : __mmask8(0));
    }
    double* pk = pack.data();
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n + j0;
      for (int q = 0; q < 4; ++q)
        _mm512_storeu_pd(pk + p * 32 + 8 * q,
                         _mm512_maskz_loadu_pd(masks[q], brow + 8 * q));
    }
    std::size_t i = 0;
    for (; i + 6 <= m; i += 6)
      nn_tile<6>(n, k, a + i * k, k, pk, c + i * n, j0, masks);
    for (; i + 2 <= m; i += 2)
      nn_tile<2>(n, k, a + i * k, k, pk, c + i * n, j0, masks);
    if (i < m) nn_tile<1>(n, k, a + i * k, k, pk, c + i * n, j0, masks);
  }
}

void avx512_gemm_tn(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  // Column blocks keep the touched slice of B resident while the strided
  // A tiles sweep it; per-element accumulation order is unchanged.
  for (std::size_t jb = 0; jb < n; jb += kBlockJ) {
    const std::size_t jend = jb + kBlockJ < n ? jb + kBlockJ : n;
    std::size_t i = 0;
    auto row_block = [&](auto tile, std::size_t i0) {
      for (std::size_t j0 = jb; j0 < jend; j0 += 16) {
        std::size_t jr = jend - j0;
        __mmask8 m_lo = jr >= 8 ? 0xff : tail_mask(jr);
        __mmask8 m_hi = jr >= 16 ? 0xff : (jr > 8 ? tail_mask(jr - 8) : 0);
        tile(m, n, k, a, i0, b, c, j0, m_lo, m_hi);
      }
    };
    for (; i + 6 <= m; i += 6) row_block(tn_tile<6>, i);
    for (; i + 2 <= m; i += 2) row_block(tn_tile<2>, i);
    if (i < m) row_block(tn_tile<1>, i);
  }
}

void avx512_gemm_nt(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  if (k == 0) return;
  const std::size_t k8 = k & ~std::size_t(7);
  const __mmask8 ktail = tail_mask(k & 7);
  // Sweep every row of A over one cache-resident block of B rows before
  // moving to the next block; two A rows per pass share the B loads.
  for (std::size_t jb = 0; jb < n; jb += kBlockJ) {
    const std::size_t jend = jb + kBlockJ < n ? jb + kBlockJ : n;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
      nt_block<4>(n, k, k8, ktail, a + i * k, b, c + i * n, jb, jend);
    for (; i + 2 <= m; i += 2)
      nt_block<2>(n, k, k8, ktail, a + i * k, b, c + i * n, jb, jend);
    if (i < m) nt_block<1>(n, k, k8, ktail, a + i * k, b, c + i * n, jb, jend);
  }
}

namespace {

template <typename Op>
inline void ew_binary(std::size_t n, const double* a, const double* b, double* out,
                      Op op) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, op(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    _mm512_mask_storeu_pd(out + i, tm,
                          op(_mm512_maskz_loadu_pd(tm, a + i),
                             _mm512_maskz_loadu_pd(tm, b + i)));
  }
}

}  // namespace

void avx512_add(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m512d x, __m512d y) { return _mm512_add_pd(x, y); });
}

void avx512_sub(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m512d x, __m512d y) { return _mm512_sub_pd(x, y); });
}

void avx512_mul(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m512d x, __m512d y) { return _mm512_mul_pd(x, y); });
}

void avx512_scale(std::size_t n, double alpha, const double* x, double* out) {
  __m512d av = _mm512_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, _mm512_mul_pd(av, _mm512_loadu_pd(x + i)));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    _mm512_mask_storeu_pd(out + i, tm, _mm512_mul_pd(av, _mm512_maskz_loadu_pd(tm, x + i)));
  }
}

void avx512_axpy(std::size_t n, double alpha, const double* x, double* y) {
  __m512d av = _mm512_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_fmadd_pd(av, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    __m512d yv = _mm512_maskz_loadu_pd(tm, y + i);
    _mm512_mask_storeu_pd(y + i, tm,
                          _mm512_fmadd_pd(av, _mm512_maskz_loadu_pd(tm, x + i), yv));
  }
}

void avx512_madd(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, _mm512_fmadd_pd(_mm512_loadu_pd(a + i),
                                              _mm512_loadu_pd(b + i),
                                              _mm512_loadu_pd(out + i)));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    __m512d ov = _mm512_maskz_loadu_pd(tm, out + i);
    _mm512_mask_storeu_pd(out + i, tm,
                          _mm512_fmadd_pd(_mm512_maskz_loadu_pd(tm, a + i),
                                          _mm512_maskz_loadu_pd(tm, b + i), ov));
  }
}

void avx512_relu(std::size_t n, const double* x, double* out) {
  const __m512d zero = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m512d xv = _mm512_loadu_pd(x + i);
    __mmask8 pos = _mm512_cmp_pd_mask(xv, zero, _CMP_GT_OQ);
    _mm512_storeu_pd(out + i, _mm512_maskz_mov_pd(pos, xv));
  }
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    __m512d xv = _mm512_maskz_loadu_pd(tm, x + i);
    __mmask8 pos = _mm512_cmp_pd_mask(xv, zero, _CMP_GT_OQ);
    _mm512_mask_storeu_pd(out + i, tm, _mm512_maskz_mov_pd(pos, xv));
  }
}

void avx512_relu_backward(std::size_t n, const double* x, const double* dy,
                          double* dx) {
  const __m512d zero = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m512d xv = _mm512_loadu_pd(x + i);
    __mmask8 pos = _mm512_cmp_pd_mask(xv, zero, _CMP_GT_OQ);
    __m512d dxv = _mm512_loadu_pd(dx + i);
    _mm512_storeu_pd(dx + i,
                     _mm512_mask_add_pd(dxv, pos, dxv, _mm512_loadu_pd(dy + i)));
  }
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    __m512d xv = _mm512_maskz_loadu_pd(tm, x + i);
    __mmask8 pos = _mm512_cmp_pd_mask(xv, zero, _CMP_GT_OQ) & tm;
    __m512d dxv = _mm512_maskz_loadu_pd(tm, dx + i);
    _mm512_mask_storeu_pd(dx + i, tm,
                          _mm512_mask_add_pd(dxv, pos, dxv,
                                             _mm512_maskz_loadu_pd(tm, dy + i)));
  }
}

double avx512_sum(std::size_t n, const double* x) {
  __m512d acc = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm512_add_pd(acc, _mm512_loadu_pd(x + i));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    acc = _mm512_mask_add_pd(acc, tm, acc, _mm512_maskz_loadu_pd(tm, x + i));
  }
  return reduce8(acc);
}

double avx512_dot(std::size_t n, const double* a, const double* b) {
  __m512d acc = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc);
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    acc = _mm512_mask3_fmadd_pd(_mm512_maskz_loadu_pd(tm, a + i),
                                _mm512_maskz_loadu_pd(tm, b + i), acc, tm);
  }
  return reduce8(acc);
}

double avx512_l1_norm(std::size_t n, const double* x) {
  __m512d acc = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm512_add_pd(acc, _mm512_abs_pd(_mm512_loadu_pd(x + i)));
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    acc = _mm512_mask_add_pd(acc, tm, acc,
                             _mm512_abs_pd(_mm512_maskz_loadu_pd(tm, x + i)));
  }
  return reduce8(acc);
}

double avx512_l2_norm_sq(std::size_t n, const double* x) {
  __m512d acc = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m512d xv = _mm512_loadu_pd(x + i);
    acc = _mm512_fmadd_pd(xv, xv, acc);
  }
  if (i < n) {
    __mmask8 tm = tail_mask(n - i);
    __m512d xv = _mm512_maskz_loadu_pd(tm, x + i);
    acc = _mm512_mask3_fmadd_pd(xv, xv, acc, tm);
  }
  return reduce8(acc);
}

void avx512_adam_update(std::size_t n, double* w, const double* g, double* m,
                        double* v, double lr, double beta1, double beta2,
                        double eps, double inv_bc1, double inv_bc2) {
  const __m512d b1 = _mm512_set1_pd(beta1);
  const __m512d b2 = _mm512_set1_pd(beta2);
  const __m512d omb1 = _mm512_set1_pd(1.0 - beta1);
  const __m512d omb2 = _mm512_set1_pd(1.0 - beta2);
  const __m512d lrv = _mm512_set1_pd(lr);
  const __m512d epsv = _mm512_set1_pd(eps);
  const __m512d bc1 = _mm512_set1_pd(inv_bc1);
  const __m512d bc2 = _mm512_set1_pd(inv_bc2);
  std::size_t i = 0;
  auto step = [&](__mmask8 tm, std::size_t at) {
    __m512d gv = _mm512_maskz_loadu_pd(tm, g + at);
    __m512d mv = _mm512_maskz_loadu_pd(tm, m + at);
    __m512d vv = _mm512_maskz_loadu_pd(tm, v + at);
    mv = _mm512_fmadd_pd(b1, mv, _mm512_mul_pd(omb1, gv));
    vv = _mm512_fmadd_pd(b2, vv, _mm512_mul_pd(omb2, _mm512_mul_pd(gv, gv)));
    _mm512_mask_storeu_pd(m + at, tm, mv);
    _mm512_mask_storeu_pd(v + at, tm, vv);
    __m512d mh = _mm512_mul_pd(mv, bc1);
    __m512d vh = _mm512_mul_pd(vv, bc2);
    __m512d den = _mm512_add_pd(_mm512_sqrt_pd(vh), epsv);
    __m512d upd = _mm512_div_pd(_mm512_mul_pd(lrv, mh), den);
    __m512d wv = _mm512_maskz_loadu_pd(tm, w + at);
    _mm512_mask_storeu_pd(w + at, tm, _mm512_sub_pd(wv, upd));
  };
  for (; i + 8 <= n; i += 8) step(0xff, i);
  if (i < n) step(tail_mask(n - i), i);
}

}  // namespace dubstyle::kernels::detail
