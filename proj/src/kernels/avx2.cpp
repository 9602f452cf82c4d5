// AVX2+FMA lane. The eight-accumulator reduction contract is carried by
// two ymm registers (lanes 0-3 and 4-7), so folds and results match the
// scalar lane bit-for-bit.

#include "lanes.hpp"

#include <immintrin.h>

#include <cmath>

namespace dubstyle::kernels::detail {

namespace {

inline __m256i lane_mask(std::size_t r) {
  // r in [0,4]: first r lanes active
  alignas(32) static const long long table[5][4] = {
      {0, 0, 0, 0},
      {-1, 0, 0, 0},
      {-1, -1, 0, 0},
      {-1, -1, -1, 0},
      {-1, -1, -1, -1},
  };
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(table[r]));
}

inline double fold8(__m256d lo, __m256d hi) {
  __m256d s4 = _mm256_add_pd(lo, hi);
  __m128d s2 = _mm_add_pd(_mm256_castpd256_pd128(s4), _mm256_extractf128_pd(s4, 1));
  return _mm_cvtsd_f64(_mm_add_sd(s2, _mm_unpackhi_pd(s2, s2)));
}

template <int MR>
inline void nn_tile(std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, double* c, std::size_t j0, __m256i m_lo,
                    __m256i m_hi) {
  __m256d acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    __m256d b0 = _mm256_maskload_pd(brow, m_lo);
    __m256d b1 = _mm256_maskload_pd(brow + 4, m_hi);
    for (int r = 0; r < MR; ++r) {
      __m256d av = _mm256_set1_pd(a[r * lda + p]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + r * n + j0;
    __m256d c0 = _mm256_maskload_pd(crow, m_lo);
    __m256d c1 = _mm256_maskload_pd(crow + 4, m_hi);
    _mm256_maskstore_pd(crow, m_lo, _mm256_add_pd(c0, acc[r][0]));
    _mm256_maskstore_pd(crow + 4, m_hi, _mm256_add_pd(c1, acc[r][1]));
  }
}

// Column-block width for cache blocking (see the scalar lane for the
// accumulation contract; blocking only reorders whole-element visits).
constexpr std::size_t kBlockJ = 64;

template <int MR>
inline void tn_tile(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    std::size_t i0, const double* b, double* c, std::size_t j0,
                    __m256i m_lo, __m256i m_hi) {
  __m256d acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    const double* acol = a + p * m + i0;
    __m256d b0 = _mm256_maskload_pd(brow, m_lo);
    __m256d b1 = _mm256_maskload_pd(brow + 4, m_hi);
    for (int r = 0; r < MR; ++r) {
      __m256d av = _mm256_set1_pd(acol[r]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + (i0 + r) * n + j0;
    __m256d c0 = _mm256_maskload_pd(crow, m_lo);
    __m256d c1 = _mm256_maskload_pd(crow + 4, m_hi);
    _mm256_maskstore_pd(crow, m_lo, _mm256_add_pd(c0, acc[r][0]));
    _mm256_maskstore_pd(crow + 4, m_hi, _mm256_add_pd(c1, acc[r][1]));
  }
}

// gemm_nt inner block: one A row against four B rows at a time. The lo/hi
// ymm pair carries the eight stride accumulators of each C element,
// folded by fold8 exactly like the scalar lane.
inline void nt_block(std::size_t n, std::size_t k, std::size_t k8, std::size_t kr,
                     __m256i kt_lo, __m256i kt_hi, const double* arow,
                     const double* b, double* crow, std::size_t jb,
                     std::size_t jend) {
  std::size_t j = jb;
  for (; j + 4 <= jend; j += 4) {
    const double* br[4] = {b + (j + 0) * k, b + (j + 1) * k, b + (j + 2) * k,
                           b + (j + 3) * k};
    __m256d lo[4], hi[4];
    for (int q = 0; q < 4; ++q) {
      lo[q] = _mm256_setzero_pd();
      hi[q] = _mm256_setzero_pd();
    }
    for (std::size_t p = 0; p < k8; p += 8) {
      __m256d a_lo = _mm256_loadu_pd(arow + p);
      __m256d a_hi = _mm256_loadu_pd(arow + p + 4);
      for (int q = 0; q < 4; ++q) {
        lo[q] = _mm256_fmadd_pd(a_lo, _mm256_loadu_pd(br[q] + p), lo[q]);
        hi[q] = _mm256_fmadd_pd(a_hi, _mm256_loadu_pd(br[q] + p + 4), hi[q]);
      }
    }
    if (kr) {
      __m256d a_lo = _mm256_maskload_pd(arow + k8, kt_lo);
      for (int q = 0; q < 4; ++q)
        lo[q] = _mm256_fmadd_pd(a_lo, _mm256_maskload_pd(br[q] + k8, kt_lo), lo[q]);
      if (kr > 4) {
        __m256d a_hi = _mm256_maskload_pd(arow + k8 + 4, kt_hi);
        for (int q = 0; q < 4; ++q)
          hi[q] = _mm256_fmadd_pd(a_hi, _mm256_maskload_pd(br[q] + k8 + 4, kt_hi), hi[q]);
      }
    }
    for (int q = 0; q < 4; ++q) crow[j + q] += fold8(lo[q], hi[q]);
  }
  for (; j < jend; ++j) {
    const double* brow = b + j * k;
    __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k8; p += 8) {
      lo = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), lo);
      hi = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p + 4), _mm256_loadu_pd(brow + p + 4), hi);
    }
    if (kr) {
      lo = _mm256_fmadd_pd(_mm256_maskload_pd(arow + k8, kt_lo),
                           _mm256_maskload_pd(brow + k8, kt_lo), lo);
      if (kr > 4)
        hi = _mm256_fmadd_pd(_mm256_maskload_pd(arow + k8 + 4, kt_hi),
                             _mm256_maskload_pd(brow + k8 + 4, kt_hi), hi);
    }
    crow[j] += fold8(lo, hi);
  }
}

}  // namespace

void avx2_gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  if (k == 0) return;
  for (std::size_t j0 = 0; j0 < n; j0 += 8) {
    std::size_t jr = n - j0;
    __m256i m_lo = lane_mask(jr >= 4 ? 4 : jr);
    __m256i m_hi = lane_mask(jr >= 8 ? 4 : (jr > 4 ? jr - 4 : 0));
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
      nn_tile<4>(n, k, a + i * k, k, b, c + i * n, j0, m_lo, m_hi);
    for (; i < m; ++i)
      nn_tile<1>(n, k, a + i * k, k, b, c + i * n, j0, m_lo, m_hi);
  }
}

void avx2_gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  if (k == 0) return;
  for (std::size_t jb = 0; jb < n; jb += kBlockJ) {
    const std::size_t jend = jb + kBlockJ < n ? jb + kBlockJ : n;
    std::size_t i = 0;
    auto row_block = [&](auto tile, std::size_t i0) {
      for (std::size_t j0 = jb; j0 < jend; j0 += 8) {
        std::size_t jr = jend - j0;
        __m256i m_lo = lane_mask(jr >= 4 ? 4 : jr);
        __m256i m_hi = lane_mask(jr >= 8 ? 4 : (jr > 4 ? jr - 4 : 0));
        tile(m, n, k, a, i0, b, c, j0, m_lo, m_hi);
      }
    };
    for (; i + 4 <= m; i += 4) row_block(tn_tile<4>, i);
    for (; i < m; ++i) row_block(tn_tile<1>, i);
  }
}

void avx2_gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  if (k == 0) return;
  const std::size_t k8 = k & ~std::size_t(7);
  const std::size_t kr = k & 7;
  const __m256i kt_lo = lane_mask(kr >= 4 ? 4 : kr);
  const __m256i kt_hi = lane_mask(kr > 4 ? kr - 4 : 0);
  for (std::size_t jb = 0; jb < n; jb += kBlockJ) {
    const std::size_t jend = jb + kBlockJ < n ? jb + kBlockJ : n;
    for (std::size_t i = 0; i < m; ++i)
      nt_block(n, k, k8, kr, kt_lo, kt_hi, a + i * k, b, c + i * n, jb, jend);
  }
}

namespace {

template <typename Op>
inline void ew_binary(std::size_t n, const double* a, const double* b, double* out,
                      Op op) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, op(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    _mm256_maskstore_pd(out + i, tm,
                        op(_mm256_maskload_pd(a + i, tm), _mm256_maskload_pd(b + i, tm)));
  }
}

}  // namespace

void avx2_add(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); });
}

void avx2_sub(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); });
}

void avx2_mul(std::size_t n, const double* a, const double* b, double* out) {
  ew_binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); });
}

void avx2_scale(std::size_t n, double alpha, const double* x, double* out) {
  __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    _mm256_maskstore_pd(out + i, tm, _mm256_mul_pd(av, _mm256_maskload_pd(x + i, tm)));
  }
}

void avx2_axpy(std::size_t n, double alpha, const double* x, double* y) {
  __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    _mm256_maskstore_pd(y + i, tm,
                        _mm256_fmadd_pd(av, _mm256_maskload_pd(x + i, tm),
                                        _mm256_maskload_pd(y + i, tm)));
  }
}

void avx2_madd(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    _mm256_maskstore_pd(out + i, tm,
                        _mm256_fmadd_pd(_mm256_maskload_pd(a + i, tm),
                                        _mm256_maskload_pd(b + i, tm),
                                        _mm256_maskload_pd(out + i, tm)));
  }
}

void avx2_relu(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_cmp_pd(xv, zero, _CMP_GT_OQ), xv));
  }
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    __m256d xv = _mm256_maskload_pd(x + i, tm);
    _mm256_maskstore_pd(out + i, tm,
                        _mm256_and_pd(_mm256_cmp_pd(xv, zero, _CMP_GT_OQ), xv));
  }
}

void avx2_relu_backward(std::size_t n, const double* x, const double* dy,
                        double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    __m256d dxv = _mm256_loadu_pd(dx + i);
    __m256d updated = _mm256_add_pd(dxv, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_blendv_pd(dxv, updated, mask));
  }
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    __m256d xv = _mm256_maskload_pd(x + i, tm);
    __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    __m256d dxv = _mm256_maskload_pd(dx + i, tm);
    __m256d updated = _mm256_add_pd(dxv, _mm256_maskload_pd(dy + i, tm));
    _mm256_maskstore_pd(dx + i, tm, _mm256_blendv_pd(dxv, updated, mask));
  }
}

double avx2_sum(std::size_t n, const double* x) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = _mm256_add_pd(lo, _mm256_loadu_pd(x + i));
    hi = _mm256_add_pd(hi, _mm256_loadu_pd(x + i + 4));
  }
  std::size_t r = n - i;
  if (r) {
    lo = _mm256_add_pd(lo, _mm256_maskload_pd(x + i, lane_mask(r >= 4 ? 4 : r)));
    if (r > 4) hi = _mm256_add_pd(hi, _mm256_maskload_pd(x + i + 4, lane_mask(r - 4)));
  }
  return fold8(lo, hi);
}

double avx2_dot(std::size_t n, const double* a, const double* b) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), lo);
    hi = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), hi);
  }
  std::size_t r = n - i;
  if (r) {
    __m256i tl = lane_mask(r >= 4 ? 4 : r);
    lo = _mm256_fmadd_pd(_mm256_maskload_pd(a + i, tl), _mm256_maskload_pd(b + i, tl), lo);
    if (r > 4) {
      __m256i th = lane_mask(r - 4);
      hi = _mm256_fmadd_pd(_mm256_maskload_pd(a + i + 4, th),
                           _mm256_maskload_pd(b + i + 4, th), hi);
    }
  }
  return fold8(lo, hi);
}

double avx2_l1_norm(std::size_t n, const double* x) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = _mm256_add_pd(lo, _mm256_andnot_pd(signmask, _mm256_loadu_pd(x + i)));
    hi = _mm256_add_pd(hi, _mm256_andnot_pd(signmask, _mm256_loadu_pd(x + i + 4)));
  }
  std::size_t r = n - i;
  if (r) {
    lo = _mm256_add_pd(lo, _mm256_andnot_pd(signmask, _mm256_maskload_pd(
                               x + i, lane_mask(r >= 4 ? 4 : r))));
    if (r > 4)
      hi = _mm256_add_pd(hi, _mm256_andnot_pd(signmask, _mm256_maskload_pd(
                                 x + i + 4, lane_mask(r - 4))));
  }
  return fold8(lo, hi);
}

double avx2_l2_norm_sq(std::size_t n, const double* x) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d a = _mm256_loadu_pd(x + i);
    __m256d b = _mm256_loadu_pd(x + i + 4);
    lo = _mm256_fmadd_pd(a, a, lo);
    hi = _mm256_fmadd_pd(b, b, hi);
  }
  std::size_t r = n - i;
  if (r) {
    __m256d a = _mm256_maskload_pd(x + i, lane_mask(r >= 4 ? 4 : r));
    lo = _mm256_fmadd_pd(a, a, lo);
    if (r > 4) {
      __m256d b = _mm256_maskload_pd(x + i + 4, lane_mask(r - 4));
      hi = _mm256_fmadd_pd(b, b, hi);
    }
  }
  return fold8(lo, hi);
}

void avx2_adam_update(std::size_t n, double* w, const double* g, double* m,
                      double* v, double lr, double beta1, double beta2,
                      double eps, double inv_bc1, double inv_bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d bc1 = _mm256_set1_pd(inv_bc1);
  const __m256d bc2 = _mm256_set1_pd(inv_bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(omb1, gv));
    __m256d vv = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                 _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    __m256d den = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, bc2)), epsv);
    __m256d upd = _mm256_div_pd(_mm256_mul_pd(lrv, _mm256_mul_pd(mv, bc1)), den);
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), upd));
  }
  if (i < n) {
    __m256i tm = lane_mask(n - i);
    __m256d gv = _mm256_maskload_pd(g + i, tm);
    __m256d mv = _mm256_fmadd_pd(b1, _mm256_maskload_pd(m + i, tm), _mm256_mul_pd(omb1, gv));
    __m256d vv = _mm256_fmadd_pd(b2, _mm256_maskload_pd(v + i, tm),
                                 _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
    _mm256_maskstore_pd(m + i, tm, mv);
    _mm256_maskstore_pd(v + i, tm, vv);
    __m256d den = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, bc2)), epsv);
    __m256d upd = _mm256_div_pd(_mm256_mul_pd(lrv, _mm256_mul_pd(mv, bc1)), den);
    _mm256_maskstore_pd(w + i, tm, _mm256_sub_pd(_mm256_maskload_pd(w + i, tm), upd));
  }
}

}  // namespace dubstyle::kernels::detail
