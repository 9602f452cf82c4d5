#pragma once

// Numeric kernels behind the autodiff engine, the optimizer and the
// compositor. Every kernel has a scalar reference implementation plus
// AVX2 and AVX-512 variants selected at runtime; all lanes are required
// to produce bit-identical results. This works because each kernel pins
// its accumulation order:
//
//   gemm_nn / gemm_tn : per output element, a single fused multiply-add
//                       chain over k in ascending order.
//   gemm_nt, sum, dot,
//   l1_norm, l2_norm_sq: eight stride-accumulators (element i goes to
//                       accumulator i mod 8, in ascending order, fused
//                       multiply-add within a lane), folded pairwise as
//                       lane[l] += lane[l+4], lane[l] += lane[l+2],
//                       lane[0] += lane[1].
//   elementwise ops    : one IEEE operation per element, no reassociation.
//
// Transcendentals (sigmoid, tanh, log) call libm per element in every
// lane; they are a rounding-error share of the runtime next to the GEMMs.

#include <cstddef>

namespace dubstyle::kernels {

enum class Lane { scalar, avx2, avx512 };

const char* lane_name(Lane lane);
bool lane_supported(Lane lane);

// Highest supported lane by default; DUBSTYLE_LANE=scalar|avx2|avx512
// overrides at startup.
Lane active_lane();
void set_lane(Lane lane);  // throws std::runtime_error if unsupported

// Row-major GEMM family. C is accumulated into, so callers zero it first.
// gemm_nn: C[m x n] += A[m x k] * B[k x n]
// gemm_nt: C[m x n] += A[m x k] * B[n x k]^T
// gemm_tn: C[m x n] += A[k x m]^T * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);

// Elementwise.
void add(std::size_t n, const double* a, const double* b, double* out);
void sub(std::size_t n, const double* a, const double* b, double* out);
void mul(std::size_t n, const double* a, const double* b, double* out);
void scale(std::size_t n, double alpha, const double* x, double* out);
void axpy(std::size_t n, double alpha, const double* x, double* y);  // y += alpha*x
void madd(std::size_t n, const double* a, const double* b, double* out);  // out += a*b
void relu(std::size_t n, const double* x, double* out);
void relu_backward(std::size_t n, const double* x, const double* dy,
                   double* dx);  // dx += dy where x > 0

// Reductions (stride-8 accumulator contract above).
double sum(std::size_t n, const double* x);
double dot(std::size_t n, const double* a, const double* b);
double l1_norm(std::size_t n, const double* x);
double l2_norm_sq(std::size_t n, const double* x);

// Bias-corrected Adam update, fused. inv_bc1 = 1/(1-beta1^t),
// inv_bc2 = 1/(1-beta2^t) for the step being applied. Exact per-element
// sequence (pinned):
//   m = fma(beta1, m, (1-beta1)*g)
//   v = fma(beta2, v, (1-beta2)*(g*g))
//   w = w - (lr*(m*inv_bc1)) / (sqrt(v*inv_bc2) + eps)
void adam_update(std::size_t n, double* w, const double* g, double* m, double* v,
                 double lr, double beta1, double beta2, double eps,
                 double inv_bc1, double inv_bc2);

// Scalar in all lanes.
void sigmoid(std::size_t n, const double* x, double* out);
void tanh_act(std::size_t n, const double* x, double* out);
void log_nat(std::size_t n, const double* x, double* out);
void abs_val(std::size_t n, const double* x, double* out);

}  // namespace dubstyle::kernels
