#pragma once

// Internal per-lane entry points. Only dispatch.cpp includes this.

#include <cstddef>

namespace dubstyle::kernels::detail {

#define DUBSTYLE_LANE_DECLS(prefix)                                               \
  void prefix##_gemm_nn(std::size_t, std::size_t, std::size_t, const double*,     \
                        const double*, double*);                                  \
  void prefix##_gemm_nt(std::size_t, std::size_t, std::size_t, const double*,     \
                        const double*, double*);                                  \
  void prefix##_gemm_tn(std::size_t, std::size_t, std::size_t, const double*,     \
                        const double*, double*);                                  \
  void prefix##_add(std::size_t, const double*, const double*, double*);          \
  void prefix##_sub(std::size_t, const double*, const double*, double*);          \
  void prefix##_mul(std::size_t, const double*, const double*, double*);          \
  void prefix##_scale(std::size_t, double, const double*, double*);               \
  void prefix##_axpy(std::size_t, double, const double*, double*);                \
  void prefix##_madd(std::size_t, const double*, const double*, double*);         \
  void prefix##_relu(std::size_t, const double*, double*);                        \
  void prefix##_relu_backward(std::size_t, const double*, const double*,          \
                              double*);                                           \
  double prefix##_sum(std::size_t, const double*);                                \
  double prefix##_dot(std::size_t, const double*, const double*);                 \
  double prefix##_l1_norm(std::size_t, const double*);                            \
  double prefix##_l2_norm_sq(std::size_t, const double*);                         \
  void prefix##_adam_update(std::size_t, double*, const double*, double*,         \
                            double*, double, double, double, double, double,      \
                            double);

DUBSTYLE_LANE_DECLS(scalar)
#if defined(__x86_64__) || defined(_M_X64)
DUBSTYLE_LANE_DECLS(avx2)
DUBSTYLE_LANE_DECLS(avx512)
#endif

#undef DUBSTYLE_LANE_DECLS

}  // namespace dubstyle::kernels::detail
