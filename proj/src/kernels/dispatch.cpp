#include "dubstyle/kernels.hpp"

#include "lanes.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace dubstyle::kernels {

namespace {

struct LaneTable {
  void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const double*,
                  const double*, double*);
  void (*add)(std::size_t, const double*, const double*, double*);
  void (*sub)(std::size_t, const double*, const double*, double*);
  void (*mul)(std::size_t, const double*, const double*, double*);
  void (*scale)(std::size_t, double, const double*, double*);
  void (*axpy)(std::size_t, double, const double*, double*);
  void (*madd)(std::size_t, const double*, const double*, double*);
  void (*relu)(std::size_t, const double*, double*);
  void (*relu_backward)(std::size_t, const double*, const double*, double*);
  double (*sum)(std::size_t, const double*);
  double (*dot)(std::size_t, const double*, const double*);
  double (*l1_norm)(std::size_t, const double*);
  double (*l2_norm_sq)(std::size_t, const double*);
  void (*adam_update)(std::size_t, double*, const double*, double*, double*,
                      double, double, double, double, double, double);
};

#define DUBSTYLE_LANE_TABLE(prefix)                                         \
  {                                                                         \
      detail::prefix##_gemm_nn,     detail::prefix##_gemm_nt,               \
      detail::prefix##_gemm_tn,     detail::prefix##_add,                   \
      detail::prefix##_sub,         detail::prefix##_mul,                   \
      detail::prefix##_scale,       detail::prefix##_axpy,                  \
      detail::prefix##_madd,        detail::prefix##_relu,                  \
      detail::prefix##_relu_backward, detail::prefix##_sum,                 \
      detail::prefix##_dot,         detail::prefix##_l1_norm,               \
      detail::prefix##_l2_norm_sq,  detail::prefix##_adam_update,           \
  }

constexpr LaneTable kScalarTable = DUBSTYLE_LANE_TABLE(scalar);
#if defined(__x86_64__) || defined(_M_X64)
constexpr LaneTable kAvx2Table = DUBSTYLE_LANE_TABLE(avx2);
constexpr LaneTable kAvx512Table = DUBSTYLE_LANE_TABLE(avx512);
#endif

#undef DUBSTYLE_LANE_TABLE

const LaneTable* table_for(Lane lane) {
  switch (lane) {
    case Lane::scalar:
      return &kScalarTable;
#if defined(__x86_64__) || defined(_M_X64)
    case Lane::avx2:
      return &kAvx2Table;
    case Lane::avx512:
      return &kAvx512Table;
#else
    case Lane::avx2:
    case Lane::avx512:
      return nullptr;
#endif
  }
  return nullptr;
}

Lane detect_lane() {
  if (const char* env = std::getenv("DUBSTYLE_LANE")) {
    std::string want(env);
    for (Lane lane : {Lane::scalar, Lane::avx2, Lane::avx512}) {
      if (want == lane_name(lane)) {
        if (!lane_supported(lane))
          throw std::runtime_error("DUBSTYLE_LANE=" + want +
                                   " not supported on this CPU");
        return lane;
      }
    }
    throw std::runtime_error("DUBSTYLE_LANE=" + want +
                             " is not one of scalar|avx2|avx512");
  }
  if (lane_supported(Lane::avx512)) return Lane::avx512;
  if (lane_supported(Lane::avx2)) return Lane::avx2;
  return Lane::scalar;
}

struct Active {
  Lane lane;
  const LaneTable* table;
  Active() : lane(detect_lane()), table(table_for(lane)) {}
};

Active& active() {
  static Active state;
  return state;
}

}  // namespace

const char* lane_name(Lane lane) {
  switch (lane) {
    case Lane::scalar:
      return "scalar";
    case Lane::avx2:
      return "avx2";
    case Lane::avx512:
      return "avx512";
  }
  return "?";
}

bool lane_supported(Lane lane) {
  switch (lane) {
    case Lane::scalar:
      return true;
#if defined(__x86_64__) || defined(_M_X64)
    case Lane::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Lane::avx512:
      return __builtin_cpu_supports("avx512f");
#else
    case Lane::avx2:
    case Lane::avx512:
      return false;
#endif
  }
  return false;
}

Lane active_lane() { return active().lane; }

void set_lane(Lane lane) {
  if (!lane_supported(lane))
    throw std::runtime_error(std::string("kernel lane ") + lane_name(lane) +
                             " not supported on this CPU");
  active().lane = lane;
  active().table = table_for(lane);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  active().table->gemm_nn(m, n, k, a, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  active().table->gemm_nt(m, n, k, a, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  active().table->gemm_tn(m, n, k, a, b, c);
}

void add(std::size_t n, const double* a, const double* b, double* out) {
  active().table->add(n, a, b, out);
}

void sub(std::size_t n, const double* a, const double* b, double* out) {
  active().table->sub(n, a, b, out);
}

void mul(std::size_t n, const double* a, const double* b, double* out) {
  active().table->mul(n, a, b, out);
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  active().table->scale(n, alpha, x, out);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active().table->axpy(n, alpha, x, y);
}

void madd(std::size_t n, const double* a, const double* b, double* out) {
  active().table->madd(n, a, b, out);
}

void relu(std::size_t n, const double* x, double* out) {
  active().table->relu(n, x, out);
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  active().table->relu_backward(n, x, dy, dx);
}

double sum(std::size_t n, const double* x) { return active().table->sum(n, x); }

double dot(std::size_t n, const double* a, const double* b) {
  return active().table->dot(n, a, b);
}

double l1_norm(std::size_t n, const double* x) {
  return active().table->l1_norm(n, x);
}

double l2_norm_sq(std::size_t n, const double* x) {
  return active().table->l2_norm_sq(n, x);
}

void adam_update(std::size_t n, double* w, const double* g, double* m, double* v,
                 double lr, double beta1, double beta2, double eps,
                 double inv_bc1, double inv_bc2) {
  active().table->adam_update(n, w, g, m, v, lr, beta1, beta2, eps, inv_bc1,
                              inv_bc2);
}

// Transcendentals go through libm in every lane so lane choice can never
// change a result; vectorizing them is not worth carrying a polynomial
// implementation next to GEMM-bound training.
void sigmoid(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void tanh_act(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void log_nat(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void abs_val(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(x[i]);
}

}  // namespace dubstyle::kernels
