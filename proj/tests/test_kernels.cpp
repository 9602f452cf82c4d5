#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dubstyle/kernels.hpp"
#include "dubstyle/rng.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using namespace dubstyle;

namespace {

std::vector<double> random_vec(std::size_t n, rng::Rng& r, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * r.gaussian();
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<kernels::Lane> supported_lanes() {
  std::vector<kernels::Lane> lanes;
  for (auto l : {kernels::Lane::scalar, kernels::Lane::avx2, kernels::Lane::avx512})
    if (kernels::lane_supported(l)) lanes.push_back(l);
  return lanes;
}

// Runs fn once per supported lane and checks every lane reproduces the
// scalar result bit-for-bit.
template <typename Fn>
void check_lanes(Fn fn) {
  const kernels::Lane before = kernels::active_lane();
  kernels::set_lane(kernels::Lane::scalar);
  const std::vector<double> ref = fn();
  for (auto lane : supported_lanes()) {
    kernels::set_lane(lane);
    INFO("lane = ", kernels::lane_name(lane));
    CHECK(bit_equal(fn(), ref));
  }
  kernels::set_lane(before);
}

// The documented reduction contract, reimplemented independently.
double pinned_sum(const std::vector<double>& x) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) acc[i & 7] += x[i];
  double s0 = acc[0] + acc[4], s1 = acc[1] + acc[5];
  double s2 = acc[2] + acc[6], s3 = acc[3] + acc[7];
  return (s0 + s2) + (s1 + s3);
}

}  // namespace

TEST_CASE("gemm lanes are bit-identical across shapes including tails") {
  rng::Rng r(42);
  const std::size_t shapes[][3] = {{1, 1, 1},   {1, 1, 7},   {2, 3, 5},
                                   {4, 8, 16},  {5, 17, 9},  {7, 33, 64},
                                   {16, 16, 16}, {13, 65, 31}, {16, 64, 129},
                                   {33, 20, 40}, {6, 100, 8}, {12, 261, 64}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    const auto a = random_vec(m * k, r);
    const auto bnn = random_vec(k * n, r);
    const auto bnt = random_vec(n * k, r);
    const auto atn = random_vec(k * m, r);
    const auto c0 = random_vec(m * n, r);  // accumulation semantics too
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    check_lanes([&] {
      auto c = c0;
      kernels::gemm_nn(m, n, k, a.data(), bnn.data(), c.data());
      return c;
    });
    check_lanes([&] {
      auto c = c0;
      kernels::gemm_nt(m, n, k, a.data(), bnt.data(), c.data());
      return c;
    });
    check_lanes([&] {
      auto c = c0;
      kernels::gemm_tn(m, n, k, atn.data(), bnn.data(), c.data());
      return c;
    });
  }
}

TEST_CASE("gemm matches a long-double reference within rounding") {
  rng::Rng r(7);
  const std::size_t m = 9, n = 21, k = 33;
  const auto a = random_vec(m * k, r);
  const auto b = random_vec(k * n, r);
  std::vector<double> c(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      CHECK(std::abs(c[i * n + j] - static_cast<double>(acc)) <=
            1e-13 * (1.0 + std::abs(static_cast<double>(acc))));
    }
}

TEST_CASE("gemm with k = 0 leaves the accumulator untouched") {
  std::vector<double> a, b;
  std::vector<double> c = {1.5, -2.5, 3.5, 4.5};
  const auto keep = c;
  kernels::gemm_nn(2, 2, 0, a.data(), b.data(), c.data());
  kernels::gemm_nt(2, 2, 0, a.data(), b.data(), c.data());
  kernels::gemm_tn(2, 2, 0, a.data(), b.data(), c.data());
  CHECK(bit_equal(c, keep));
}

TEST_CASE("elementwise kernels are bit-identical across lanes") {
  rng::Rng r(3);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 9u, 31u, 64u, 100u}) {
    const auto a = random_vec(n, r);
    const auto b = random_vec(n, r);
    CAPTURE(n);
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::add(n, a.data(), b.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::sub(n, a.data(), b.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::mul(n, a.data(), b.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::scale(n, -1.75, a.data(), o.data());
      return o;
    });
    check_lanes([&] {
      auto y = b;
      kernels::axpy(n, 0.37, a.data(), y.data());
      return y;
    });
    check_lanes([&] {
      auto o = b;
      kernels::madd(n, a.data(), b.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::relu(n, a.data(), o.data());
      return o;
    });
    check_lanes([&] {
      auto dx = b;
      kernels::relu_backward(n, a.data(), b.data(), dx.data());
      return dx;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::sigmoid(n, a.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::tanh_act(n, a.data(), o.data());
      return o;
    });
    check_lanes([&] {
      std::vector<double> o(n);
      kernels::abs_val(n, a.data(), o.data());
      return o;
    });
  }
}

TEST_CASE("reductions are bit-identical across lanes and honor the pinned order") {
  rng::Rng r(11);
  for (std::size_t n : {1u, 2u, 7u, 8u, 9u, 16u, 23u, 64u, 257u}) {
    const auto a = random_vec(n, r);
    const auto b = random_vec(n, r);
    CAPTURE(n);
    check_lanes([&] { return std::vector<double>{kernels::sum(n, a.data())}; });
    check_lanes(
        [&] { return std::vector<double>{kernels::dot(n, a.data(), b.data())}; });
    check_lanes([&] { return std::vector<double>{kernels::l1_norm(n, a.data())}; });
    check_lanes(
        [&] { return std::vector<double>{kernels::l2_norm_sq(n, a.data())}; });
  }

  // Cancellation-heavy data where the summation order is observable:
  // the result must equal the eight-accumulator pinned fold, not a plain
  // sequential sum.
  std::vector<double> x;
  rng::Rng r2(5);
  for (int i = 0; i < 40; ++i) {
    x.push_back(1e16 * r2.gaussian());
    x.push_back(r2.gaussian());
  }
  CHECK(kernels::sum(x.size(), x.data()) == pinned_sum(x));
}

TEST_CASE("relu_backward only accumulates where the input is positive") {
  std::vector<double> x = {-1.0, 0.0, 2.0, -0.0, 5.0};
  std::vector<double> dy = {10.0, 10.0, 10.0, 10.0, 10.0};
  std::vector<double> dx = {1.0, 1.0, 1.0, 1.0, 1.0};
  kernels::relu_backward(x.size(), x.data(), dy.data(), dx.data());
  CHECK(dx == std::vector<double>{1.0, 1.0, 11.0, 1.0, 11.0});
}

TEST_CASE("adam_update matches the documented per-element sequence") {
  rng::Rng r(17);
  const std::size_t n = 37;
  const double lr = 1e-3, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  auto w = random_vec(n, r);
  auto g = random_vec(n, r);
  auto m = random_vec(n, r, 0.1);
  auto v = random_vec(n, r, 0.01);
  for (auto& x : v) x = std::abs(x);
  const int t = 3;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(b1, t));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(b2, t));

  auto we = w, me = m, ve = v;
  for (std::size_t i = 0; i < n; ++i) {
    me[i] = std::fma(b1, me[i], (1.0 - b1) * g[i]);
    ve[i] = std::fma(b2, ve[i], (1.0 - b2) * (g[i] * g[i]));
    we[i] = we[i] - (lr * (me[i] * inv_bc1)) / (std::sqrt(ve[i] * inv_bc2) + eps);
  }

  check_lanes([&] {
    auto wk = w, mk = m, vk = v;
    kernels::adam_update(n, wk.data(), g.data(), mk.data(), vk.data(), lr, b1, b2,
                         eps, inv_bc1, inv_bc2);
    auto out = wk;
    out.insert(out.end(), mk.begin(), mk.end());
    out.insert(out.end(), vk.begin(), vk.end());
    return out;
  });

  std::vector<double> wk = w, mk = m, vk = v;
  kernels::adam_update(n, wk.data(), g.data(), mk.data(), vk.data(), lr, b1, b2,
                       eps, inv_bc1, inv_bc2);
  CHECK(bit_equal(wk, we));
  CHECK(bit_equal(mk, me));
  CHECK(bit_equal(vk, ve));
}

TEST_CASE("lane selection is explicit and reversible") {
  const auto before = kernels::active_lane();
  CHECK(kernels::lane_supported(kernels::Lane::scalar));
  kernels::set_lane(kernels::Lane::scalar);
  CHECK(kernels::active_lane() == kernels::Lane::scalar);
  kernels::set_lane(before);
  CHECK(kernels::active_lane() == before);
  CHECK(std::string(kernels::lane_name(kernels::Lane::scalar)) == "scalar");
}
