#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dubstyle/autodiff.hpp"
#include "dubstyle/losses.hpp"
#include "dubstyle/nets.hpp"
#include "dubstyle/params.hpp"
#include "dubstyle/rng.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

using namespace dubstyle;
using ad::Value;

namespace {

void zero_all(nets::GeneratorWeights& g) {
  nets::visit_tensors(g, [](const std::string&, nets::Tensor& t) {
    std::fill(t.data.begin(), t.data.end(), 0.0);
  });
}

void zero_all(nets::DiscriminatorWeights& d) {
  nets::visit_tensors(d, [](const std::string&, nets::Tensor& t) {
    std::fill(t.data.begin(), t.data.end(), 0.0);
  });
}

// Splits x into (relu(x), relu(-x)) in the first layer and recombines in
// the last; all residual blocks are zero, so the map is exactly x -> x.
nets::GeneratorWeights identity_generator(std::size_t dim) {
  rng::Rng r(0);
  auto g = nets::make_generator(dim, 2 * dim, dim, r);
  zero_all(g);
  for (std::size_t j = 0; j < dim; ++j) {
    g.l1_w.data[j * dim + j] = 1.0;
    g.l1_w.data[(dim + j) * dim + j] = -1.0;
    g.out_w.data[j * 2 * dim + j] = 1.0;
    g.out_w.data[j * 2 * dim + dim + j] = -1.0;
  }
  return g;
}

params::Window random_window(std::size_t steps, rng::Rng& r) {
  params::Window w;
  w.steps.resize(steps * params::kExpressionDim);
  for (auto& x : w.steps) x = r.gaussian();
  return w;
}

// Constant-score lists: `steps` entries, each batch x 1 filled with v.
std::vector<Value> const_scores(ad::Tape& t, std::size_t steps,
                                std::size_t batch, double v) {
  std::vector<Value> out;
  std::vector<double> col(batch, v);
  for (std::size_t s = 0; s < steps; ++s)
    out.push_back(t.constant(batch, 1, col.data()));
  return out;
}

}  // namespace

TEST_CASE("cycle loss through exact identity generators is exactly zero") {
  rng::Rng r(21);
  auto g_st = identity_generator(params::kExpressionDim);
  auto g_ts = identity_generator(params::kExpressionDim);
  auto s = random_window(7, r);
  auto t = random_window(7, r);

  ad::Tape tape;
  auto b_st = nets::bind(tape, g_st);
  auto b_ts = nets::bind(tape, g_ts);
  Value cc = losses::cycle_loss(tape, s, t, b_st, b_ts);
  CHECK(cc.scalar() == 0.0);
}

TEST_CASE("cycle loss through zero generators is the plain l1 mass") {
  rng::Rng r(22);
  auto g = nets::make_generator(64, 16, 64, r);
  zero_all(g);
  auto s = random_window(7, r);
  auto t = random_window(7, r);

  long double expect = 0.0L;
  for (double x : s.steps) expect += std::fabs(x);
  for (double x : t.steps) expect += std::fabs(x);

  ad::Tape tape;
  auto b = nets::bind(tape, g);
  Value cc = losses::cycle_loss(tape, s, t, b, b);
  CHECK(cc.scalar() ==
        doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
}

TEST_CASE("adversarial objective at uniform half scores is 4 ln(1/2)") {
  rng::Rng r(23);
  auto g = nets::make_generator(64, 16, 64, r);  // arbitrary weights
  auto d_s = nets::make_discriminator(64, 16, r);
  auto d_t = nets::make_discriminator(64, 16, r);
  zero_all(d_s);
  zero_all(d_t);
  auto s = random_window(7, r);
  auto t = random_window(7, r);

  ad::Tape tape;
  auto bg = nets::bind(tape, g);
  auto bd_s = nets::bind(tape, d_s);
  auto bd_t = nets::bind(tape, d_t);
  Value adv = losses::adversarial_loss(tape, s, t, bg, bg, bd_s, bd_t);
  CHECK(adv.scalar() ==
        doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("adversarial objective rewards a confident discriminator") {
  ad::Tape t;
  Value at_half = losses::adversarial_objective(
      const_scores(t, 7, 2, 0.5), const_scores(t, 7, 2, 0.5),
      const_scores(t, 7, 2, 0.5), const_scores(t, 7, 2, 0.5));
  Value confident = losses::adversarial_objective(
      const_scores(t, 7, 2, 0.9), const_scores(t, 7, 2, 0.1),
      const_scores(t, 7, 2, 0.9), const_scores(t, 7, 2, 0.1));
  CHECK(confident.scalar() ==
        doctest::Approx(4.0 * std::log(0.9)).epsilon(1e-12));
  CHECK(confident.scalar() > at_half.scalar());
}

TEST_CASE("score clamping keeps the logs finite at 0 and 1") {
  ad::Tape t;
  Value at_zero = losses::mean_log_score(const_scores(t, 7, 1, 0.0));
  CHECK(at_zero.scalar() ==
        doctest::Approx(std::log(losses::kScoreClampEps)).epsilon(1e-12));
  Value at_one = losses::mean_log_one_minus_score(const_scores(t, 7, 1, 1.0));
  // Mirror the graph's arithmetic: clamp to 1-eps, mean over the 7 steps,
  // then 1-(mean). The subtraction amplifies the mean's rounding, so the
  // oracle must follow the same operation order rather than assume
  // log(eps) exactly.
  const double clamped_one = 1.0 - losses::kScoreClampEps;
  double acc = clamped_one;
  for (int i = 1; i < 7; ++i) acc += clamped_one;
  const double step_mean = acc * (1.0 / 7.0);
  const double one_minus = 1.0 + (-step_mean);
  CHECK(at_one.scalar() ==
        doctest::Approx(std::log(one_minus)).epsilon(1e-12));
  CHECK(std::isfinite(at_zero.scalar()));
  CHECK(std::isfinite(at_one.scalar()));
}

TEST_CASE("generator adversarial forms agree in magnitude at half scores") {
  ad::Tape t;
  Value sat = losses::generator_adversarial(const_scores(t, 7, 1, 0.5),
                                            const_scores(t, 7, 1, 0.5), false);
  Value ns = losses::generator_adversarial(const_scores(t, 7, 1, 0.5),
                                           const_scores(t, 7, 1, 0.5), true);
  CHECK(sat.scalar() == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(ns.scalar() == doctest::Approx(-2.0 * std::log(0.5)).epsilon(1e-12));
  // Both decrease as the fakes get more convincing.
  Value sat_hi = losses::generator_adversarial(const_scores(t, 7, 1, 0.9),
                                               const_scores(t, 7, 1, 0.9), false);
  Value ns_hi = losses::generator_adversarial(const_scores(t, 7, 1, 0.9),
                                              const_scores(t, 7, 1, 0.9), true);
  CHECK(sat_hi.scalar() < sat.scalar());
  CHECK(ns_hi.scalar() < ns.scalar());
}

TEST_CASE("mouth cosine similarity has the defining metric properties") {
  rng::Rng r(24);
  auto m = params::MouthIndexSet::default_set();
  auto a = random_window(7, r);

  params::Window scaled = a;
  for (auto& x : scaled.steps) x *= 3.0;
  params::Window negated = a;
  for (auto& x : negated.steps) x = -x;

  ad::Tape tape;
  CHECK(losses::cosine_mouth_similarity(tape, a, a, m).scalar() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(losses::cosine_mouth_similarity(tape, a, scaled, m).scalar() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(losses::cosine_mouth_similarity(tape, a, negated, m).scalar() ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("degenerate mouth steps contribute zero and raise the flag") {
  rng::Rng r(25);
  auto m = params::MouthIndexSet::default_set();
  auto a = random_window(7, r);
  params::Window hollow = random_window(7, r);
  for (std::size_t s = 0; s < 7; ++s)
    for (std::size_t idx : m.indices()) hollow.step(s)[idx] = 0.0;

  ad::Tape tape;
  bool degenerate = false;
  Value sim = losses::cosine_mouth_similarity(tape, a, hollow, m, &degenerate);
  CHECK(degenerate);
  CHECK(sim.scalar() == 0.0);

  bool clean = false;
  losses::cosine_mouth_similarity(tape, a, a, m, &clean);
  CHECK_FALSE(clean);
}

TEST_CASE("mouth expression loss against zero generators is exactly two") {
  rng::Rng r(26);
  auto g = nets::make_generator(64, 16, 64, r);
  zero_all(g);
  auto m = params::MouthIndexSet::default_set();
  auto s = random_window(7, r);
  auto t = random_window(7, r);

  ad::Tape tape;
  auto b = nets::bind(tape, g);
  bool degenerate = false;
  Value me = losses::mouth_expression_loss(tape, s, t, b, b, m, &degenerate);
  CHECK(degenerate);  // every fake step has a zero mouth vector
  CHECK(me.scalar() == 2.0);
}

TEST_CASE("a batch of one reproduces the single-window losses exactly") {
  rng::Rng r(27);
  auto g_st = nets::make_generator(64, 16, 64, r);
  auto g_ts = nets::make_generator(64, 16, 64, r);
  auto s = random_window(7, r);
  auto t = random_window(7, r);

  ad::Tape single;
  auto s_st = nets::bind(single, g_st);
  auto s_ts = nets::bind(single, g_ts);
  const double cc_single = losses::cycle_loss(single, s, t, s_st, s_ts).scalar();

  ad::Tape batched;
  auto b_st = nets::bind(batched, g_st);
  auto b_ts = nets::bind(batched, g_ts);
  std::vector<const params::Window*> sb = {&s};
  std::vector<const params::Window*> tb = {&t};
  auto s_steps = nets::window_batch_constants(batched, sb);
  auto t_steps = nets::window_batch_constants(batched, tb);
  auto cyc_s =
      nets::generator_forward(b_ts, nets::generator_forward(b_st, s_steps));
  auto cyc_t =
      nets::generator_forward(b_st, nets::generator_forward(b_ts, t_steps));
  Value cc_batched = ad::add(losses::mean_window_l1(cyc_s, s_steps),
                             losses::mean_window_l1(cyc_t, t_steps));
  CHECK(cc_batched.scalar() == cc_single);
}

TEST_CASE("total loss weighs the terms identically in graph and plain form") {
  losses::LossWeights w;
  CHECK(w.lambda_cc == 10.0);
  CHECK(w.lambda_adv == 1.0);
  CHECK(w.lambda_me == 5.0);

  const double cc = 0.37, adv = -1.25, me = 0.8;
  ad::Tape t;
  Value total = losses::total_loss(t.constant_scalar(cc), t.constant_scalar(adv),
                                   t.constant_scalar(me), w);
  CHECK(total.scalar() == losses::total_loss(cc, adv, me, w));

  losses::LossWeights custom{2.0, 0.5, 7.0};
  Value total2 = losses::total_loss(t.constant_scalar(cc), t.constant_scalar(adv),
                                    t.constant_scalar(me), custom);
  CHECK(total2.scalar() == losses::total_loss(cc, adv, me, custom));

  const double nan = std::nan("");
  CHECK_THROWS_AS(losses::total_loss(nan, adv, me, w), std::runtime_error);
}

TEST_CASE("plain-array mouth cosine matches the graph policy") {
  const std::size_t n = params::MouthIndexSet::kCount;
  std::vector<double> a = {0.3, -0.7, 1.2, 0.05, -0.4, 0.9, -1.1, 0.6, 0.2, -0.8};
  std::vector<double> b(a);
  CHECK(losses::mouth_cosine(a.data(), b.data(), n) ==
        doctest::Approx(1.0).epsilon(1e-15));
  for (auto& x : b) x = -2.0 * x;
  CHECK(losses::mouth_cosine(a.data(), b.data(), n) ==
        doctest::Approx(-1.0).epsilon(1e-15));

  std::vector<double> zeros(n, 0.0);
  bool degenerate = false;
  CHECK(losses::mouth_cosine(a.data(), zeros.data(), n, &degenerate) == 0.0);
  CHECK(degenerate);
}

TEST_CASE("loss building blocks validate their inputs") {
  ad::Tape t;
  std::vector<Value> empty;
  CHECK_THROWS_WITH_AS(losses::mean_window_l1(empty, empty),
                       doctest::Contains("mean_window_l1"),
                       std::invalid_argument);

  auto a = const_scores(t, 3, 2, 0.5);
  auto b = const_scores(t, 4, 2, 0.5);
  CHECK_THROWS_AS(losses::mean_window_l1(a, b), std::invalid_argument);

  std::vector<double> wide(4, 0.5);
  std::vector<Value> bad_shape = {t.constant(2, 2, wide.data())};
  CHECK_THROWS_AS(losses::mean_log_score(bad_shape), std::invalid_argument);

  std::vector<double> inf_score = {std::numeric_limits<double>::infinity()};
  std::vector<Value> inf_list = {t.constant(1, 1, inf_score.data())};
  CHECK_THROWS_AS(losses::mean_log_score(inf_list), std::runtime_error);
}
