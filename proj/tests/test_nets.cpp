#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dubstyle/autodiff.hpp"
#include "dubstyle/nets.hpp"
#include "dubstyle/params.hpp"
#include "dubstyle/rng.hpp"

#include <cmath>
#include <cstring>
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

// Width-2n generator computing the exact identity: the first layer splits
// x into (relu(x), relu(-x)) and the output layer recombines them; every
// residual block contributes exactly zero.
nets::GeneratorWeights identity_generator(std::size_t dim) {
  rng::Rng r(0);
  auto g = nets::make_generator(dim, 2 * dim, dim, r);
  zero_all(g);
  for (std::size_t j = 0; j < dim; ++j) {
    g.l1_w.data[j * dim + j] = 1.0;              // row j: +e_j
    g.l1_w.data[(dim + j) * dim + j] = -1.0;     // row dim+j: -e_j
    g.out_w.data[j * 2 * dim + j] = 1.0;         // +relu(x)
    g.out_w.data[j * 2 * dim + dim + j] = -1.0;  // -relu(-x)
  }
  return g;
}

params::Window random_window(std::size_t steps, std::size_t dim, rng::Rng& r) {
  params::Window w;
  w.steps.resize(steps * params::kExpressionDim, 0.0);
  for (std::size_t s = 0; s < steps; ++s)
    for (std::size_t j = 0; j < dim; ++j)
      w.step(s)[j] = r.gaussian();
  return w;
}

}  // namespace

TEST_CASE("weight construction has the documented shapes and is deterministic") {
  rng::Rng r1(9), r2(9), r3(10);
  auto g1 = nets::make_generator(64, 1024, 64, r1);
  auto g2 = nets::make_generator(64, 1024, 64, r2);
  auto g3 = nets::make_generator(64, 1024, 64, r3);
  CHECK(g1.l1_w.rows == 1024);
  CHECK(g1.l1_w.cols == 64);
  CHECK(g1.lstm.wx.rows == 4096);
  CHECK(g1.lstm.wx.cols == 1024);
  CHECK(g1.lstm.wh.rows == 4096);
  CHECK(g1.lstm.wh.cols == 1024);
  CHECK(g1.lstm.b.rows == 1);
  CHECK(g1.lstm.b.cols == 4096);
  CHECK(g1.out_w.rows == 64);
  CHECK(g1.out_w.cols == 1024);
  CHECK(g1.l1_w.data == g2.l1_w.data);   // same seed, same weights
  CHECK(g1.l1_w.data != g3.l1_w.data);   // different seed, different weights

  auto d = nets::make_discriminator(64, 64, r1);
  CHECK(d.d1_w.rows == 64);
  CHECK(d.d2_w.rows == 32);
  CHECK(d.d3_w.rows == 16);
  CHECK(d.lstm.wx.rows == 64);  // 4H with H = 16
  CHECK(d.lstm.wx.cols == 16);
  CHECK(d.d4_w.rows == 8);
  CHECK(d.d5_w.rows == 4);
  CHECK(d.out_w.rows == 1);
  CHECK(d.out_w.cols == 4);
  CHECK_THROWS_AS(nets::make_discriminator(64, 24, r1), std::invalid_argument);
}

TEST_CASE("visit_tensors order is the stable serialization contract") {
  rng::Rng r(1);
  auto g = nets::make_generator(4, 8, 4, r);
  std::vector<std::string> names;
  nets::visit_tensors(g, [&](const std::string& n, nets::Tensor&) {
    names.push_back(n);
  });
  CHECK(names == std::vector<std::string>{"l1.w", "l1.b", "l2.w", "l2.b",
                                          "lstm.wx", "lstm.wh", "lstm.b",
                                          "l4.w", "l4.b", "out.w", "out.b"});
  auto d = nets::make_discriminator(4, 16, r);
  names.clear();
  nets::visit_tensors(d, [&](const std::string& n, nets::Tensor&) {
    names.push_back(n);
  });
  CHECK(names == std::vector<std::string>{"d1.w", "d1.b", "d2.w", "d2.b",
                                          "d3.w", "d3.b", "lstm.wx", "lstm.wh",
                                          "lstm.b", "d4.w", "d4.b", "d5.w",
                                          "d5.b", "out.w", "out.b"});
}

TEST_CASE("bind collects one leaf per tensor in visit order") {
  rng::Rng r(2);
  auto g = nets::make_generator(4, 8, 4, r);
  ad::Tape t;
  nets::LeafList leaves;
  auto bg = nets::bind(t, g, &leaves);
  REQUIRE(leaves.size() == 11);
  CHECK(leaves[0].first == &g.l1_w);
  CHECK(leaves[4].first == &g.lstm.wx);
  CHECK(leaves[10].first == &g.out_b);
  CHECK(leaves[0].second.data() == g.l1_w.data.data());  // views, not copies
  CHECK(bg.l1_w.id() == leaves[0].second.id());
}

TEST_CASE("zero-weight LSTM step has the closed-form gate values") {
  rng::Rng r(3);
  auto cell = nets::make_lstm(3, 2, r);
  for (auto* t : {&cell.wx, &cell.wh, &cell.b})
    std::fill(t->data.begin(), t->data.end(), 0.0);

  ad::Tape t;
  auto bc = nets::bind(t, cell);
  std::vector<double> xv = {0.7, -1.3, 0.2};
  std::vector<double> hv = {0.4, -0.9};
  std::vector<double> cv = {2.0, 2.0};
  Value x = t.constant(1, 3, xv.data());
  Value h = t.constant(1, 2, hv.data());
  Value c = t.constant(1, 2, cv.data());
  auto [h2, c2] = nets::lstm_step(bc, x, h, c);

  // All gates see zero pre-activation: i = f = o = 1/2, g = 0, so
  // c' = c/2 and h' = tanh(c')/2, independent of x and h.
  const double expect_c = 1.0;
  const double expect_h = 0.5 * std::tanh(1.0);
  for (int j = 0; j < 2; ++j) {
    CHECK(c2.data()[j] == doctest::Approx(expect_c).epsilon(1e-15));
    CHECK(h2.data()[j] == doctest::Approx(expect_h).epsilon(1e-15));
  }
}

TEST_CASE("the gate blocks are ordered input, forget, candidate, output") {
  rng::Rng r(4);
  const std::size_t H = 2;
  auto cell = nets::make_lstm(1, H, r);
  for (auto* t : {&cell.wx, &cell.wh})
    std::fill(t->data.begin(), t->data.end(), 0.0);
  const double bi = 1.0, bf = -1.0, bg = 0.5, bo = 2.0;
  for (std::size_t j = 0; j < H; ++j) {
    cell.b.data[0 * H + j] = bi;
    cell.b.data[1 * H + j] = bf;
    cell.b.data[2 * H + j] = bg;
    cell.b.data[3 * H + j] = bo;
  }

  ad::Tape t;
  auto bc = nets::bind(t, cell);
  std::vector<double> xv = {0.0};
  std::vector<double> hv = {0.0, 0.0};
  std::vector<double> cv = {0.25, 0.25};
  Value x = t.constant(1, 1, xv.data());
  Value h = t.constant(1, 2, hv.data());
  Value c = t.constant(1, 2, cv.data());
  auto [h2, c2] = nets::lstm_step(bc, x, h, c);

  auto sigma = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double expect_c = sigma(bf) * 0.25 + sigma(bi) * std::tanh(bg);
  const double expect_h = sigma(bo) * std::tanh(expect_c);
  // Any permutation of the gate blocks changes these values.
  CHECK(c2.data()[0] == doctest::Approx(expect_c).epsilon(1e-14));
  CHECK(h2.data()[0] == doctest::Approx(expect_h).epsilon(1e-14));
}

TEST_CASE("generator with zero weights maps every window to zeros") {
  rng::Rng r(5);
  auto g = nets::make_generator(64, 32, 64, r);
  zero_all(g);
  ad::Tape t;
  auto bg = nets::bind(t, g);
  auto w = random_window(7, 64, r);
  auto steps = nets::window_constants(t, w);
  auto outs = nets::generator_forward(bg, steps);
  REQUIRE(outs.size() == 7);
  for (const auto& o : outs) {
    REQUIRE(o.rows() == 1);
    REQUIRE(o.cols() == 64);
    for (std::size_t j = 0; j < 64; ++j) CHECK(o.data()[j] == 0.0);
  }
}

TEST_CASE("discriminator with zero weights scores exactly one half") {
  rng::Rng r(6);
  auto d = nets::make_discriminator(64, 16, r);
  zero_all(d);
  ad::Tape t;
  auto bd = nets::bind(t, d);
  auto w = random_window(7, 64, r);
  auto steps = nets::window_constants(t, w);
  auto scores = nets::discriminator_forward(bd, steps);
  REQUIRE(scores.size() == 7);  // one score per step
  for (const auto& s : scores) {
    REQUIRE(s.rows() == 1);
    REQUIRE(s.cols() == 1);
    CHECK(s.scalar() == 0.5);
  }
}

TEST_CASE("the split/recombine construction is an exact identity generator") {
  rng::Rng r(7);
  auto g = identity_generator(6);
  ad::Tape t;
  auto bg = nets::bind(t, g);
  auto w = random_window(7, 6, r);
  std::vector<Value> steps;
  for (std::size_t s = 0; s < 7; ++s)
    steps.push_back(t.constant(1, 6, w.step(s)));
  auto outs = nets::generator_forward(bg, steps);
  for (std::size_t s = 0; s < 7; ++s)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(outs[s].data()[j] == w.step(s)[j]);
}

TEST_CASE("batched forward equals per-window forwards bit for bit") {
  rng::Rng r(8);
  auto g = nets::make_generator(64, 32, 64, r);
  auto d = nets::make_discriminator(64, 16, r);
  std::vector<params::Window> ws;
  for (int i = 0; i < 3; ++i) ws.push_back(random_window(7, 64, r));
  std::vector<const params::Window*> batch = {&ws[0], &ws[1], &ws[2]};

  ad::Tape tb;
  auto bg_b = nets::bind(tb, g);
  auto bd_b = nets::bind(tb, d);
  auto steps_b = nets::window_batch_constants(tb, batch);
  auto gen_b = nets::generator_forward(bg_b, steps_b);
  auto dis_b = nets::discriminator_forward(bd_b, steps_b);
  REQUIRE(gen_b.size() == 7);
  REQUIRE(gen_b[0].rows() == 3);
  REQUIRE(dis_b[0].rows() == 3);

  for (std::size_t b = 0; b < ws.size(); ++b) {
    ad::Tape ts;
    auto bg_s = nets::bind(ts, g);
    auto bd_s = nets::bind(ts, d);
    auto steps_s = nets::window_constants(ts, ws[b]);
    auto gen_s = nets::generator_forward(bg_s, steps_s);
    auto dis_s = nets::discriminator_forward(bd_s, steps_s);
    for (std::size_t s = 0; s < 7; ++s) {
      CHECK(std::memcmp(gen_b[s].data() + b * 64, gen_s[s].data(),
                        64 * sizeof(double)) == 0);
      CHECK(dis_b[s].data()[b] == dis_s[s].scalar());
    }
  }
}

TEST_CASE("generator and discriminator gradients pass finite differences") {
  rng::Rng r(12);
  // Window data fixed inside the graph; leaves are the weights, assembled
  // into bound nets by hand so the check runs the production forwards.
  const std::size_t in = 4, width = 8, out = 4, steps = 3;
  std::vector<std::vector<double>> window(steps);
  for (auto& row : window) {
    row.resize(in);
    for (auto& x : row) x = r.gaussian();
  }

  auto leaf = [&](std::size_t rows, std::size_t cols) {
    ad::LeafSpec s;
    s.rows = rows;
    s.cols = cols;
    s.data.resize(rows * cols);
    for (auto& x : s.data) x = r.uniform(-0.6, 0.6);
    return s;
  };

  std::vector<ad::LeafSpec> gl = {
      leaf(width, in),        leaf(1, width),      // l1
      leaf(width, width),     leaf(1, width),      // l2
      leaf(4 * width, width), leaf(4 * width, width), leaf(1, 4 * width),  // lstm
      leaf(width, width),     leaf(1, width),      // l4
      leaf(out, width),       leaf(1, out)};       // out
  auto gen_graph = [&](ad::Tape& t, const std::vector<Value>& l) {
    nets::BoundGenerator bg;
    bg.in_dim = in;
    bg.width = width;
    bg.out_dim = out;
    bg.l1_w = l[0]; bg.l1_b = l[1];
    bg.l2_w = l[2]; bg.l2_b = l[3];
    bg.lstm.input_dim = width;
    bg.lstm.hidden = width;
    bg.lstm.wx = l[4]; bg.lstm.wh = l[5]; bg.lstm.b = l[6];
    bg.l4_w = l[7]; bg.l4_b = l[8];
    bg.out_w = l[9]; bg.out_b = l[10];
    std::vector<Value> xs;
    for (const auto& row : window) xs.push_back(t.constant(1, in, row.data()));
    auto outs = nets::generator_forward(bg, xs);
    Value acc = ad::sum(ad::mul(outs[0], outs[0]));
    for (std::size_t s = 1; s < outs.size(); ++s)
      acc = ad::add(acc, ad::sum(ad::mul(outs[s], outs[s])));
    return acc;
  };
  auto gen_rep = ad::finite_diff_check(gen_graph, gl, 1e-5, 1e-5, 160);
  CAPTURE(gen_rep.max_rel_err);
  CHECK(gen_rep.pass);

  const std::size_t base = 16, H = 4;
  std::vector<ad::LeafSpec> dl = {
      leaf(base, in),      leaf(1, base),
      leaf(base / 2, base), leaf(1, base / 2),
      leaf(base / 4, base / 2), leaf(1, base / 4),
      leaf(4 * H, base / 4), leaf(4 * H, H), leaf(1, 4 * H),
      leaf(base / 8, base / 4), leaf(1, base / 8),
      leaf(base / 16, base / 8), leaf(1, base / 16),
      leaf(1, base / 16),  leaf(1, 1)};
  auto disc_graph = [&](ad::Tape& t, const std::vector<Value>& l) {
    nets::BoundDiscriminator bd;
    bd.in_dim = in;
    bd.base_width = base;
    bd.d1_w = l[0]; bd.d1_b = l[1];
    bd.d2_w = l[2]; bd.d2_b = l[3];
    bd.d3_w = l[4]; bd.d3_b = l[5];
    bd.lstm.input_dim = base / 4;
    bd.lstm.hidden = H;
    bd.lstm.wx = l[6]; bd.lstm.wh = l[7]; bd.lstm.b = l[8];
    bd.d4_w = l[9]; bd.d4_b = l[10];
    bd.d5_w = l[11]; bd.d5_b = l[12];
    bd.out_w = l[13]; bd.out_b = l[14];
    std::vector<Value> xs;
    for (const auto& row : window) xs.push_back(t.constant(1, in, row.data()));
    auto scores = nets::discriminator_forward(bd, xs);
    Value acc = ad::log_nat(scores[0]);
    for (std::size_t s = 1; s < scores.size(); ++s)
      acc = ad::add(acc, ad::log_nat(scores[s]));
    return ad::sum(acc);
  };
  auto disc_rep = ad::finite_diff_check(disc_graph, dl, 1e-5, 1e-5, 160);
  CAPTURE(disc_rep.max_rel_err);
  CHECK(disc_rep.pass);
}

TEST_CASE("window plumbing validates step dimensions") {
  ad::Tape t;
  params::Window w;
  w.steps.resize(7 * params::kExpressionDim, 0.5);
  auto vals = nets::window_constants(t, w);
  REQUIRE(vals.size() == 7);
  CHECK(vals[0].rows() == 1);
  CHECK(vals[0].cols() == 64);

  std::vector<const params::Window*> empty;
  CHECK_THROWS_AS(nets::window_batch_constants(t, empty), std::invalid_argument);
}
