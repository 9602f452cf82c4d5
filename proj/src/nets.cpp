#include "dubstyle/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dubstyle::nets {

namespace {

void glorot_fill(Tensor& w, rng::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  for (double& x : w.data) x = rng.uniform(-limit, limit);
}

[[noreturn]] void dim_error(const char* who, const char* what, std::size_t got,
                            std::size_t want) {
  throw std::invalid_argument(std::string(who) + ": " + what + " is " +
                              std::to_string(got) + ", expected " +
                              std::to_string(want));
}

ad::Value dense(const ad::Value& x, const ad::Value& w, const ad::Value& b) {
  return ad::add_rowvec(ad::matmul_nt(x, w), b);
}

}  // namespace

LstmCell make_lstm(std::size_t input_dim, std::size_t hidden, rng::Rng& rng) {
  if (input_dim == 0 || hidden == 0)
    throw std::invalid_argument("make_lstm: zero dimension");
  LstmCell c;
  c.input_dim = input_dim;
  c.hidden = hidden;
  c.wx = Tensor(4 * hidden, input_dim);
  c.wh = Tensor(4 * hidden, hidden);
  c.b = Tensor(1, 4 * hidden);
  glorot_fill(c.wx, rng);
  glorot_fill(c.wh, rng);
  return c;
}

GeneratorWeights make_generator(std::size_t in_dim, std::size_t width,
                                std::size_t out_dim, rng::Rng& rng) {
  if (in_dim == 0 || width == 0 || out_dim == 0)
    throw std::invalid_argument("make_generator: zero dimension");
  GeneratorWeights g;
  g.in_dim = in_dim;
  g.width = width;
  g.out_dim = out_dim;
  g.l1_w = Tensor(width, in_dim);
  g.l1_b = Tensor(1, width);
  g.l2_w = Tensor(width, width);
  g.l2_b = Tensor(1, width);
  glorot_fill(g.l1_w, rng);
  glorot_fill(g.l2_w, rng);
  g.lstm = make_lstm(width, width, rng);
  g.l4_w = Tensor(width, width);
  g.l4_b = Tensor(1, width);
  g.out_w = Tensor(out_dim, width);
  g.out_b = Tensor(1, out_dim);
  glorot_fill(g.l4_w, rng);
  glorot_fill(g.out_w, rng);
  return g;
}

DiscriminatorWeights make_discriminator(std::size_t in_dim,
                                        std::size_t base_width, rng::Rng& rng) {
  if (in_dim == 0) throw std::invalid_argument("make_discriminator: zero in_dim");
  if (base_width < 16 || base_width % 16 != 0)
    throw std::invalid_argument(
        "make_discriminator: base width " + std::to_string(base_width) +
        " must be a positive multiple of 16 for the halving chain");
  const std::size_t b = base_width;
  DiscriminatorWeights d;
  d.in_dim = in_dim;
  d.base_width = b;
  d.d1_w = Tensor(b, in_dim);
  d.d1_b = Tensor(1, b);
  d.d2_w = Tensor(b / 2, b);
  d.d2_b = Tensor(1, b / 2);
  d.d3_w = Tensor(b / 4, b / 2);
  d.d3_b = Tensor(1, b / 4);
  glorot_fill(d.d1_w, rng);
  glorot_fill(d.d2_w, rng);
  glorot_fill(d.d3_w, rng);
  d.lstm = make_lstm(b / 4, b / 4, rng);
  d.d4_w = Tensor(b / 8, b / 4);
  d.d4_b = Tensor(1, b / 8);
  d.d5_w = Tensor(b / 16, b / 8);
  d.d5_b = Tensor(1, b / 16);
  d.out_w = Tensor(1, b / 16);
  d.out_b = Tensor(1, 1);
  glorot_fill(d.d4_w, rng);
  glorot_fill(d.d5_w, rng);
  glorot_fill(d.out_w, rng);
  return d;
}

void visit_tensors(LstmCell& c, const std::string& prefix,
                   const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".wx", c.wx);
  fn(prefix + ".wh", c.wh);
  fn(prefix + ".b", c.b);
}

void visit_tensors(GeneratorWeights& g,
                   const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("l1.w", g.l1_w);
  fn("l1.b", g.l1_b);
  fn("l2.w", g.l2_w);
  fn("l2.b", g.l2_b);
  visit_tensors(g.lstm, "lstm", fn);
  fn("l4.w", g.l4_w);
  fn("l4.b", g.l4_b);
  fn("out.w", g.out_w);
  fn("out.b", g.out_b);
}

void visit_tensors(DiscriminatorWeights& d,
                   const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("d1.w", d.d1_w);
  fn("d1.b", d.d1_b);
  fn("d2.w", d.d2_w);
  fn("d2.b", d.d2_b);
  fn("d3.w", d.d3_w);
  fn("d3.b", d.d3_b);
  visit_tensors(d.lstm, "lstm", fn);
  fn("d4.w", d.d4_w);
  fn("d4.b", d.d4_b);
  fn("d5.w", d.d5_w);
  fn("d5.b", d.d5_b);
  fn("out.w", d.out_w);
  fn("out.b", d.out_b);
}

namespace {

ad::Value bind_leaf(ad::Tape& t, Tensor& w, LeafList* leaves) {
  ad::Value v = t.leaf(w.rows, w.cols, w.data.data());
  if (leaves != nullptr) leaves->emplace_back(&w, v);
  return v;
}

}  // namespace

BoundLstm bind(ad::Tape& t, LstmCell& c, LeafList* leaves) {
  BoundLstm b;
  b.input_dim = c.input_dim;
  b.hidden = c.hidden;
  b.wx = bind_leaf(t, c.wx, leaves);
  b.wh = bind_leaf(t, c.wh, leaves);
  b.b = bind_leaf(t, c.b, leaves);
  return b;
}

BoundGenerator bind(ad::Tape& t, GeneratorWeights& g, LeafList* leaves) {
  BoundGenerator b;
  b.in_dim = g.in_dim;
  b.width = g.width;
  b.out_dim = g.out_dim;
  b.l1_w = bind_leaf(t, g.l1_w, leaves);
  b.l1_b = bind_leaf(t, g.l1_b, leaves);
  b.l2_w = bind_leaf(t, g.l2_w, leaves);
  b.l2_b = bind_leaf(t, g.l2_b, leaves);
  b.lstm = bind(t, g.lstm, leaves);
  b.l4_w = bind_leaf(t, g.l4_w, leaves);
  b.l4_b = bind_leaf(t, g.l4_b, leaves);
  b.out_w = bind_leaf(t, g.out_w, leaves);
  b.out_b = bind_leaf(t, g.out_b, leaves);
  return b;
}

BoundDiscriminator bind(ad::Tape& t, DiscriminatorWeights& d, LeafList* leaves) {
  BoundDiscriminator b;
  b.in_dim = d.in_dim;
  b.base_width = d.base_width;
  b.d1_w = bind_leaf(t, d.d1_w, leaves);
  b.d1_b = bind_leaf(t, d.d1_b, leaves);
  b.d2_w = bind_leaf(t, d.d2_w, leaves);
  b.d2_b = bind_leaf(t, d.d2_b, leaves);
  b.d3_w = bind_leaf(t, d.d3_w, leaves);
  b.d3_b = bind_leaf(t, d.d3_b, leaves);
  b.lstm = bind(t, d.lstm, leaves);
  b.d4_w = bind_leaf(t, d.d4_w, leaves);
  b.d4_b = bind_leaf(t, d.d4_b, leaves);
  b.d5_w = bind_leaf(t, d.d5_w, leaves);
  b.d5_b = bind_leaf(t, d.d5_b, leaves);
  b.out_w = bind_leaf(t, d.out_w, leaves);
  b.out_b = bind_leaf(t, d.out_b, leaves);
  return b;
}

std::pair<ad::Value, ad::Value> lstm_step(const BoundLstm& cell,
                                          const ad::Value& x, const ad::Value& h,
                                          const ad::Value& c) {
  if (x.cols() != cell.input_dim)
    dim_error("lstm_step", "input dimension", x.cols(), cell.input_dim);
  if (h.cols() != cell.hidden)
    dim_error("lstm_step", "hidden state dimension", h.cols(), cell.hidden);
  if (c.cols() != cell.hidden)
    dim_error("lstm_step", "cell state dimension", c.cols(), cell.hidden);
  const std::size_t H = cell.hidden;
  ad::Value z = ad::add_rowvec(
      ad::add(ad::matmul_nt(x, cell.wx), ad::matmul_nt(h, cell.wh)), cell.b);
  ad::Value gi = ad::sigmoid(ad::slice_cols(z, 0, H));
  ad::Value gf = ad::sigmoid(ad::slice_cols(z, H, 2 * H));
  ad::Value gg = ad::tanh_act(ad::slice_cols(z, 2 * H, 3 * H));
  ad::Value go = ad::sigmoid(ad::slice_cols(z, 3 * H, 4 * H));
  ad::Value c_next = ad::add(ad::mul(gf, c), ad::mul(gi, gg));
  ad::Value h_next = ad::mul(go, ad::tanh_act(c_next));
  return {h_next, c_next};
}

std::vector<ad::Value> generator_forward(const BoundGenerator& g,
                                         const std::vector<ad::Value>& steps) {
  if (steps.empty())
    throw std::invalid_argument("generator_forward: empty window");
  for (const ad::Value& s : steps)
    if (s.cols() != g.in_dim)
      dim_error("generator_forward", "step dimension", s.cols(), g.in_dim);

  ad::Tape& t = steps[0].tape();
  const std::size_t batch = steps[0].rows();
  const std::vector<double> zeros(batch * g.width, 0.0);
  ad::Value h = t.constant(batch, g.width, zeros.data());
  ad::Value c = t.constant(batch, g.width, zeros.data());

  std::vector<ad::Value> out;
  out.reserve(steps.size());
  for (const ad::Value& x : steps) {
    ad::Value x1 = ad::relu(dense(x, g.l1_w, g.l1_b));
    ad::Value x2 = ad::add(x1, ad::relu(dense(x1, g.l2_w, g.l2_b)));
    auto [h2, c2] = lstm_step(g.lstm, x2, h, c);
    h = h2;
    c = c2;
    ad::Value x3 = ad::add(x2, h);
    ad::Value x4 = ad::add(x3, ad::relu(dense(x3, g.l4_w, g.l4_b)));
    out.push_back(dense(x4, g.out_w, g.out_b));
  }
  return out;
}

std::vector<ad::Value> discriminator_forward(const BoundDiscriminator& d,
                                             const std::vector<ad::Value>& steps) {
  if (steps.empty())
    throw std::invalid_argument("discriminator_forward: empty window");
  for (const ad::Value& s : steps)
    if (s.cols() != d.in_dim)
      dim_error("discriminator_forward", "step dimension", s.cols(), d.in_dim);

  ad::Tape& t = steps[0].tape();
  const std::size_t batch = steps[0].rows();
  const std::size_t H = d.base_width / 4;
  const std::vector<double> zeros(batch * H, 0.0);
  ad::Value h = t.constant(batch, H, zeros.data());
  ad::Value c = t.constant(batch, H, zeros.data());

  std::vector<ad::Value> scores;
  scores.reserve(steps.size());
  for (const ad::Value& x : steps) {
    ad::Value x1 = ad::relu(dense(x, d.d1_w, d.d1_b));
    ad::Value x2 = ad::relu(dense(x1, d.d2_w, d.d2_b));
    ad::Value x3 = ad::relu(dense(x2, d.d3_w, d.d3_b));
    auto [h2, c2] = lstm_step(d.lstm, x3, h, c);
    h = h2;
    c = c2;
    ad::Value x4 = ad::relu(dense(h, d.d4_w, d.d4_b));
    ad::Value x5 = ad::relu(dense(x4, d.d5_w, d.d5_b));
    scores.push_back(ad::sigmoid(dense(x5, d.out_w, d.out_b)));
  }
  return scores;
}

std::vector<ad::Value> window_constants(ad::Tape& t, const params::Window& w) {
  std::vector<ad::Value> steps;
  steps.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    steps.push_back(t.constant(1, params::kExpressionDim, w.step(i)));
  return steps;
}

std::vector<ad::Value> window_batch_constants(
    ad::Tape& t, const std::vector<const params::Window*>& batch) {
  if (batch.empty())
    throw std::invalid_argument("window_batch_constants: empty batch");
  const std::size_t n = batch[0]->size();
  for (const params::Window* w : batch)
    if (w->size() != n)
      throw std::invalid_argument("window_batch_constants: windows of length " +
                                  std::to_string(w->size()) + " and " +
                                  std::to_string(n) + " mixed in one batch");

  std::vector<ad::Value> steps;
  steps.reserve(n);
  std::vector<double> buf(batch.size() * params::kExpressionDim);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const double* src = batch[r]->step(s);
      std::copy(src, src + params::kExpressionDim,
                buf.begin() + static_cast<std::ptrdiff_t>(r * params::kExpressionDim));
    }
    steps.push_back(t.constant(batch.size(), params::kExpressionDim, buf.data()));
  }
  return steps;
}

}  // namespace dubstyle::nets
