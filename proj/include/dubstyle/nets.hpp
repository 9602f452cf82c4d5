#pragma once

// Generator and discriminator architectures, built on the autodiff tape.
//
// Generator (per time step, all widths default 1024):
//   dense 64->W, ReLU
//   residual: x + ReLU(dense W->W)
//   residual: x + LSTM(W->W)
//   residual: x + ReLU(dense W->W)
//   dense W->64, no activation
//
// Discriminator (widths halving from 64): dense 64->64 ReLU, 64->32 ReLU,
// 32->16 ReLU feeding an LSTM with H=16, then 16->8 ReLU, 8->4 ReLU,
// 4->1 sigmoid — one score per time step.
//
// LSTM state is zero-initialized at the start of every window, so outputs
// depend only on the window itself.
//
// Weights live in plain Tensors owned by the caller; bind() registers them
// as tape leaves for one forward/backward pass.

#include "dubstyle/autodiff.hpp"
#include "dubstyle/params.hpp"
#include "dubstyle/rng.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dubstyle::nets {

struct Tensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  std::size_t size() const { return data.size(); }
};

// Gate block order inside the 4H axis is fixed: input i, forget f,
// candidate g, output o. Forward: i,f,o = sigmoid, g = tanh,
// c' = f*c + i*g, h' = o*tanh(c').
struct LstmCell {
  std::size_t input_dim = 0, hidden = 0;
  Tensor wx;  // 4H x I
  Tensor wh;  // 4H x H
  Tensor b;   // 1 x 4H
};

struct GeneratorWeights {
  std::size_t in_dim = 0, width = 0, out_dim = 0;
  Tensor l1_w, l1_b;    // W x in, 1 x W
  Tensor l2_w, l2_b;    // W x W, 1 x W (residual block)
  LstmCell lstm;        // H = W, input W (residual block)
  Tensor l4_w, l4_b;    // W x W, 1 x W (residual block)
  Tensor out_w, out_b;  // out x W, 1 x out
};

// base_width must be divisible by 16 so the halving chain stays integral.
struct DiscriminatorWeights {
  std::size_t in_dim = 0, base_width = 0;
  Tensor d1_w, d1_b;    // base x in
  Tensor d2_w, d2_b;    // base/2 x base
  Tensor d3_w, d3_b;    // base/4 x base/2 (feeds the LSTM)
  LstmCell lstm;        // H = base/4
  Tensor d4_w, d4_b;    // base/8 x base/4
  Tensor d5_w, d5_b;    // base/16 x base/8
  Tensor out_w, out_b;  // 1 x base/16
};

// Glorot-uniform weight init, zero biases; deterministic in rng state.
LstmCell make_lstm(std::size_t input_dim, std::size_t hidden, rng::Rng& rng);
GeneratorWeights make_generator(std::size_t in_dim, std::size_t width,
                                std::size_t out_dim, rng::Rng& rng);
DiscriminatorWeights make_discriminator(std::size_t in_dim,
                                        std::size_t base_width, rng::Rng& rng);

// Visits every tensor in a fixed order with a stable name; the single
// source of truth for checkpoint layout and optimizer state.
void visit_tensors(LstmCell& c, const std::string& prefix,
                   const std::function<void(const std::string&, Tensor&)>& fn);
void visit_tensors(GeneratorWeights& g,
                   const std::function<void(const std::string&, Tensor&)>& fn);
void visit_tensors(DiscriminatorWeights& d,
                   const std::function<void(const std::string&, Tensor&)>& fn);

// Tape bindings (leaf views; weights must outlive the tape).
struct BoundLstm {
  std::size_t input_dim = 0, hidden = 0;
  ad::Value wx, wh, b;
};

struct BoundGenerator {
  std::size_t in_dim = 0, width = 0, out_dim = 0;
  ad::Value l1_w, l1_b, l2_w, l2_b, l4_w, l4_b, out_w, out_b;
  BoundLstm lstm;
};

struct BoundDiscriminator {
  std::size_t in_dim = 0, base_width = 0;
  ad::Value d1_w, d1_b, d2_w, d2_b, d3_w, d3_b, d4_w, d4_b, d5_w, d5_b,
      out_w, out_b;
  BoundLstm lstm;
};

// When leaves is non-null, bind appends one (tensor, leaf) pair per weight
// in visit_tensors order, so callers can fetch gradients for exactly the
// leaves they bound.
using LeafList = std::vector<std::pair<Tensor*, ad::Value>>;

BoundLstm bind(ad::Tape& t, LstmCell& c, LeafList* leaves = nullptr);
BoundGenerator bind(ad::Tape& t, GeneratorWeights& g, LeafList* leaves = nullptr);
BoundDiscriminator bind(ad::Tape& t, DiscriminatorWeights& d,
                        LeafList* leaves = nullptr);

// One LSTM step. x is B x I, h and c are B x H; returns (h', c').
std::pair<ad::Value, ad::Value> lstm_step(const BoundLstm& cell,
                                          const ad::Value& x, const ad::Value& h,
                                          const ad::Value& c);

// Window forwards over step values (each B x dim, oldest first). The
// generator returns one B x out_dim value per step; the discriminator one
// B x 1 sigmoid score per step.
std::vector<ad::Value> generator_forward(const BoundGenerator& g,
                                         const std::vector<ad::Value>& steps);
std::vector<ad::Value> discriminator_forward(const BoundDiscriminator& d,
                                             const std::vector<ad::Value>& steps);

// Input plumbing: windows as per-step constants. The batched form takes
// one row per window.
std::vector<ad::Value> window_constants(ad::Tape& t, const params::Window& w);
std::vector<ad::Value> window_batch_constants(
    ad::Tape& t, const std::vector<const params::Window*>& batch);

}  // namespace dubstyle::nets
