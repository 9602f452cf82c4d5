#pragma once

// Training loop for the two-generator / two-discriminator translator,
// plus Adam, gradient clipping, checkpoint serialization, and the
// inference entry points (translate, interpolate).
//
// One iteration records the whole objective on a fresh tape:
//   1. discriminator phase: both generators run on a sampled batch, the
//      fakes are detached, and the discriminators ascend the adversarial
//      objective (descend its negation);
//   2. generator phase: the just-updated discriminator weights are bound
//      as new leaves, the live fakes are re-scored, the cycle passes run,
//      and the generators descend the weighted total.
// Updates alternate strictly 1:1, with gradient-norm clipping before
// every Adam step.

#include "dubstyle/losses.hpp"
#include "dubstyle/nets.hpp"
#include "dubstyle/params.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dubstyle::trainer {

struct TrainConfig {
  std::size_t window = 7;
  std::size_t batch_size = 16;
  std::size_t epochs = 25;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  losses::LossWeights loss_weights;
  std::uint64_t seed = 1;
  // Frames used for training (per corpus); anything beyond is held out.
  std::size_t train_frames = 7500;
  std::size_t generator_width = 1024;
  std::size_t discriminator_width = 64;
  bool non_saturating_gan = false;
  // Optional schedule: halve the learning rate every k epochs (0 = off).
  std::size_t lr_halve_every_epochs = 0;
  std::vector<std::size_t> mouth_indices{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

  void validate() const;  // throws std::invalid_argument on bad values
};

// Strict JSON: unknown keys are errors, types must match.
TrainConfig train_config_from_json(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& c);

// Per-group Adam state: one (m, v) pair per tensor, plus the shared step
// counter used for bias correction.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

struct TranslatorWeights {
  nets::GeneratorWeights g_st, g_ts;
  nets::DiscriminatorWeights d_s, d_t;
};

struct Checkpoint {
  TrainConfig config;
  TranslatorWeights weights;
  AdamState gen_opt, disc_opt;
  params::NormStats stats_source, stats_target;
  std::size_t epoch = 0;
};

struct HistoryRow {
  std::size_t iter = 0;
  double l_cc = 0.0, l_adv_d = 0.0, l_adv_g = 0.0, l_me = 0.0, l_total = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<HistoryRow> history;
};

// Scales all gradients by clip_norm / ||g|| when the global l2 norm
// exceeds clip_norm; returns the factor applied (1.0 when under the cap).
double clip_gradients(std::vector<std::vector<double>>& grads,
                      double clip_norm);

// One Adam update over a tensor group. State is zero-initialized on first
// use; afterwards its shapes must match or the call throws.
void adam_step(const std::vector<nets::Tensor*>& weights,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// Trains from scratch on the two corpora (raw coefficient sequences; the
// first train_frames of each are normalized and windowed).
TrainResult train(const TrainConfig& config,
                  const params::ExpressionSequence& source,
                  const params::ExpressionSequence& target);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

enum class Direction { st, ts };
Direction direction_from_string(const std::string& s);  // "st" | "ts"

// Runs the matching generator over every frame of input (windows end at
// the frame, replicate-padded at the start) under the checkpoint's stored
// normalization, returning a denormalized sequence of equal length.
params::ExpressionSequence translate_sequence(
    Checkpoint& c, const params::ExpressionSequence& input, Direction dir);

// Frame-wise blend: (1 - alpha) * source + alpha * translated.
params::ExpressionSequence interpolate_style(
    const params::ExpressionSequence& source,
    const params::ExpressionSequence& translated, double alpha);

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history);

}  // namespace dubstyle::trainer
