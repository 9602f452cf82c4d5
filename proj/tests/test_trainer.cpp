// Trainer tests: config parsing/validation, Adam and clipping against
// scalar oracles, deterministic end-to-end training, checkpoint
// persistence, translation, interpolation, and history output.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dubstyle/nets.hpp"
#include "dubstyle/params.hpp"
#include "dubstyle/rng.hpp"
#include "dubstyle/synth.hpp"
#include "dubstyle/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace dubstyle;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(static_cast<bool>(out));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

trainer::TrainConfig tiny_config() {
  trainer::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.train_frames = 48;
  cfg.generator_width = 32;
  cfg.discriminator_width = 16;
  cfg.seed = 9;
  return cfg;
}

params::ExpressionSequence tiny_corpus(std::uint64_t seed, bool target) {
  synth::StyleSpec spec =
      target ? synth::default_target_spec() : synth::default_source_spec();
  spec.noise_amplitude = 0.05;
  return synth::gen_corpus(spec, 64, seed);
}

bool same_doubles(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_CASE("TrainConfig validation rejects bad values") {
  auto expect_bad = [](void (*mutate)(trainer::TrainConfig&)) {
    trainer::TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  };
  expect_bad([](trainer::TrainConfig& c) { c.batch_size = 0; });
  expect_bad([](trainer::TrainConfig& c) { c.epochs = 0; });
  expect_bad([](trainer::TrainConfig& c) { c.learning_rate = 0.0; });
  expect_bad([](trainer::TrainConfig& c) { c.learning_rate = -1e-4; });
  expect_bad([](trainer::TrainConfig& c) { c.adam_beta1 = 1.0; });
  expect_bad([](trainer::TrainConfig& c) { c.adam_beta2 = -0.1; });
  expect_bad([](trainer::TrainConfig& c) { c.adam_eps = 0.0; });
  expect_bad([](trainer::TrainConfig& c) { c.clip_norm = 0.0; });
  expect_bad([](trainer::TrainConfig& c) { c.loss_weights.lambda_cc = -1.0; });
  expect_bad([](trainer::TrainConfig& c) { c.train_frames = 1; });
  expect_bad([](trainer::TrainConfig& c) { c.generator_width = 0; });
  expect_bad([](trainer::TrainConfig& c) { c.discriminator_width = 24; });
  expect_bad([](trainer::TrainConfig& c) { c.discriminator_width = 0; });
  expect_bad([](trainer::TrainConfig& c) { c.mouth_indices = {1, 2}; });
  expect_bad([](trainer::TrainConfig& c) {
    c.mouth_indices = {0, 1, 2, 3, 4, 5, 6, 7, 8, 64};
  });

  trainer::TrainConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("config JSON carries documented defaults and round-trips") {
  trainer::TrainConfig def;
  CHECK(def.window == 7);
  CHECK(def.batch_size == 16);
  CHECK(def.epochs == 25);
  CHECK(def.learning_rate == 1e-4);
  CHECK(def.adam_beta1 == 0.5);
  CHECK(def.adam_beta2 == 0.999);
  CHECK(def.adam_eps == 1e-8);
  CHECK(def.clip_norm == 5.0);
  CHECK(def.loss_weights.lambda_cc == 10.0);
  CHECK(def.loss_weights.lambda_adv == 1.0);
  CHECK(def.loss_weights.lambda_me == 5.0);
  CHECK(def.generator_width == 1024);
  CHECK(def.discriminator_width == 64);
  CHECK(def.non_saturating_gan == false);
  CHECK(def.lr_halve_every_epochs == 0);
  CHECK(def.mouth_indices ==
        std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  trainer::TrainConfig cfg = tiny_config();
  cfg.non_saturating_gan = true;
  cfg.lr_halve_every_epochs = 3;
  cfg.loss_weights.lambda_me = 2.5;
  trainer::TrainConfig back =
      trainer::train_config_from_json(trainer::train_config_to_json(cfg));
  CHECK(back.window == cfg.window);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.adam_beta1 == cfg.adam_beta1);
  CHECK(back.adam_beta2 == cfg.adam_beta2);
  CHECK(back.adam_eps == cfg.adam_eps);
  CHECK(back.clip_norm == cfg.clip_norm);
  CHECK(back.loss_weights.lambda_cc == cfg.loss_weights.lambda_cc);
  CHECK(back.loss_weights.lambda_adv == cfg.loss_weights.lambda_adv);
  CHECK(back.loss_weights.lambda_me == cfg.loss_weights.lambda_me);
  CHECK(back.seed == cfg.seed);
  CHECK(back.train_frames == cfg.train_frames);
  CHECK(back.generator_width == cfg.generator_width);
  CHECK(back.discriminator_width == cfg.discriminator_width);
  CHECK(back.non_saturating_gan == cfg.non_saturating_gan);
  CHECK(back.lr_halve_every_epochs == cfg.lr_halve_every_epochs);
  CHECK(back.mouth_indices == cfg.mouth_indices);
}

TEST_CASE("config JSON is strict about keys and types") {
  CHECK_THROWS_WITH_AS(
      trainer::train_config_from_json("{\"epochs\": 3, \"bogus_key\": 1}"),
      doctest::Contains("bogus_key"), std::runtime_error);
  CHECK_THROWS_AS(trainer::train_config_from_json("{\"epochs\": \"three\"}"),
                  std::runtime_error);
  CHECK_THROWS_AS(trainer::train_config_from_json("not json at all"),
                  std::runtime_error);
  // Partial configs keep defaults for everything else.
  trainer::TrainConfig c =
      trainer::train_config_from_json("{\"batch_size\": 5}");
  CHECK(c.batch_size == 5);
  CHECK(c.epochs == 25);
}

TEST_CASE("adam_step matches a scalar trajectory oracle") {
  const double lr = 1e-3, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  nets::Tensor w1(3, 2), w2(1, 5);
  rng::Rng r(77);
  for (double& x : w1.data) x = r.uniform(-1.0, 1.0);
  for (double& x : w2.data) x = r.uniform(-1.0, 1.0);

  // Oracle state mirrors the tensors element by element.
  std::vector<double> ow1 = w1.data, ow2 = w2.data;
  std::vector<double> m1(ow1.size(), 0.0), v1(ow1.size(), 0.0);
  std::vector<double> m2(ow2.size(), 0.0), v2(ow2.size(), 0.0);

  trainer::AdamState state;
  rng::Rng gr(78);
  for (int step = 1; step <= 10; ++step) {
    std::vector<std::vector<double>> grads(2);
    grads[0].resize(ow1.size());
    grads[1].resize(ow2.size());
    for (double& g : grads[0]) g = gr.gaussian();
    for (double& g : grads[1]) g = gr.gaussian();

    trainer::adam_step({&w1, &w2}, grads, state, lr, b1, b2, eps);

    const double t = static_cast<double>(step);
    const double inv_bc1 = 1.0 / (1.0 - std::pow(b1, t));
    const double inv_bc2 = 1.0 / (1.0 - std::pow(b2, t));
    auto advance = [&](std::vector<double>& w, std::vector<double>& m,
                       std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = std::fma(b1, m[i], (1.0 - b1) * g[i]);
        v[i] = std::fma(b2, v[i], (1.0 - b2) * (g[i] * g[i]));
        const double mh = m[i] * inv_bc1;
        const double vh = v[i] * inv_bc2;
        w[i] = w[i] - (lr * mh) / (std::sqrt(vh) + eps);
      }
    };
    advance(ow1, m1, v1, grads[0]);
    advance(ow2, m2, v2, grads[1]);

    CHECK(state.step == static_cast<std::uint64_t>(step));
    for (std::size_t i = 0; i < ow1.size(); ++i) {
      CHECK(std::fabs(w1.data[i] - ow1[i]) <= 1e-15);
      CHECK(std::fabs(state.m[0][i] - m1[i]) <= 1e-15);
      CHECK(std::fabs(state.v[0][i] - v1[i]) <= 1e-15);
    }
    for (std::size_t i = 0; i < ow2.size(); ++i)
      CHECK(std::fabs(w2.data[i] - ow2[i]) <= 1e-15);
  }
}

TEST_CASE("adam_step rejects mismatched shapes") {
  nets::Tensor w(2, 2);
  trainer::AdamState state;
  std::vector<std::vector<double>> bad_len(1, std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(trainer::adam_step({&w}, bad_len, state, 1e-3, 0.5, 0.999,
                                     1e-8),
                  std::runtime_error);
  std::vector<std::vector<double>> two(2, std::vector<double>(4, 0.0));
  nets::Tensor w2(2, 2);
  trainer::adam_step({&w, &w2}, two, state, 1e-3, 0.5, 0.999, 1e-8);
  // Tensor-count change after state initialization is an error.
  std::vector<std::vector<double>> one(1, std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(trainer::adam_step({&w}, one, state, 1e-3, 0.5, 0.999, 1e-8),
                  std::runtime_error);
}

TEST_CASE("clip_gradients is identity under the cap") {
  std::vector<std::vector<double>> grads = {{0.3, -0.4}, {1.2, 0.0, -0.5}};
  const std::vector<std::vector<double>> before = grads;
  const double factor = trainer::clip_gradients(grads, 5.0);
  CHECK(factor == 1.0);
  CHECK(same_doubles(grads[0], before[0]));
  CHECK(same_doubles(grads[1], before[1]));
}

TEST_CASE("clip_gradients caps the global norm and preserves direction") {
  rng::Rng r(5150);
  std::vector<std::vector<double>> grads(3);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    grads[k].resize(17 + 5 * k);
    for (double& g : grads[k]) g = r.uniform(-4.0, 4.0);
  }
  const std::vector<std::vector<double>> before = grads;

  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  REQUIRE(norm > 5.0);

  const double factor = trainer::clip_gradients(grads, 5.0);
  CHECK(std::fabs(factor - 5.0 / norm) <= 1e-15);
  for (std::size_t k = 0; k < grads.size(); ++k)
    for (std::size_t i = 0; i < grads[k].size(); ++i)
      CHECK(grads[k][i] == before[k][i] * factor);

  double clipped_sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) clipped_sq += x * x;
  CHECK(std::sqrt(clipped_sq) == doctest::Approx(5.0).epsilon(1e-12));

  CHECK_THROWS_AS(trainer::clip_gradients(grads, 0.0), std::invalid_argument);
}

TEST_CASE("training runs the documented iteration count, deterministically") {
  const params::ExpressionSequence src = tiny_corpus(3, false);
  const params::ExpressionSequence tgt = tiny_corpus(4, true);
  const trainer::TrainConfig cfg = tiny_config();

  trainer::TrainResult a = trainer::train(cfg, src, tgt);
  // 48 training frames -> 42 windows; batch 4 -> 10 iterations per epoch.
  CHECK(a.history.size() == 20);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].iter == i + 1);
    CHECK(std::isfinite(a.history[i].l_total));
    const trainer::HistoryRow& row = a.history[i];
    const double recombined =
        cfg.loss_weights.lambda_cc * row.l_cc +
        cfg.loss_weights.lambda_adv * row.l_adv_g +
        cfg.loss_weights.lambda_me * row.l_me;
    CHECK(row.l_total == doctest::Approx(recombined).epsilon(1e-12));
  }
  CHECK(a.checkpoint.epoch == 2);

  trainer::TrainResult b = trainer::train(cfg, src, tgt);
  REQUIRE(b.history.size() == a.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].l_cc == b.history[i].l_cc);
    CHECK(a.history[i].l_adv_d == b.history[i].l_adv_d);
    CHECK(a.history[i].l_adv_g == b.history[i].l_adv_g);
    CHECK(a.history[i].l_me == b.history[i].l_me);
    CHECK(a.history[i].l_total == b.history[i].l_total);
  }

  const std::string pa = temp_path("dubstyle_ckpt_a.bin");
  const std::string pb = temp_path("dubstyle_ckpt_b.bin");
  trainer::save_checkpoint(a.checkpoint, pa);
  trainer::save_checkpoint(b.checkpoint, pb);
  CHECK(read_file(pa) == read_file(pb));

  trainer::TrainConfig other = cfg;
  other.seed = 10;
  trainer::TrainResult c = trainer::train(other, src, tgt);
  CHECK(c.history.back().l_total != a.history.back().l_total);

  std::filesystem::remove(pa);
  std::filesystem::remove(pb);
}

TEST_CASE("learning-rate halving changes the trajectory") {
  const params::ExpressionSequence src = tiny_corpus(3, false);
  const params::ExpressionSequence tgt = tiny_corpus(4, true);
  trainer::TrainConfig cfg = tiny_config();
  trainer::TrainResult plain = trainer::train(cfg, src, tgt);
  cfg.lr_halve_every_epochs = 1;
  trainer::TrainResult halved = trainer::train(cfg, src, tgt);
  // Epoch 1 is identical; the halved rate must alter epoch 2.
  CHECK(plain.history[0].l_total == halved.history[0].l_total);
  CHECK(plain.history.back().l_total != halved.history.back().l_total);
}

TEST_CASE("checkpoint save/load preserves translation bit-exactly") {
  const params::ExpressionSequence src = tiny_corpus(3, false);
  const params::ExpressionSequence tgt = tiny_corpus(4, true);
  trainer::TrainResult res = trainer::train(tiny_config(), src, tgt);

  const std::string path = temp_path("dubstyle_ckpt_rt.bin");
  trainer::save_checkpoint(res.checkpoint, path);
  trainer::Checkpoint loaded = trainer::load_checkpoint(path);

  CHECK(loaded.epoch == res.checkpoint.epoch);
  CHECK(loaded.config.generator_width == 32);
  CHECK(same_doubles(loaded.stats_source.mean,
                     res.checkpoint.stats_source.mean));
  CHECK(same_doubles(loaded.stats_target.stddev,
                     res.checkpoint.stats_target.stddev));
  CHECK(loaded.gen_opt.step == res.checkpoint.gen_opt.step);
  CHECK(same_doubles(loaded.gen_opt.m.front(),
                     res.checkpoint.gen_opt.m.front()));

  const params::ExpressionSequence probe = tiny_corpus(11, false);
  params::ExpressionSequence t0 =
      trainer::translate_sequence(res.checkpoint, probe,
                                  trainer::Direction::st);
  params::ExpressionSequence t1 =
      trainer::translate_sequence(loaded, probe, trainer::Direction::st);
  CHECK(same_doubles(t0.data, t1.data));

  params::ExpressionSequence u0 =
      trainer::translate_sequence(res.checkpoint, probe,
                                  trainer::Direction::ts);
  params::ExpressionSequence u1 =
      trainer::translate_sequence(loaded, probe, trainer::Direction::ts);
  CHECK(same_doubles(u0.data, u1.data));

  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  const params::ExpressionSequence src = tiny_corpus(3, false);
  const params::ExpressionSequence tgt = tiny_corpus(4, true);
  trainer::TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  trainer::TrainResult res = trainer::train(cfg, src, tgt);

  const std::string path = temp_path("dubstyle_ckpt_bad.bin");
  trainer::save_checkpoint(res.checkpoint, path);
  const std::string good = read_file(path);

  write_file(path, good.substr(0, 20));
  CHECK_THROWS_AS(trainer::load_checkpoint(path), std::runtime_error);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  write_file(path, bad_magic);
  CHECK_THROWS_WITH_AS(trainer::load_checkpoint(path),
                       doctest::Contains("magic"), std::runtime_error);

  std::string bad_version = good;
  bad_version[4] = static_cast<char>(0x7f);
  write_file(path, bad_version);
  CHECK_THROWS_WITH_AS(trainer::load_checkpoint(path),
                       doctest::Contains("version"), std::runtime_error);

  CHECK_THROWS_AS(trainer::load_checkpoint(temp_path("no_such_ckpt.bin")),
                  std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("translate_sequence preserves length and frame rate") {
  const params::ExpressionSequence src = tiny_corpus(3, false);
  const params::ExpressionSequence tgt = tiny_corpus(4, true);
  trainer::TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  trainer::TrainResult res = trainer::train(cfg, src, tgt);

  params::ExpressionSequence probe = tiny_corpus(12, false);
  probe.frame_rate = 30.0;
  params::ExpressionSequence out =
      trainer::translate_sequence(res.checkpoint, probe,
                                  trainer::Direction::st);
  CHECK(out.frames() == probe.frames());
  CHECK(out.frame_rate == 30.0);
  for (double v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("direction_from_string parses st/ts and rejects others") {
  CHECK(trainer::direction_from_string("st") == trainer::Direction::st);
  CHECK(trainer::direction_from_string("ts") == trainer::Direction::ts);
  CHECK_THROWS_WITH_AS(trainer::direction_from_string("both"),
                       doctest::Contains("both"), std::invalid_argument);
}

TEST_CASE("interpolate_style endpoints are exact, midpoint is the mean") {
  rng::Rng r(31);
  params::ExpressionSequence a, b;
  a.frame_rate = b.frame_rate = 25.0;
  const std::size_t frames = 9;
  a.data.resize(frames * params::kExpressionDim);
  b.data.resize(frames * params::kExpressionDim);
  for (double& x : a.data) x = r.uniform(-2.0, 2.0);
  for (double& x : b.data) x = r.uniform(-2.0, 2.0);

  params::ExpressionSequence at0 = trainer::interpolate_style(a, b, 0.0);
  CHECK(same_doubles(at0.data, a.data));
  params::ExpressionSequence at1 = trainer::interpolate_style(a, b, 1.0);
  CHECK(same_doubles(at1.data, b.data));

  params::ExpressionSequence mid = trainer::interpolate_style(a, b, 0.5);
  for (std::size_t i = 0; i < mid.data.size(); ++i)
    CHECK(std::fabs(mid.data[i] - 0.5 * (a.data[i] + b.data[i])) <= 1e-12);

  CHECK_THROWS_AS(trainer::interpolate_style(a, b, -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::interpolate_style(a, b, 1.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(trainer::interpolate_style(
                      a, b, std::numeric_limits<double>::quiet_NaN()),
                  std::invalid_argument);
  params::ExpressionSequence shorter = a;
  shorter.data.resize((frames - 1) * params::kExpressionDim);
  CHECK_THROWS_AS(trainer::interpolate_style(a, shorter, 0.5),
                  std::invalid_argument);
}

TEST_CASE("history CSV has the documented header and 17-digit values") {
  std::vector<trainer::HistoryRow> history = {
      {1, 0.1, -2.772588722239781, -1.3862943611198906, 2.0, -0.3},
      {2, 1.0 / 3.0, -0.25, -0.125, 0.2, 5.0},
  };
  const std::string path = temp_path("dubstyle_history.csv");
  trainer::write_history_csv(path, history);
  std::ifstream in(path);
  REQUIRE(static_cast<bool>(in));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "iter,L_cc,L_adv_d,L_adv_g,L_me,L_total");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    REQUIRE(!line.empty());
    std::istringstream ss(line);
    std::string field;
    REQUIRE(std::getline(ss, field, ','));
    CHECK(std::stoull(field) == history[rows].iter);
    const double expect[5] = {history[rows].l_cc, history[rows].l_adv_d,
                              history[rows].l_adv_g, history[rows].l_me,
                              history[rows].l_total};
    for (double e : expect) {
      REQUIRE(std::getline(ss, field, ','));
      CHECK(std::strtod(field.c_str(), nullptr) == e);
    }
    ++rows;
  }
  CHECK(rows == history.size());
  std::filesystem::remove(path);
}
