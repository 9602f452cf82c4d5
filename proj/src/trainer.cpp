#include "dubstyle/trainer.hpp"

#include "dubstyle/kernels.hpp"
#include "dubstyle/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dubstyle::trainer {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

// ---- config ---------------------------------------------------------------

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
}

}  // namespace

void TrainConfig::validate() const {
  check(window >= 1, "window must be >= 1");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(epochs >= 1, "epochs must be >= 1");
  check(learning_rate > 0.0 && std::isfinite(learning_rate),
        "learning_rate must be positive");
  check(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0,1)");
  check(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0,1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
  check(clip_norm > 0.0, "clip_norm must be positive");
  check(loss_weights.lambda_cc >= 0.0 && loss_weights.lambda_adv >= 0.0 &&
            loss_weights.lambda_me >= 0.0,
        "loss weights must be non-negative");
  check(train_frames >= 2, "train_frames must be >= 2");
  check(generator_width >= 1, "generator_width must be >= 1");
  check(discriminator_width >= 16 && discriminator_width % 16 == 0,
        "discriminator_width must be a positive multiple of 16");
  params::MouthIndexSet mis(mouth_indices);  // validates count/range
}

TrainConfig train_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("config: top level must be a JSON object");

  TrainConfig c;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "window") c.window = val.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = val.get<std::size_t>();
      else if (key == "epochs") c.epochs = val.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = val.get<double>();
      else if (key == "adam_beta1") c.adam_beta1 = val.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = val.get<double>();
      else if (key == "adam_eps") c.adam_eps = val.get<double>();
      else if (key == "clip_norm") c.clip_norm = val.get<double>();
      else if (key == "lambda_cc") c.loss_weights.lambda_cc = val.get<double>();
      else if (key == "lambda_adv") c.loss_weights.lambda_adv = val.get<double>();
      else if (key == "lambda_me") c.loss_weights.lambda_me = val.get<double>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "train_frames") c.train_frames = val.get<std::size_t>();
      else if (key == "generator_width")
        c.generator_width = val.get<std::size_t>();
      else if (key == "discriminator_width")
        c.discriminator_width = val.get<std::size_t>();
      else if (key == "non_saturating_gan")
        c.non_saturating_gan = val.get<bool>();
      else if (key == "lr_halve_every_epochs")
        c.lr_halve_every_epochs = val.get<std::size_t>();
      else if (key == "mouth_indices")
        c.mouth_indices = val.get<std::vector<std::size_t>>();
      else fail("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      fail("config: key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return train_config_from_json(text);
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["window"] = c.window;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["clip_norm"] = c.clip_norm;
  j["lambda_cc"] = c.loss_weights.lambda_cc;
  j["lambda_adv"] = c.loss_weights.lambda_adv;
  j["lambda_me"] = c.loss_weights.lambda_me;
  j["seed"] = c.seed;
  j["train_frames"] = c.train_frames;
  j["generator_width"] = c.generator_width;
  j["discriminator_width"] = c.discriminator_width;
  j["non_saturating_gan"] = c.non_saturating_gan;
  j["lr_halve_every_epochs"] = c.lr_halve_every_epochs;
  j["mouth_indices"] = c.mouth_indices;
  return j.dump(2);
}

// ---- optimizer ------------------------------------------------------------

namespace {

void ensure_state(AdamState& state, const std::vector<nets::Tensor*>& weights) {
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    state.m.resize(weights.size());
    state.v.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      state.m[i].assign(weights[i]->data.size(), 0.0);
      state.v[i].assign(weights[i]->data.size(), 0.0);
    }
    return;
  }
  if (state.m.size() != weights.size() || state.v.size() != weights.size())
    fail("adam_step: optimizer state has " + std::to_string(state.m.size()) +
         " tensors, expected " + std::to_string(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (state.m[i].size() != weights[i]->data.size() ||
        state.v[i].size() != weights[i]->data.size())
      fail("adam_step: moment shape mismatch at tensor " + std::to_string(i));
  }
}

// Shared core over raw gradient pointers (the training loop clips and
// updates straight out of the tape's gradient buffers, no copies).
void adam_core(const std::vector<nets::Tensor*>& weights,
               const std::vector<const double*>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  ensure_state(state, weights);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double inv_bc1 = 1.0 / (1.0 - std::pow(beta1, t));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(beta2, t));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    nets::Tensor& w = *weights[i];
    kernels::adam_update(w.data.size(), w.data.data(), grads[i],
                         state.m[i].data(), state.v[i].data(), lr, beta1,
                         beta2, eps, inv_bc1, inv_bc2);
  }
}

double clip_core(const std::vector<double*>& grads,
                 const std::vector<std::size_t>& sizes, double clip_norm) {
  if (clip_norm <= 0.0)
    throw std::invalid_argument("clip_gradients: clip_norm must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    sq += kernels::l2_norm_sq(sizes[i], grads[i]);
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail("clip_gradients: non-finite gradient norm");
  if (norm <= clip_norm) return 1.0;
  const double factor = clip_norm / norm;
  for (std::size_t i = 0; i < grads.size(); ++i)
    kernels::scale(sizes[i], factor, grads[i], grads[i]);
  return factor;
}

}  // namespace

double clip_gradients(std::vector<std::vector<double>>& grads,
                      double clip_norm) {
  std::vector<double*> ptrs;
  std::vector<std::size_t> sizes;
  ptrs.reserve(grads.size());
  sizes.reserve(grads.size());
  for (std::vector<double>& g : grads) {
    ptrs.push_back(g.data());
    sizes.push_back(g.size());
  }
  return clip_core(ptrs, sizes, clip_norm);
}

void adam_step(const std::vector<nets::Tensor*>& weights,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (weights.size() != grads.size())
    fail("adam_step: " + std::to_string(grads.size()) + " gradients for " +
         std::to_string(weights.size()) + " tensors");
  std::vector<const double*> ptrs;
  ptrs.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != weights[i]->data.size())
      fail("adam_step: gradient shape mismatch at tensor " + std::to_string(i));
    ptrs.push_back(grads[i].data());
  }
  adam_core(weights, ptrs, state, lr, beta1, beta2, eps);
}

// ---- training loop --------------------------------------------------------

namespace {

params::ExpressionSequence prefix_frames(const params::ExpressionSequence& s,
                                         std::size_t n) {
  params::ExpressionSequence out;
  out.frame_rate = s.frame_rate;
  out.data.assign(s.data.begin(),
                  s.data.begin() +
                      static_cast<std::ptrdiff_t>(n * params::kExpressionDim));
  return out;
}

struct BoundGroup {
  std::vector<nets::Tensor*> tensors;
  std::vector<double*> grads;
  std::vector<std::size_t> sizes;
};

// Pulls the gradient buffer of every bound leaf (zeros when untouched).
BoundGroup collect_grads(ad::Tape& tape, const nets::LeafList& leaves) {
  BoundGroup g;
  g.tensors.reserve(leaves.size());
  g.grads.reserve(leaves.size());
  g.sizes.reserve(leaves.size());
  for (const auto& [tensor, leaf] : leaves) {
    g.tensors.push_back(tensor);
    g.grads.push_back(tape.grad_accum(leaf.id()));
    g.sizes.push_back(tensor->data.size());
  }
  return g;
}

std::vector<const double*> const_ptrs(const std::vector<double*>& p) {
  return std::vector<const double*>(p.begin(), p.end());
}

}  // namespace

TrainResult train(const TrainConfig& config,
                  const params::ExpressionSequence& source,
                  const params::ExpressionSequence& target) {
  config.validate();
  const params::MouthIndexSet mouth(config.mouth_indices);

  const std::size_t src_split = std::min(config.train_frames, source.frames());
  const std::size_t tgt_split = std::min(config.train_frames, target.frames());
  if (src_split < 2 || tgt_split < 2)
    fail("train: need at least 2 training frames per corpus");

  auto [norm_src, stats_src] =
      params::normalize_sequence(prefix_frames(source, src_split));
  auto [norm_tgt, stats_tgt] =
      params::normalize_sequence(prefix_frames(target, tgt_split));

  const std::vector<params::Window> ws =
      params::sliding_windows(norm_src, config.window);
  const std::vector<params::Window> wt =
      params::sliding_windows(norm_tgt, config.window);
  if (ws.empty() || wt.empty())
    fail("train: training split shorter than one window");
  const std::size_t iters_per_epoch =
      std::min(ws.size(), wt.size()) / config.batch_size;
  if (iters_per_epoch == 0)
    fail("train: batch_size " + std::to_string(config.batch_size) +
         " exceeds the " + std::to_string(std::min(ws.size(), wt.size())) +
         " available windows");

  rng::Rng rng(config.seed);
  TranslatorWeights w;
  w.g_st = nets::make_generator(params::kExpressionDim, config.generator_width,
                                params::kExpressionDim, rng);
  w.g_ts = nets::make_generator(params::kExpressionDim, config.generator_width,
                                params::kExpressionDim, rng);
  w.d_s = nets::make_discriminator(params::kExpressionDim,
                                   config.discriminator_width, rng);
  w.d_t = nets::make_discriminator(params::kExpressionDim,
                                   config.discriminator_width, rng);

  AdamState gen_opt, disc_opt;
  std::vector<HistoryRow> history;
  history.reserve(config.epochs * iters_per_epoch);

  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.learning_rate;
    if (config.lr_halve_every_epochs > 0)
      lr *= std::pow(0.5,
                     static_cast<double>(epoch / config.lr_halve_every_epochs));

    for (std::size_t step = 0; step < iters_per_epoch; ++step) {
      ++iter;
      std::vector<const params::Window*> bs(config.batch_size);
      std::vector<const params::Window*> bt(config.batch_size);
      for (std::size_t b = 0; b < config.batch_size; ++b)
        bs[b] = &ws[rng.integer(ws.size())];
      for (std::size_t b = 0; b < config.batch_size; ++b)
        bt[b] = &wt[rng.integer(wt.size())];

      ad::Tape tape;
      nets::LeafList g_leaves, d_leaves;
      nets::BoundGenerator bg_st = nets::bind(tape, w.g_st, &g_leaves);
      nets::BoundGenerator bg_ts = nets::bind(tape, w.g_ts, &g_leaves);

      std::vector<ad::Value> s_steps = nets::window_batch_constants(tape, bs);
      std::vector<ad::Value> t_steps = nets::window_batch_constants(tape, bt);
      std::vector<ad::Value> fake_st = nets::generator_forward(bg_st, s_steps);
      std::vector<ad::Value> fake_ts = nets::generator_forward(bg_ts, t_steps);

      // Discriminator phase: ascend the adversarial objective on real
      // windows and detached fakes.
      std::vector<ad::Value> fake_st_d, fake_ts_d;
      fake_st_d.reserve(fake_st.size());
      fake_ts_d.reserve(fake_ts.size());
      for (const ad::Value& v : fake_st) fake_st_d.push_back(ad::detach(v));
      for (const ad::Value& v : fake_ts) fake_ts_d.push_back(ad::detach(v));

      nets::BoundDiscriminator bd_s = nets::bind(tape, w.d_s, &d_leaves);
      nets::BoundDiscriminator bd_t = nets::bind(tape, w.d_t, &d_leaves);
      ad::Value l_adv_d = losses::adversarial_objective(
          nets::discriminator_forward(bd_t, t_steps),
          nets::discriminator_forward(bd_t, fake_st_d),
          nets::discriminator_forward(bd_s, s_steps),
          nets::discriminator_forward(bd_s, fake_ts_d));
      const double adv_d_value = l_adv_d.scalar();
      tape.backward(ad::scale(l_adv_d, -1.0));

      BoundGroup dg = collect_grads(tape, d_leaves);
      clip_core(dg.grads, dg.sizes, config.clip_norm);
      adam_core(dg.tensors, const_ptrs(dg.grads), disc_opt, lr,
                config.adam_beta1, config.adam_beta2, config.adam_eps);

      // Generator phase: rebind the updated discriminators as fresh
      // leaves and score the live fakes.
      nets::BoundDiscriminator bd_s2 = nets::bind(tape, w.d_s);
      nets::BoundDiscriminator bd_t2 = nets::bind(tape, w.d_t);
      ad::Value l_adv_g = losses::generator_adversarial(
          nets::discriminator_forward(bd_t2, fake_st),
          nets::discriminator_forward(bd_s2, fake_ts),
          config.non_saturating_gan);

      std::vector<ad::Value> cyc_s = nets::generator_forward(bg_ts, fake_st);
      std::vector<ad::Value> cyc_t = nets::generator_forward(bg_st, fake_ts);
      ad::Value l_cc = ad::add(losses::mean_window_l1(cyc_s, s_steps),
                               losses::mean_window_l1(cyc_t, t_steps));

      bool degenerate = false;
      ad::Value sim_s =
          losses::mean_mouth_cosine(s_steps, fake_st, mouth, &degenerate);
      ad::Value sim_t =
          losses::mean_mouth_cosine(t_steps, fake_ts, mouth, &degenerate);
      ad::Value one = tape.constant_scalar(1.0);
      ad::Value l_me = ad::add(ad::sub(one, sim_s), ad::sub(one, sim_t));

      ad::Value l_total =
          losses::total_loss(l_cc, l_adv_g, l_me, config.loss_weights);
      if (!std::isfinite(l_total.scalar()))
        fail("train: non-finite loss at iteration " + std::to_string(iter));
      tape.backward(l_total);

      BoundGroup gg = collect_grads(tape, g_leaves);
      clip_core(gg.grads, gg.sizes, config.clip_norm);
      adam_core(gg.tensors, const_ptrs(gg.grads), gen_opt, lr, config.adam_beta1,
                config.adam_beta2, config.adam_eps);

      history.push_back({iter, l_cc.scalar(), adv_d_value, l_adv_g.scalar(),
                         l_me.scalar(), l_total.scalar()});
    }
  }

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.weights = std::move(w);
  result.checkpoint.gen_opt = std::move(gen_opt);
  result.checkpoint.disc_opt = std::move(disc_opt);
  result.checkpoint.stats_source = std::move(stats_src);
  result.checkpoint.stats_target = std::move(stats_tgt);
  result.checkpoint.epoch = config.epochs;
  result.history = std::move(history);
  return result;
}

// ---- checkpoint serialization ----------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_doubles(std::ostream& out, const double* p, std::size_t n) {
  static_assert(sizeof(double) == 8);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &p[i], 8);
    put_u64(out, bits);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(std::string("checkpoint: truncated file reading ") + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    fail(std::string("checkpoint: truncated file reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void get_doubles(std::istream& in, double* p, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = get_u64(in, what);
    std::memcpy(&p[i], &bits, 8);
  }
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
  const std::uint32_t n = get_u32(in, what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n))
    fail(std::string("checkpoint: truncated file reading ") + what);
  return s;
}

void put_stats_vec(std::ostream& out, const std::vector<double>& v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  put_doubles(out, v.data(), v.size());
}

std::vector<double> get_stats_vec(std::istream& in, const char* what) {
  const std::uint32_t n = get_u32(in, what);
  if (n != params::kExpressionDim)
    fail(std::string("checkpoint: ") + what + " has dimension " +
         std::to_string(n) + ", expected " +
         std::to_string(params::kExpressionDim));
  std::vector<double> v(n);
  get_doubles(in, v.data(), n, what);
  return v;
}

// Weight blocks in a fixed order: every tensor of every network, tagged
// with "<net>/<tensor>".
template <typename Fn>
void visit_all_tensors(TranslatorWeights& w, const Fn& fn) {
  auto wrap = [&](const char* prefix) {
    return [&fn, prefix](const std::string& name, nets::Tensor& t) {
      fn(std::string(prefix) + "/" + name, t);
    };
  };
  nets::visit_tensors(w.g_st, wrap("g_st"));
  nets::visit_tensors(w.g_ts, wrap("g_ts"));
  nets::visit_tensors(w.d_s, wrap("d_s"));
  nets::visit_tensors(w.d_t, wrap("d_t"));
}

void put_adam_state(std::ostream& out, const AdamState& s) {
  put_u64(out, s.step);
  put_u32(out, static_cast<std::uint32_t>(s.m.size()));
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(s.m[i].size()));
    put_doubles(out, s.m[i].data(), s.m[i].size());
    put_doubles(out, s.v[i].data(), s.v[i].size());
  }
}

AdamState get_adam_state(std::istream& in, const char* what,
                         const std::vector<std::size_t>& expected_sizes) {
  AdamState s;
  s.step = get_u64(in, what);
  const std::uint32_t count = get_u32(in, what);
  if (count != 0 && count != expected_sizes.size())
    fail(std::string("checkpoint: ") + what + " has " + std::to_string(count) +
         " tensors, expected " + std::to_string(expected_sizes.size()));
  s.m.resize(count);
  s.v.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t n = get_u32(in, what);
    if (n != expected_sizes[i])
      fail(std::string("checkpoint: ") + what + " tensor " + std::to_string(i) +
           " has " + std::to_string(n) + " elements, expected " +
           std::to_string(expected_sizes[i]));
    s.m[i].resize(n);
    s.v[i].resize(n);
    get_doubles(in, s.m[i].data(), n, what);
    get_doubles(in, s.v[i].data(), n, what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("checkpoint: cannot open '" + path + "' for writing");

  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_string(out, train_config_to_json(c.config));
  put_u32(out, static_cast<std::uint32_t>(c.epoch));
  put_stats_vec(out, c.stats_source.mean);
  put_stats_vec(out, c.stats_source.stddev);
  put_stats_vec(out, c.stats_target.mean);
  put_stats_vec(out, c.stats_target.stddev);

  std::uint32_t blocks = 0;
  visit_all_tensors(const_cast<TranslatorWeights&>(c.weights),
                    [&](const std::string&, nets::Tensor&) { ++blocks; });
  put_u32(out, blocks);
  visit_all_tensors(const_cast<TranslatorWeights&>(c.weights),
                    [&](const std::string& name, nets::Tensor& t) {
                      put_string(out, name);
                      put_u32(out, static_cast<std::uint32_t>(t.rows));
                      put_u32(out, static_cast<std::uint32_t>(t.cols));
                      put_doubles(out, t.data.data(), t.data.size());
                    });

  put_adam_state(out, c.gen_opt);
  put_adam_state(out, c.disc_opt);
  out.flush();
  if (!out) fail("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("checkpoint: cannot open '" + path + "'");

  char magic[4];
  if (!in.read(magic, 4)) fail("checkpoint: truncated file reading magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail("checkpoint: bad magic (not a DSTW file)");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kVersion)
    fail("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint c;
  c.config = train_config_from_json(get_string(in, "config"));
  c.epoch = get_u32(in, "epoch");
  c.stats_source.mean = get_stats_vec(in, "source mean");
  c.stats_source.stddev = get_stats_vec(in, "source stddev");
  c.stats_target.mean = get_stats_vec(in, "target mean");
  c.stats_target.stddev = get_stats_vec(in, "target stddev");

  rng::Rng scratch(0);
  c.weights.g_st =
      nets::make_generator(params::kExpressionDim, c.config.generator_width,
                           params::kExpressionDim, scratch);
  c.weights.g_ts =
      nets::make_generator(params::kExpressionDim, c.config.generator_width,
                           params::kExpressionDim, scratch);
  c.weights.d_s = nets::make_discriminator(params::kExpressionDim,
                                           c.config.discriminator_width, scratch);
  c.weights.d_t = nets::make_discriminator(params::kExpressionDim,
                                           c.config.discriminator_width, scratch);

  std::uint32_t expected_blocks = 0;
  visit_all_tensors(c.weights,
                    [&](const std::string&, nets::Tensor&) { ++expected_blocks; });
  const std::uint32_t blocks = get_u32(in, "weight block count");
  if (blocks != expected_blocks)
    fail("checkpoint: " + std::to_string(blocks) + " weight blocks, expected " +
         std::to_string(expected_blocks));

  std::vector<std::size_t> gen_sizes, disc_sizes;
  visit_all_tensors(c.weights, [&](const std::string& name, nets::Tensor& t) {
    const std::string block_name = get_string(in, "weight block name");
    if (block_name != name)
      fail("checkpoint: weight block '" + block_name + "' where '" + name +
           "' was expected");
    const std::uint32_t rows = get_u32(in, "weight block rows");
    const std::uint32_t cols = get_u32(in, "weight block cols");
    if (rows != t.rows || cols != t.cols)
      fail("checkpoint: block '" + name + "' is " + std::to_string(rows) + "x" +
           std::to_string(cols) + ", expected " + std::to_string(t.rows) + "x" +
           std::to_string(t.cols));
    get_doubles(in, t.data.data(), t.data.size(), "weight block data");
    if (name.rfind("g_", 0) == 0) gen_sizes.push_back(t.data.size());
    else disc_sizes.push_back(t.data.size());
  });

  c.gen_opt = get_adam_state(in, "generator optimizer state", gen_sizes);
  c.disc_opt = get_adam_state(in, "discriminator optimizer state", disc_sizes);
  return c;
}

// ---- inference -------------------------------------------------------------

Direction direction_from_string(const std::string& s) {
  if (s == "st") return Direction::st;
  if (s == "ts") return Direction::ts;
  throw std::invalid_argument("direction must be 'st' or 'ts', got '" + s + "'");
}

params::ExpressionSequence translate_sequence(
    Checkpoint& c, const params::ExpressionSequence& input, Direction dir) {
  const std::size_t frames = input.frames();
  if (frames == 0) fail("translate: empty input sequence");
  const std::size_t n = c.config.window;
  constexpr std::size_t dim = params::kExpressionDim;

  nets::GeneratorWeights& gen =
      dir == Direction::st ? c.weights.g_st : c.weights.g_ts;
  const params::NormStats& stats_in =
      dir == Direction::st ? c.stats_source : c.stats_target;
  const params::NormStats& stats_out =
      dir == Direction::st ? c.stats_target : c.stats_source;
  if (stats_in.mean.size() != dim || stats_in.stddev.size() != dim ||
      stats_out.mean.size() != dim || stats_out.stddev.size() != dim)
    fail("translate: checkpoint is missing normalization stats");

  // Normalize under the input corpus stats, replicate-pad the first frame
  // so every output frame sees a full window ending at itself.
  const std::size_t padded_frames = frames + n - 1;
  std::vector<double> padded(padded_frames * dim);
  for (std::size_t f = 0; f < padded_frames; ++f) {
    const std::size_t src = f < n - 1 ? 0 : f - (n - 1);
    const double* row = input.data.data() + src * dim;
    for (std::size_t j = 0; j < dim; ++j)
      padded[f * dim + j] = (row[j] - stats_in.mean[j]) / stats_in.stddev[j];
  }

  params::ExpressionSequence out;
  out.frame_rate = input.frame_rate;
  out.data.resize(frames * dim);

  constexpr std::size_t kChunk = 64;
  std::vector<double> step_rows;
  for (std::size_t f0 = 0; f0 < frames; f0 += kChunk) {
    const std::size_t batch = std::min(kChunk, frames - f0);
    ad::Tape tape;
    nets::BoundGenerator bg = nets::bind(tape, gen);
    std::vector<ad::Value> steps;
    steps.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      step_rows.assign(batch * dim, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* row = padded.data() + (f0 + b + t) * dim;
        std::copy(row, row + dim, step_rows.begin() + b * dim);
      }
      steps.push_back(tape.constant(batch, dim, step_rows.data()));
    }
    const std::vector<ad::Value> outputs = nets::generator_forward(bg, steps);
    const double* last = outputs.back().data();
    for (std::size_t b = 0; b < batch; ++b) {
      double* dst = out.data.data() + (f0 + b) * dim;
      for (std::size_t j = 0; j < dim; ++j)
        dst[j] = last[b * dim + j] * stats_out.stddev[j] + stats_out.mean[j];
    }
  }
  return out;
}

params::ExpressionSequence interpolate_style(
    const params::ExpressionSequence& source,
    const params::ExpressionSequence& translated, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("interpolate_style: alpha must be in [0,1]");
  if (source.frames() != translated.frames())
    throw std::invalid_argument(
        "interpolate_style: length mismatch (" +
        std::to_string(source.frames()) + " vs " +
        std::to_string(translated.frames()) + " frames)");
  params::ExpressionSequence out;
  out.frame_rate = source.frame_rate;
  out.data.resize(source.data.size());
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (1.0 - alpha) * source.data[i] + alpha * translated.data[i];
  return out;
}

void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("history: cannot open '" + path + "' for writing");
  out << "iter,L_cc,L_adv_d,L_adv_g,L_me,L_total\n";
  char buf[64];
  for (const HistoryRow& r : history) {
    out << r.iter;
    for (double v : {r.l_cc, r.l_adv_d, r.l_adv_g, r.l_me, r.l_total}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  out.flush();
  if (!out) fail("history: write to '" + path + "' failed");
}

}  // namespace dubstyle::trainer
