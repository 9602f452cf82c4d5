#include "dubstyle/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dubstyle::losses {

namespace {

void check_step_lists(const char* who, const std::vector<ad::Value>& a,
                      const std::vector<ad::Value>& b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty step list");
  }
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(who) + ": step count mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].rows() != b[t].rows() || a[t].cols() != b[t].cols()) {
      throw std::invalid_argument(std::string(who) + ": step " +
                                  std::to_string(t) + " shape mismatch");
    }
  }
}

void check_scores(const char* who, const std::vector<ad::Value>& scores) {
  if (scores.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty score list");
  }
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const ad::Value& s = scores[t];
    if (s.cols() != 1 || s.rows() != scores[0].rows()) {
      throw std::invalid_argument(std::string(who) + ": step " +
                                  std::to_string(t) +
                                  " scores must be batch x 1");
    }
    const double* d = s.data();
    for (std::size_t r = 0; r < s.rows(); ++r) {
      if (!std::isfinite(d[r])) {
        throw std::runtime_error(std::string(who) +
                                 ": non-finite discriminator score at step " +
                                 std::to_string(t));
      }
    }
  }
}

// Mean over steps of the per-window clamped score, B x 1.
ad::Value step_mean_clamped(const std::vector<ad::Value>& scores) {
  ad::Value acc = ad::clamp(scores[0], kScoreClampEps, 1.0 - kScoreClampEps);
  for (std::size_t t = 1; t < scores.size(); ++t) {
    acc = ad::add(acc, ad::clamp(scores[t], kScoreClampEps,
                                 1.0 - kScoreClampEps));
  }
  return ad::scale(acc, 1.0 / static_cast<double>(scores.size()));
}

}  // namespace

ad::Value mean_window_l1(const std::vector<ad::Value>& a,
                         const std::vector<ad::Value>& b) {
  check_step_lists("mean_window_l1", a, b);
  const double batch = static_cast<double>(a[0].rows());
  ad::Value acc = ad::l1_norm(ad::sub(a[0], b[0]));
  for (std::size_t t = 1; t < a.size(); ++t) {
    acc = ad::add(acc, ad::l1_norm(ad::sub(a[t], b[t])));
  }
  return ad::scale(acc, 1.0 / batch);
}

ad::Value mean_log_score(const std::vector<ad::Value>& scores) {
  check_scores("mean_log_score", scores);
  return ad::mean(ad::log_nat(step_mean_clamped(scores)));
}

ad::Value mean_log_one_minus_score(const std::vector<ad::Value>& scores) {
  check_scores("mean_log_one_minus_score", scores);
  ad::Tape& tape = scores[0].tape();
  ad::Value ms = step_mean_clamped(scores);
  ad::Value one_minus =
      ad::add_rowvec(ad::scale(ms, -1.0), tape.constant_scalar(1.0));
  return ad::mean(ad::log_nat(one_minus));
}

ad::Value mean_mouth_cosine(const std::vector<ad::Value>& a,
                            const std::vector<ad::Value>& b,
                            const params::MouthIndexSet& m, bool* degenerate) {
  check_step_lists("mean_mouth_cosine", a, b);
  ad::Tape& tape = a[0].tape();
  const std::vector<std::size_t> idx(m.indices().begin(), m.indices().end());
  const std::size_t batch = a[0].rows();
  const double inf = std::numeric_limits<double>::infinity();

  ad::Value acc = tape.constant_scalar(0.0);
  bool first = true;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ad::Value ma = ad::gather_cols(a[t], idx);
    ad::Value mb = ad::gather_cols(b[t], idx);
    ad::Value na = ad::sqrt_val(ad::sum_cols(ad::mul(ma, ma)));
    ad::Value nb = ad::sqrt_val(ad::sum_cols(ad::mul(mb, mb)));
    ad::Value denom =
        ad::clamp(ad::mul(na, nb), kCosineEps * kCosineEps, inf);
    ad::Value cosv = ad::div(ad::sum_cols(ad::mul(ma, mb)), denom);

    // The mask is plain forward data, so masked rows contribute exactly
    // zero value and zero gradient.
    std::vector<double> mask(batch, 1.0);
    const double* nad = na.data();
    const double* nbd = nb.data();
    bool any_masked = false;
    for (std::size_t r = 0; r < batch; ++r) {
      if (nad[r] < kCosineEps || nbd[r] < kCosineEps) {
        mask[r] = 0.0;
        any_masked = true;
      }
    }
    if (any_masked && degenerate != nullptr) {
      *degenerate = true;
    }
    ad::Value masked =
        any_masked ? ad::mul(cosv, tape.constant(batch, 1, mask.data()))
                   : cosv;
    acc = first ? masked : ad::add(acc, masked);
    first = false;
  }
  ad::Value per_window =
      ad::scale(acc, 1.0 / static_cast<double>(a.size()));
  return ad::mean(per_window);
}

ad::Value adversarial_objective(const std::vector<ad::Value>& real_t_scores,
                                const std::vector<ad::Value>& fake_st_scores,
                                const std::vector<ad::Value>& real_s_scores,
                                const std::vector<ad::Value>& fake_ts_scores) {
  ad::Value st = ad::add(mean_log_score(real_t_scores),
                         mean_log_one_minus_score(fake_st_scores));
  ad::Value ts = ad::add(mean_log_score(real_s_scores),
                         mean_log_one_minus_score(fake_ts_scores));
  return ad::add(st, ts);
}

ad::Value generator_adversarial(const std::vector<ad::Value>& fake_st_scores,
                                const std::vector<ad::Value>& fake_ts_scores,
                                bool non_saturating) {
  if (non_saturating) {
    return ad::scale(ad::add(mean_log_score(fake_st_scores),
                             mean_log_score(fake_ts_scores)),
                     -1.0);
  }
  return ad::add(mean_log_one_minus_score(fake_st_scores),
                 mean_log_one_minus_score(fake_ts_scores));
}

ad::Value total_loss(const ad::Value& cc, const ad::Value& adv,
                     const ad::Value& me, const LossWeights& w) {
  return ad::add(ad::add(ad::scale(cc, w.lambda_cc), ad::scale(adv, w.lambda_adv)),
                 ad::scale(me, w.lambda_me));
}

double total_loss(double cc, double adv, double me, const LossWeights& w) {
  if (!std::isfinite(cc) || !std::isfinite(adv) || !std::isfinite(me)) {
    throw std::runtime_error("total_loss: non-finite loss term");
  }
  return w.lambda_cc * cc + w.lambda_adv * adv + w.lambda_me * me;
}

ad::Value cycle_loss(ad::Tape& tape, const params::Window& s,
                     const params::Window& t, const nets::BoundGenerator& g_st,
                     const nets::BoundGenerator& g_ts) {
  std::vector<ad::Value> s_steps = nets::window_constants(tape, s);
  std::vector<ad::Value> t_steps = nets::window_constants(tape, t);
  std::vector<ad::Value> cyc_s =
      nets::generator_forward(g_ts, nets::generator_forward(g_st, s_steps));
  std::vector<ad::Value> cyc_t =
      nets::generator_forward(g_st, nets::generator_forward(g_ts, t_steps));
  return ad::add(mean_window_l1(cyc_s, s_steps),
                 mean_window_l1(cyc_t, t_steps));
}

ad::Value adversarial_loss(ad::Tape& tape, const params::Window& s,
                           const params::Window& t,
                           const nets::BoundGenerator& g_st,
                           const nets::BoundGenerator& g_ts,
                           const nets::BoundDiscriminator& d_s,
                           const nets::BoundDiscriminator& d_t) {
  std::vector<ad::Value> s_steps = nets::window_constants(tape, s);
  std::vector<ad::Value> t_steps = nets::window_constants(tape, t);
  std::vector<ad::Value> fake_st = nets::generator_forward(g_st, s_steps);
  std::vector<ad::Value> fake_ts = nets::generator_forward(g_ts, t_steps);
  return adversarial_objective(nets::discriminator_forward(d_t, t_steps),
                               nets::discriminator_forward(d_t, fake_st),
                               nets::discriminator_forward(d_s, s_steps),
                               nets::discriminator_forward(d_s, fake_ts));
}

ad::Value cosine_mouth_similarity(ad::Tape& tape, const params::Window& a,
                                  const params::Window& b,
                                  const params::MouthIndexSet& m,
                                  bool* degenerate) {
  return mean_mouth_cosine(nets::window_constants(tape, a),
                           nets::window_constants(tape, b), m, degenerate);
}

ad::Value mouth_expression_loss(ad::Tape& tape, const params::Window& s,
                                const params::Window& t,
                                const nets::BoundGenerator& g_st,
                                const nets::BoundGenerator& g_ts,
                                const params::MouthIndexSet& m,
                                bool* degenerate) {
  std::vector<ad::Value> s_steps = nets::window_constants(tape, s);
  std::vector<ad::Value> t_steps = nets::window_constants(tape, t);
  ad::Value sim_s =
      mean_mouth_cosine(s_steps, nets::generator_forward(g_st, s_steps), m,
                        degenerate);
  ad::Value sim_t =
      mean_mouth_cosine(t_steps, nets::generator_forward(g_ts, t_steps), m,
                        degenerate);
  ad::Value one = tape.constant_scalar(1.0);
  return ad::add(ad::sub(one, sim_s), ad::sub(one, sim_t));
}

double mouth_cosine(const double* a, const double* b, std::size_t n,
                    bool* degenerate) {
  double dot = 0.0;
  double na2 = 0.0;
  double nb2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na = std::sqrt(na2);
  const double nb = std::sqrt(nb2);
  if (na < kCosineEps || nb < kCosineEps) {
    if (degenerate != nullptr) {
      *degenerate = true;
    }
    return 0.0;
  }
  return dot / (na * nb);
}

}  // namespace dubstyle::losses
