#pragma once

// Training objectives: cycle-consistency, bidirectional adversarial, and
// the cosine mouth-expression loss, plus the weighted total.
//
// The batched building blocks operate on per-step value lists (each
// B x dim, one list entry per window step) and aggregate by batch mean,
// so a batch of one window reproduces the single-window definitions
// exactly. The single-window entry points below them take plain Windows
// and run the network forwards themselves.
//
// Sign conventions, fixed here once:
//   - The mouth term is (1 - cosine similarity) per direction, so
//     minimizing the total aligns mouth articulation.
//   - The adversarial objective is the bidirectional log form; the
//     discriminators take an ascent step on it (the trainer descends on
//     its negation), and the generators by default descend on the
//     log(1 - mean(d(fake))) terms, with a non-saturating
//     -log(mean(d(fake))) variant behind a flag.

#include "dubstyle/autodiff.hpp"
#include "dubstyle/nets.hpp"
#include "dubstyle/params.hpp"

#include <vector>

namespace dubstyle::losses {

// Discriminator scores are clamped to [eps, 1-eps] before any logarithm.
constexpr double kScoreClampEps = 1e-7;
// Mouth sub-vectors with l2 norm below this contribute similarity 0 for
// their step instead of erroring (degenerate-step policy).
constexpr double kCosineEps = 1e-8;

struct LossWeights {
  double lambda_cc = 10.0;
  double lambda_adv = 1.0;
  double lambda_me = 5.0;
};

// ---- Batched graph building blocks ----------------------------------------

// Batch mean over windows of ||a - b||_1 summed over every step and
// coefficient.
ad::Value mean_window_l1(const std::vector<ad::Value>& a,
                         const std::vector<ad::Value>& b);

// Batch mean of log(mean over steps of clamped scores); scores are B x 1
// per step. Throws on non-finite scores.
ad::Value mean_log_score(const std::vector<ad::Value>& scores);
// Batch mean of log(1 - mean over steps of clamped scores).
ad::Value mean_log_one_minus_score(const std::vector<ad::Value>& scores);

// Batch mean over windows of the per-step mean cosine similarity between
// the mouth sub-vectors of a and b. Degenerate steps contribute 0 and set
// *degenerate when provided.
ad::Value mean_mouth_cosine(const std::vector<ad::Value>& a,
                            const std::vector<ad::Value>& b,
                            const params::MouthIndexSet& m,
                            bool* degenerate = nullptr);

// Full bidirectional adversarial objective from four score lists:
//   log(mean d_t(t)) + log(1 - mean d_t(g_st(s)))
// + log(mean d_s(s)) + log(1 - mean d_s(g_ts(t)))
ad::Value adversarial_objective(const std::vector<ad::Value>& real_t_scores,
                                const std::vector<ad::Value>& fake_st_scores,
                                const std::vector<ad::Value>& real_s_scores,
                                const std::vector<ad::Value>& fake_ts_scores);

// Generator-phase adversarial part over the two fake score lists.
ad::Value generator_adversarial(const std::vector<ad::Value>& fake_st_scores,
                                const std::vector<ad::Value>& fake_ts_scores,
                                bool non_saturating);

// lambda_cc * cc + lambda_adv * adv + lambda_me * me
ad::Value total_loss(const ad::Value& cc, const ad::Value& adv,
                     const ad::Value& me, const LossWeights& w);
double total_loss(double cc, double adv, double me, const LossWeights& w);

// ---- Single-window entry points --------------------------------------------

// ||g_ts(g_st(s)) - s||_1 + ||g_st(g_ts(t)) - t||_1 over all steps.
ad::Value cycle_loss(ad::Tape& tape, const params::Window& s,
                     const params::Window& t, const nets::BoundGenerator& g_st,
                     const nets::BoundGenerator& g_ts);

ad::Value adversarial_loss(ad::Tape& tape, const params::Window& s,
                           const params::Window& t,
                           const nets::BoundGenerator& g_st,
                           const nets::BoundGenerator& g_ts,
                           const nets::BoundDiscriminator& d_s,
                           const nets::BoundDiscriminator& d_t);

// Mean over steps of the mouth-coefficient cosine, in [-1, 1].
ad::Value cosine_mouth_similarity(ad::Tape& tape, const params::Window& a,
                                  const params::Window& b,
                                  const params::MouthIndexSet& m,
                                  bool* degenerate = nullptr);

// [1 - sim(s, g_st(s))] + [1 - sim(t, g_ts(t))], in [0, 4].
ad::Value mouth_expression_loss(ad::Tape& tape, const params::Window& s,
                                const params::Window& t,
                                const nets::BoundGenerator& g_st,
                                const nets::BoundGenerator& g_ts,
                                const params::MouthIndexSet& m,
                                bool* degenerate = nullptr);

// Plain-array cosine on two mouth sub-vectors with the same degenerate
// policy; shared with the evaluation metrics.
double mouth_cosine(const double* a, const double* b, std::size_t n,
                    bool* degenerate = nullptr);

}  // namespace dubstyle::losses
