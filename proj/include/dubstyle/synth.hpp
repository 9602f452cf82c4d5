#pragma once

// Synthetic two-actor corpora with a known ground-truth style
// relationship, plus the evaluation metrics for the style-transfer
// experiment.
//
// Content model: mouth coefficients (indices 0-9 by construction) carry a
// shared sum-of-sinusoids articulation signal, phase-shifted per
// coefficient so the 10-dim mouth direction genuinely rotates over time;
// every coefficient additionally carries first-order-smoothed Gaussian
// idle noise. A style is a per-coefficient gain/offset plus the noise
// parameters.
//
// gen_corpus is fully determined by (spec, frames, seed): the seed drives
// only the noise, so closed-form content values (e.g. peaks) are exactly
// testable. paired_style_corpora additionally draws a global content
// phase from content_seed, shared by both corpora; the two corpora sample
// the content on disjoint halves of a common timeline (offset by half a
// frame to avoid phase re-alignment), so training never sees aligned
// pairs, while the returned oracle gives the target-styled, noise-free
// rendition of the source content, frame for frame.

#include "dubstyle/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dubstyle::synth {

struct Sinusoid {
  double amplitude = 0.0;
  double frequency = 0.0;  // cycles per frame, in (0, 0.5)
  double phase = 0.0;      // radians
};

struct StyleSpec {
  std::vector<double> gain;    // 64, all > 0
  std::vector<double> offset;  // 64
  double noise_half_life = 10.0;  // frames, > 0
  std::vector<Sinusoid> mouth_pattern;
  double noise_amplitude = 0.05;  // stationary noise stddev, >= 0

  StyleSpec();
  void validate() const;  // throws std::invalid_argument
};

StyleSpec default_source_spec();
// Same content pattern, mouth gains doubled.
StyleSpec default_target_spec();

StyleSpec style_spec_from_json(const std::string& json_text);
StyleSpec load_style_spec(const std::string& path);
std::string style_spec_to_json(const StyleSpec& spec);

params::ExpressionSequence gen_corpus(const StyleSpec& spec,
                                      std::size_t frames, std::uint64_t seed);

struct PairedCorpora {
  params::ExpressionSequence source;  // source style, first half timeline
  params::ExpressionSequence target;  // target style, second half timeline
  // Target-styled noise-free content at the source frames; evaluation
  // only, never shown to training.
  params::ExpressionSequence oracle;
};

// The source spec's mouth pattern defines the shared content for both
// corpora; the target spec contributes gain/offset/noise styling.
PairedCorpora paired_style_corpora(std::uint64_t content_seed,
                                   const StyleSpec& spec_src,
                                   const StyleSpec& spec_tgt,
                                   std::size_t frames);

struct StyleMetrics {
  // Mean frame-wise cosine between source and translated mouth
  // sub-vectors; frames where either norm is degenerate are excluded.
  double cosine_alignment = 0.0;
  // Translated RMS / source RMS per mouth coefficient, averaged.
  double amplitude_ratio = 0.0;
  // Mean over coefficients of |mean difference| / |variance difference|
  // between the translated sequence and the target corpus stats.
  double mean_distance = 0.0;
  double variance_distance = 0.0;
  // Same cosine metric, translated vs. the oracle rendition.
  double oracle_alignment = 0.0;
};

StyleMetrics eval_style(const params::ExpressionSequence& source_test,
                        const params::ExpressionSequence& translated,
                        const params::NormStats& target_stats,
                        const params::ExpressionSequence& oracle,
                        const params::MouthIndexSet& m);

std::string metrics_to_json(const StyleMetrics& m);

}  // namespace dubstyle::synth
