#include "dubstyle/synth.hpp"

#include "dubstyle/losses.hpp"
#include "dubstyle/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dubstyle::synth {

namespace {

using json = nlohmann::json;

constexpr std::size_t kMouthCount = 10;  // coefficients 0-9 by construction
constexpr double kMouthPhaseStep = 0.0;  // radians between mouth coefficients
constexpr double kFrameRate = 25.0;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

double content_at(const std::vector<Sinusoid>& pattern, double t,
                  double t_shift, std::size_t mouth_ordinal) {
  const double phase =
      kMouthPhaseStep * static_cast<double>(mouth_ordinal);
  double c = 0.0;
  for (const Sinusoid& s : pattern) {
    c += s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency *
                                    (t + t_shift) +
                                s.phase + phase);
  }
  return c;
}

params::ExpressionSequence synth_corpus(const StyleSpec& spec,
                                        const std::vector<Sinusoid>& pattern,
                                        std::size_t frames, double t_shift,
                                        double t_start, rng::Rng& noise_rng) {
  constexpr std::size_t dim = params::kExpressionDim;
  params::ExpressionSequence seq;
  seq.frame_rate = kFrameRate;
  seq.data.resize(frames * dim);

  // First-order smoothed noise with stationary stddev noise_amplitude:
  // e(f) = a e(f-1) + amp sqrt(1-a^2) g, a = 0.5^(1/half_life).
  const double a = std::pow(0.5, 1.0 / spec.noise_half_life);
  const double b = spec.noise_amplitude * std::sqrt(1.0 - a * a);
  std::vector<double> noise(dim, 0.0);

  for (std::size_t f = 0; f < frames; ++f) {
    double* row = seq.data.data() + f * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const double g = noise_rng.gaussian();
      noise[j] = f == 0 ? spec.noise_amplitude * g : a * noise[j] + b * g;
      double v = spec.offset[j] + noise[j];
      if (j < kMouthCount) {
        v += spec.gain[j] *
             content_at(pattern, t_start + static_cast<double>(f), t_shift, j);
      }
      row[j] = v;
    }
  }
  return seq;
}

}  // namespace

StyleSpec::StyleSpec()
    : gain(params::kExpressionDim, 1.0), offset(params::kExpressionDim, 0.0) {}

void StyleSpec::validate() const {
  if (gain.size() != params::kExpressionDim)
    fail("StyleSpec: gain must have " +
         std::to_string(params::kExpressionDim) + " entries, got " +
         std::to_string(gain.size()));
  if (offset.size() != params::kExpressionDim)
    fail("StyleSpec: offset must have " +
         std::to_string(params::kExpressionDim) + " entries, got " +
         std::to_string(offset.size()));
  for (std::size_t j = 0; j < gain.size(); ++j) {
    if (!(gain[j] > 0.0) || !std::isfinite(gain[j]))
      fail("StyleSpec: gain[" + std::to_string(j) + "] must be positive");
    if (!std::isfinite(offset[j]))
      fail("StyleSpec: offset[" + std::to_string(j) + "] must be finite");
  }
  if (!(noise_half_life > 0.0) || !std::isfinite(noise_half_life))
    fail("StyleSpec: noise_half_life must be positive");
  if (!(noise_amplitude >= 0.0) || !std::isfinite(noise_amplitude))
    fail("StyleSpec: noise_amplitude must be non-negative");
  if (mouth_pattern.empty())
    fail("StyleSpec: mouth_pattern must have at least one sinusoid");
  for (std::size_t k = 0; k < mouth_pattern.size(); ++k) {
    const Sinusoid& s = mouth_pattern[k];
    if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase))
      fail("StyleSpec: sinusoid " + std::to_string(k) + " is not finite");
    if (!(s.frequency > 0.0) || !(s.frequency < 0.5))
      fail("StyleSpec: sinusoid " + std::to_string(k) +
           " frequency must be in (0, 0.5), got " +
           std::to_string(s.frequency));
  }
}

StyleSpec default_source_spec() {
  StyleSpec s;
  // Cosine-aligned harmonics form a positively skewed pulse train, like
  // bursts of mouth opening; the asymmetry makes the waveform's sign
  // statistically identifiable.
  constexpr double q = std::numbers::pi / 2.0;
  s.mouth_pattern = {{1.0, 0.031, q}, {0.6, 0.062, q}, {0.35, 0.093, q}};
  return s;
}

StyleSpec default_target_spec() {
  StyleSpec s = default_source_spec();
  for (std::size_t j = 0; j < kMouthCount; ++j) s.gain[j] = 2.0;
  return s;
}

StyleSpec style_spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("style spec: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("style spec: top level must be a JSON object");

  StyleSpec spec = default_source_spec();
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "gain") spec.gain = val.get<std::vector<double>>();
      else if (key == "offset") spec.offset = val.get<std::vector<double>>();
      else if (key == "noise_half_life")
        spec.noise_half_life = val.get<double>();
      else if (key == "noise_amplitude")
        spec.noise_amplitude = val.get<double>();
      else if (key == "mouth_pattern") {
        if (!val.is_array()) fail("style spec: mouth_pattern must be an array");
        spec.mouth_pattern.clear();
        for (const json& e : val) {
          Sinusoid s;
          for (const auto& [k2, v2] : e.items()) {
            if (k2 == "amplitude") s.amplitude = v2.get<double>();
            else if (k2 == "frequency") s.frequency = v2.get<double>();
            else if (k2 == "phase") s.phase = v2.get<double>();
            else fail("style spec: unknown sinusoid key '" + k2 + "'");
          }
          spec.mouth_pattern.push_back(s);
        }
      } else {
        fail("style spec: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      fail("style spec: key '" + key + "': " + e.what());
    }
  }
  spec.validate();
  return spec;
}

StyleSpec load_style_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("style spec: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return style_spec_from_json(text);
}

std::string style_spec_to_json(const StyleSpec& spec) {
  json j;
  j["gain"] = spec.gain;
  j["offset"] = spec.offset;
  j["noise_half_life"] = spec.noise_half_life;
  j["noise_amplitude"] = spec.noise_amplitude;
  json pattern = json::array();
  for (const Sinusoid& s : spec.mouth_pattern) {
    pattern.push_back({{"amplitude", s.amplitude},
                       {"frequency", s.frequency},
                       {"phase", s.phase}});
  }
  j["mouth_pattern"] = pattern;
  return j.dump(2);
}

params::ExpressionSequence gen_corpus(const StyleSpec& spec,
                                      std::size_t frames, std::uint64_t seed) {
  spec.validate();
  if (frames < 2)
    fail("gen_corpus: frames must be >= 2, got " + std::to_string(frames));
  rng::Rng rng(seed);
  return synth_corpus(spec, spec.mouth_pattern, frames, 0.0, 0.0, rng);
}

PairedCorpora paired_style_corpora(std::uint64_t content_seed,
                                   const StyleSpec& spec_src,
                                   const StyleSpec& spec_tgt,
                                   std::size_t frames) {
  spec_src.validate();
  spec_tgt.validate();
  if (frames < 2)
    fail("paired_style_corpora: frames must be >= 2, got " +
         std::to_string(frames));

  rng::Rng content_rng(content_seed);
  // Random time shift over one period of the slowest sinusoid: decorrelates
  // corpora generated from different content seeds while preserving the
  // waveform shape (a common additive phase would deform multi-harmonic
  // patterns instead of sliding them).
  double min_freq = spec_src.mouth_pattern.front().frequency;
  for (const Sinusoid& s : spec_src.mouth_pattern)
    min_freq = std::min(min_freq, s.frequency);
  const double t_shift = content_rng.uniform() / min_freq;
  rng::Rng src_noise(content_seed ^ 0x9e3779b97f4a7c15ULL);
  rng::Rng tgt_noise(content_seed ^ 0xc2b2ae3d27d4eb4fULL);

  // Disjoint halves of one timeline; the extra half frame keeps the
  // halves out of phase even when a frequency is commensurate with the
  // corpus length.
  const double tgt_start = static_cast<double>(frames) + 0.5;

  PairedCorpora out;
  out.source = synth_corpus(spec_src, spec_src.mouth_pattern, frames, t_shift,
                            0.0, src_noise);
  out.target = synth_corpus(spec_tgt, spec_src.mouth_pattern, frames, t_shift,
                            tgt_start, tgt_noise);

  out.oracle.frame_rate = kFrameRate;
  out.oracle.data.resize(frames * params::kExpressionDim);
  for (std::size_t f = 0; f < frames; ++f) {
    double* row = out.oracle.data.data() + f * params::kExpressionDim;
    for (std::size_t j = 0; j < params::kExpressionDim; ++j) {
      double v = spec_tgt.offset[j];
      if (j < kMouthCount) {
        v += spec_tgt.gain[j] * content_at(spec_src.mouth_pattern,
                                           static_cast<double>(f), t_shift, j);
      }
      row[j] = v;
    }
  }
  return out;
}

StyleMetrics eval_style(const params::ExpressionSequence& source_test,
                        const params::ExpressionSequence& translated,
                        const params::NormStats& target_stats,
                        const params::ExpressionSequence& oracle,
                        const params::MouthIndexSet& m) {
  const std::size_t frames = source_test.frames();
  if (translated.frames() != frames)
    fail("eval_style: source has " + std::to_string(frames) +
         " frames but translated has " + std::to_string(translated.frames()));
  if (oracle.frames() != frames)
    fail("eval_style: source has " + std::to_string(frames) +
         " frames but oracle has " + std::to_string(oracle.frames()));
  if (target_stats.mean.size() != params::kExpressionDim ||
      target_stats.stddev.size() != params::kExpressionDim)
    fail("eval_style: target stats must cover all coefficients");
  if (frames == 0) fail("eval_style: empty sequences");

  constexpr std::size_t dim = params::kExpressionDim;
  const auto& idx = m.indices();

  StyleMetrics out;

  // Frame-wise mouth cosine, degenerate frames excluded from the mean.
  auto mean_cosine = [&](const params::ExpressionSequence& a,
                         const params::ExpressionSequence& b) {
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> va(idx.size()), vb(idx.size());
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        va[k] = a.data[f * dim + idx[k]];
        vb[k] = b.data[f * dim + idx[k]];
      }
      bool degenerate = false;
      const double c =
          losses::mouth_cosine(va.data(), vb.data(), idx.size(), &degenerate);
      if (!degenerate) {
        sum += c;
        ++used;
      }
    }
    return used == 0 ? 0.0 : sum / static_cast<double>(used);
  };
  out.cosine_alignment = mean_cosine(source_test, translated);
  out.oracle_alignment = mean_cosine(oracle, translated);

  // Per-mouth-coefficient RMS ratio, averaged over coefficients with a
  // non-degenerate source RMS.
  {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double ss = 0.0, st = 0.0;
      for (std::size_t f = 0; f < frames; ++f) {
        const double s = source_test.data[f * dim + idx[k]];
        const double t = translated.data[f * dim + idx[k]];
        ss += s * s;
        st += t * t;
      }
      const double rms_s = std::sqrt(ss / static_cast<double>(frames));
      const double rms_t = std::sqrt(st / static_cast<double>(frames));
      if (rms_s > 1e-12) {
        sum += rms_t / rms_s;
        ++used;
      }
    }
    out.amplitude_ratio = used == 0 ? 0.0 : sum / static_cast<double>(used);
  }

  // Mean absolute distance of per-coefficient means and variances between
  // the translated sequence and the target corpus stats.
  {
    double dmean = 0.0, dvar = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      double mu = 0.0;
      for (std::size_t f = 0; f < frames; ++f)
        mu += translated.data[f * dim + j];
      mu /= static_cast<double>(frames);
      double var = 0.0;
      for (std::size_t f = 0; f < frames; ++f) {
        const double d = translated.data[f * dim + j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(frames);
      dmean += std::abs(mu - target_stats.mean[j]);
      dvar += std::abs(var - target_stats.stddev[j] * target_stats.stddev[j]);
    }
    out.mean_distance = dmean / static_cast<double>(dim);
    out.variance_distance = dvar / static_cast<double>(dim);
  }
  return out;
}

std::string metrics_to_json(const StyleMetrics& m) {
  json j;
  j["cosine_alignment"] = m.cosine_alignment;
  j["amplitude_ratio"] = m.amplitude_ratio;
  j["mean_distance"] = m.mean_distance;
  j["variance_distance"] = m.variance_distance;
  j["oracle_alignment"] = m.oracle_alignment;
  return j.dump(2);
}

}  // namespace dubstyle::synth
