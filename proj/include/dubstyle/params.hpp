#pragma once

// Face-parameter data model: the 261-dim per-frame parameter vector, the
// 64-dim expression sequences extracted from it, per-video normalization,
// sliding-window extraction, and the mouth-coefficient selector.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace dubstyle::params {

constexpr std::size_t kPoseDim = 6;
constexpr std::size_t kAlphaDim = 80;
constexpr std::size_t kBetaDim = 80;
constexpr std::size_t kExpressionDim = 64;
constexpr std::size_t kGammaDim = 27;
constexpr std::size_t kEyeDim = 2;
constexpr std::size_t kPackedDim = kPoseDim + kAlphaDim + kBetaDim +
                                   kExpressionDim + kGammaDim + 2 * kEyeDim;
static_assert(kPackedDim == 261);

// Offset of the expression block inside the packed layout
// pose | alpha | beta | delta | gamma | eye_l | eye_r.
constexpr std::size_t kExpressionOffset = kPoseDim + kAlphaDim + kBetaDim;

// Guard against division blow-up on (near-)constant coefficient traces.
constexpr double kStdEps = 1e-8;

// One frame's full face state. Pose is axis-angle rotation (3) plus
// translation (3); illumination is 9 spherical-harmonics coefficients per
// color channel; the eyes are 2D pupil positions.
struct ParameterVector {
  std::vector<double> pose = std::vector<double>(kPoseDim, 0.0);
  std::vector<double> identity_alpha = std::vector<double>(kAlphaDim, 0.0);
  std::vector<double> reflectance_beta = std::vector<double>(kBetaDim, 0.0);
  std::vector<double> expression_delta = std::vector<double>(kExpressionDim, 0.0);
  std::vector<double> illumination_gamma = std::vector<double>(kGammaDim, 0.0);
  std::vector<double> eye_left = std::vector<double>(kEyeDim, 0.0);
  std::vector<double> eye_right = std::vector<double>(kEyeDim, 0.0);
};

// Per-coefficient normalization statistics. `stddev` stores the guarded
// value max(population std, kStdEps), so normalize/denormalize are exact
// inverses even on constant traces.
struct NormStats {
  std::vector<double> mean;    // kExpressionDim entries
  std::vector<double> stddev;  // kExpressionDim entries
};

// An ordered per-frame sequence of 64-dim expression vectors, stored
// frame-major. `stats` is populated once the sequence has been normalized.
struct ExpressionSequence {
  std::vector<double> data;  // frames() x kExpressionDim
  double frame_rate = 0.0;   // metadata only
  std::optional<NormStats> stats;

  std::size_t frames() const { return data.size() / kExpressionDim; }
  double* frame(std::size_t i) { return data.data() + i * kExpressionDim; }
  const double* frame(std::size_t i) const {
    return data.data() + i * kExpressionDim;
  }
};

// N consecutive normalized expression vectors, oldest first.
struct Window {
  std::vector<double> steps;  // size() x kExpressionDim

  std::size_t size() const { return steps.size() / kExpressionDim; }
  double* step(std::size_t i) { return steps.data() + i * kExpressionDim; }
  const double* step(std::size_t i) const {
    return steps.data() + i * kExpressionDim;
  }
};

// The ten expression coefficients treated as mouth-specific. Validated at
// construction: exactly ten distinct indices, all < kExpressionDim.
class MouthIndexSet {
 public:
  static constexpr std::size_t kCount = 10;

  explicit MouthIndexSet(const std::vector<std::size_t>& indices);
  static MouthIndexSet default_set();  // {0, 1, ..., 9}

  const std::array<std::size_t, kCount>& indices() const { return indices_; }

 private:
  std::array<std::size_t, kCount> indices_;
};

// Packing: deterministic block order pose|alpha|beta|delta|gamma|eye_l|eye_r,
// length exactly kPackedDim. Throws std::invalid_argument naming the first
// field whose dimension is wrong.
std::vector<double> pack_parameters(const ParameterVector& v);
ParameterVector unpack_parameters(const std::vector<double>& flat);

// Per-coefficient (x - mean) / max(std, kStdEps) with population std.
// Requires at least 2 frames. The returned sequence carries the stats.
std::pair<ExpressionSequence, NormStats> normalize_sequence(
    const ExpressionSequence& seq);
ExpressionSequence denormalize_sequence(const ExpressionSequence& seq,
                                        const NormStats& stats);

// All length-n windows: exactly max(0, frames - n + 1) of them, window i
// covering frames [i, i+n). n must be >= 1.
std::vector<Window> sliding_windows(const ExpressionSequence& seq, std::size_t n);

// Gathers the mouth coefficients in the order the set lists them.
std::array<double, MouthIndexSet::kCount> select_mouth(const double* delta,
                                                       const MouthIndexSet& m);
std::array<double, MouthIndexSet::kCount> select_mouth(
    const std::vector<double>& delta, const MouthIndexSet& m);

// ---- Sequence file formats -------------------------------------------------
// CSV: one frame per row, 64 columns (expression only) or 261 columns (full
// parameter vector; the expression block is extracted). An optional header
// row is ignored when its first cell is non-numeric.
// DSEQ: magic "DSEQ", u32 version=1, u32 frame_count, u32 dim, then
// little-endian 64-bit floats row-major. dim 64 or 261 accepted on read.
// read_sequence() sniffs the DSEQ magic and falls back to CSV.

ExpressionSequence read_sequence_csv(const std::string& path);
ExpressionSequence read_sequence_dseq(const std::string& path);
ExpressionSequence read_sequence(const std::string& path);
void write_sequence_csv(const std::string& path, const ExpressionSequence& seq);
void write_sequence_dseq(const std::string& path, const ExpressionSequence& seq);

}  // namespace dubstyle::params
