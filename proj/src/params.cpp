#include "dubstyle/params.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace dubstyle::params {

namespace {

void require_dim(const char* field, const std::vector<double>& v, std::size_t n) {
  if (v.size() != n)
    throw std::invalid_argument(std::string("pack_parameters: field '") + field +
                                "' has dimension " + std::to_string(v.size()) +
                                ", expected " + std::to_string(n));
}

}  // namespace

MouthIndexSet::MouthIndexSet(const std::vector<std::size_t>& indices) {
  if (indices.size() != kCount)
    throw std::invalid_argument("MouthIndexSet: expected " +
                                std::to_string(kCount) + " indices, got " +
                                std::to_string(indices.size()));
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < kCount; ++i) {
    if (indices[i] >= kExpressionDim)
      throw std::invalid_argument("MouthIndexSet: index " +
                                  std::to_string(indices[i]) +
                                  " out of range [0, " +
                                  std::to_string(kExpressionDim) + ")");
    if (!seen.insert(indices[i]).second)
      throw std::invalid_argument("MouthIndexSet: duplicate index " +
                                  std::to_string(indices[i]));
    indices_[i] = indices[i];
  }
}

MouthIndexSet MouthIndexSet::default_set() {
  std::vector<std::size_t> idx(kCount);
  for (std::size_t i = 0; i < kCount; ++i) idx[i] = i;
  return MouthIndexSet(idx);
}

std::vector<double> pack_parameters(const ParameterVector& v) {
  require_dim("pose", v.pose, kPoseDim);
  require_dim("identity_alpha", v.identity_alpha, kAlphaDim);
  require_dim("reflectance_beta", v.reflectance_beta, kBetaDim);
  require_dim("expression_delta", v.expression_delta, kExpressionDim);
  require_dim("illumination_gamma", v.illumination_gamma, kGammaDim);
  require_dim("eye_left", v.eye_left, kEyeDim);
  require_dim("eye_right", v.eye_right, kEyeDim);

  std::vector<double> flat;
  flat.reserve(kPackedDim);
  for (const std::vector<double>* block :
       {&v.pose, &v.identity_alpha, &v.reflectance_beta, &v.expression_delta,
        &v.illumination_gamma, &v.eye_left, &v.eye_right})
    flat.insert(flat.end(), block->begin(), block->end());
  return flat;
}

ParameterVector unpack_parameters(const std::vector<double>& flat) {
  if (flat.size() != kPackedDim)
    throw std::invalid_argument("unpack_parameters: expected length " +
                                std::to_string(kPackedDim) + ", got " +
                                std::to_string(flat.size()));
  ParameterVector v;
  const double* p = flat.data();
  for (std::vector<double>* block :
       {&v.pose, &v.identity_alpha, &v.reflectance_beta, &v.expression_delta,
        &v.illumination_gamma, &v.eye_left, &v.eye_right}) {
    std::copy(p, p + block->size(), block->begin());
    p += block->size();
  }
  return v;
}

std::pair<ExpressionSequence, NormStats> normalize_sequence(
    const ExpressionSequence& seq) {
  const std::size_t f = seq.frames();
  if (f < 2)
    throw std::invalid_argument("normalize_sequence: need at least 2 frames, got " +
                                std::to_string(f));

  NormStats st;
  st.mean.assign(kExpressionDim, 0.0);
  st.stddev.assign(kExpressionDim, 0.0);
  for (std::size_t i = 0; i < f; ++i) {
    const double* row = seq.frame(i);
    for (std::size_t j = 0; j < kExpressionDim; ++j) st.mean[j] += row[j];
  }
  for (std::size_t j = 0; j < kExpressionDim; ++j)
    st.mean[j] /= static_cast<double>(f);
  for (std::size_t i = 0; i < f; ++i) {
    const double* row = seq.frame(i);
    for (std::size_t j = 0; j < kExpressionDim; ++j) {
      const double d = row[j] - st.mean[j];
      st.stddev[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < kExpressionDim; ++j)
    st.stddev[j] = std::max(std::sqrt(st.stddev[j] / static_cast<double>(f)),
                            kStdEps);

  ExpressionSequence out;
  out.frame_rate = seq.frame_rate;
  out.data.resize(seq.data.size());
  for (std::size_t i = 0; i < f; ++i) {
    const double* src = seq.frame(i);
    double* dst = out.frame(i);
    for (std::size_t j = 0; j < kExpressionDim; ++j)
      dst[j] = (src[j] - st.mean[j]) / st.stddev[j];
  }
  out.stats = st;
  return {std::move(out), std::move(st)};
}

ExpressionSequence denormalize_sequence(const ExpressionSequence& seq,
                                        const NormStats& stats) {
  if (stats.mean.size() != kExpressionDim || stats.stddev.size() != kExpressionDim)
    throw std::invalid_argument(
        "denormalize_sequence: stats dimension " +
        std::to_string(stats.mean.size()) + "/" +
        std::to_string(stats.stddev.size()) + ", expected " +
        std::to_string(kExpressionDim));

  ExpressionSequence out;
  out.frame_rate = seq.frame_rate;
  out.data.resize(seq.data.size());
  for (std::size_t i = 0; i < seq.frames(); ++i) {
    const double* src = seq.frame(i);
    double* dst = out.frame(i);
    for (std::size_t j = 0; j < kExpressionDim; ++j)
      dst[j] = src[j] * stats.stddev[j] + stats.mean[j];
  }
  return out;
}

std::vector<Window> sliding_windows(const ExpressionSequence& seq, std::size_t n) {
  if (n < 1) throw std::invalid_argument("sliding_windows: window size must be >= 1");
  std::vector<Window> windows;
  const std::size_t f = seq.frames();
  if (f < n) return windows;
  windows.reserve(f - n + 1);
  for (std::size_t i = 0; i + n <= f; ++i) {
    Window w;
    w.steps.assign(seq.frame(i), seq.frame(i) + n * kExpressionDim);
    windows.push_back(std::move(w));
  }
  return windows;
}

std::array<double, MouthIndexSet::kCount> select_mouth(const double* delta,
                                                       const MouthIndexSet& m) {
  std::array<double, MouthIndexSet::kCount> out;
  for (std::size_t i = 0; i < MouthIndexSet::kCount; ++i)
    out[i] = delta[m.indices()[i]];
  return out;
}

std::array<double, MouthIndexSet::kCount> select_mouth(
    const std::vector<double>& delta, const MouthIndexSet& m) {
  if (delta.size() != kExpressionDim)
    throw std::invalid_argument("select_mouth: expression dimension " +
                                std::to_string(delta.size()) + ", expected " +
                                std::to_string(kExpressionDim));
  return select_mouth(delta.data(), m);
}

// ---- File formats -----------------------------------------------------------

namespace {

constexpr char kDseqMagic[4] = {'D', 'S', 'E', 'Q'};
constexpr std::uint32_t kDseqVersion = 1;

[[noreturn]] void io_error(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Extracts the 64-dim expression block from a parsed row of width 64 or 261.
void append_frame(ExpressionSequence& seq, const std::vector<double>& row,
                  const std::string& path, std::size_t line_no) {
  if (row.size() == kExpressionDim) {
    seq.data.insert(seq.data.end(), row.begin(), row.end());
  } else if (row.size() == kPackedDim) {
    seq.data.insert(seq.data.end(), row.begin() + kExpressionOffset,
                    row.begin() + kExpressionOffset + kExpressionDim);
  } else {
    io_error(path, "row " + std::to_string(line_no) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(kExpressionDim) + " or " +
                       std::to_string(kPackedDim));
  }
}

bool parse_double(std::string_view cell, double& out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

ExpressionSequence read_sequence_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open for reading");

  ExpressionSequence seq;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<double> row;
    std::size_t pos = 0, col = 0;
    bool header = false;
    while (pos <= line.size()) {
      ++col;
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      std::string_view cell(line.data() + pos, comma - pos);
      // strip surrounding spaces
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t'))
        cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t'))
        cell.remove_suffix(1);
      double x;
      if (!parse_double(cell, x)) {
        if (line_no == 1 && col == 1) {
          header = true;  // optional header row
          break;
        }
        io_error(path, "row " + std::to_string(line_no) + ", column " +
                           std::to_string(col) + ": cannot parse '" +
                           std::string(cell) + "' as a number");
      }
      row.push_back(x);
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (header) continue;
    if (width == 0)
      width = row.size();
    else if (row.size() != width)
      io_error(path, "row " + std::to_string(line_no) + " has " +
                         std::to_string(row.size()) + " columns, previous rows had " +
                         std::to_string(width));
    append_frame(seq, row, path, line_no);
  }
  return seq;
}

void write_sequence_csv(const std::string& path, const ExpressionSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error(path, "cannot open for writing");
  char buf[40];
  std::string line;
  for (std::size_t i = 0; i < seq.frames(); ++i) {
    const double* row = seq.frame(i);
    line.clear();
    for (std::size_t j = 0; j < kExpressionDim; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      if (j) line += ',';
      line += buf;
    }
    line += '\n';
    out << line;
  }
  if (!out) io_error(path, "write failed");
}

ExpressionSequence read_sequence_dseq(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open for reading");

  char magic[4];
  std::uint32_t version = 0, frame_count = 0, dim = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&frame_count), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  if (!in) io_error(path, "truncated DSEQ header");
  if (std::memcmp(magic, kDseqMagic, 4) != 0)
    io_error(path, "bad magic, not a DSEQ file");
  if (version != kDseqVersion)
    io_error(path, "DSEQ version " + std::to_string(version) +
                       " unsupported, expected " + std::to_string(kDseqVersion));
  if (dim != kExpressionDim && dim != kPackedDim)
    io_error(path, "DSEQ dim " + std::to_string(dim) + " unsupported, expected " +
                       std::to_string(kExpressionDim) + " or " +
                       std::to_string(kPackedDim));

  std::vector<double> row(dim);
  ExpressionSequence seq;
  seq.data.reserve(static_cast<std::size_t>(frame_count) * kExpressionDim);
  for (std::uint32_t i = 0; i < frame_count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(dim * sizeof(double)));
    if (!in)
      io_error(path, "truncated DSEQ payload at frame " + std::to_string(i) +
                         " of " + std::to_string(frame_count));
    append_frame(seq, row, path, i);
  }
  return seq;
}

void write_sequence_dseq(const std::string& path, const ExpressionSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error(path, "cannot open for writing");
  const std::uint32_t version = kDseqVersion;
  const std::uint32_t frame_count = static_cast<std::uint32_t>(seq.frames());
  const std::uint32_t dim = static_cast<std::uint32_t>(kExpressionDim);
  out.write(kDseqMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&frame_count), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(seq.data.data()),
            static_cast<std::streamsize>(seq.data.size() * sizeof(double)));
  if (!out) io_error(path, "write failed");
}

ExpressionSequence read_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open for reading");
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  if (in.gcount() == 4 && std::memcmp(magic, kDseqMagic, 4) == 0)
    return read_sequence_dseq(path);
  return read_sequence_csv(path);
}

}  // namespace dubstyle::params
