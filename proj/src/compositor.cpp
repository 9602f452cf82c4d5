#include "dubstyle/compositor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dubstyle::compositor {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

// Directional min filter with out-of-bounds treated as 0. Applied along
// rows then columns this is exactly the square-element erosion.
void min_pass(const std::vector<double>& in, std::vector<double>& out,
              std::size_t width, std::size_t height, std::size_t radius,
              bool horizontal) {
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::ptrdiff_t n =
          static_cast<std::ptrdiff_t>(horizontal ? width : height);
      const std::ptrdiff_t c =
          static_cast<std::ptrdiff_t>(horizontal ? x : y);
      double m = 1.0;
      if (c - r < 0 || c + r >= n) {
        m = 0.0;  // window reaches outside; out-of-bounds is 0
      } else {
        for (std::ptrdiff_t k = -r; k <= r; ++k) {
          const std::size_t xi = horizontal ? static_cast<std::size_t>(c + k) : x;
          const std::size_t yi = horizontal ? y : static_cast<std::size_t>(c + k);
          m = std::min(m, in[yi * width + xi]);
          if (m == 0.0) break;
        }
      }
      out[y * width + x] = m;
    }
  }
}

}  // namespace

SoftMask erode_mask(const SoftMask& mask, std::size_t radius) {
  if (radius == 0) return mask;
  SoftMask tmp(mask.width, mask.height);
  SoftMask out(mask.width, mask.height);
  min_pass(mask.data, tmp.data, mask.width, mask.height, radius, true);
  min_pass(tmp.data, out.data, mask.width, mask.height, radius, false);
  return out;
}

SoftMask feather_mask(const SoftMask& mask, double sigma) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("feather_mask: sigma must be >= 0");
  if (sigma == 0.0) return mask;

  const std::ptrdiff_t radius =
      static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    ksum += v;
  }
  for (double& v : kernel) v /= ksum;

  const std::size_t w = mask.width, h = mask.height;
  const auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, n - 1));
  };

  SoftMask tmp(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const std::size_t xi = clampi(static_cast<std::ptrdiff_t>(x) + k,
                                      static_cast<std::ptrdiff_t>(w));
        acc += kernel[static_cast<std::size_t>(k + radius)] * mask.data[y * w + xi];
      }
      tmp.data[y * w + x] = acc;
    }
  }
  SoftMask out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const std::size_t yi = clampi(static_cast<std::ptrdiff_t>(y) + k,
                                      static_cast<std::ptrdiff_t>(h));
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.data[yi * w + x];
      }
      out.data[y * w + x] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

ImageBuffer composite(const ImageBuffer& fg, const ImageBuffer& bg,
                      const SoftMask& mask) {
  if (fg.width != bg.width || fg.height != bg.height ||
      fg.width != mask.width || fg.height != mask.height) {
    throw std::invalid_argument(
        "composite: dimension mismatch (fg " + std::to_string(fg.width) + "x" +
        std::to_string(fg.height) + ", bg " + std::to_string(bg.width) + "x" +
        std::to_string(bg.height) + ", mask " + std::to_string(mask.width) +
        "x" + std::to_string(mask.height) + ")");
  }
  ImageBuffer out(fg.width, fg.height);
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    const double m = mask.data[p];
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = m * static_cast<double>(fg.data[p * 3 + c]) +
                       (1.0 - m) * static_cast<double>(bg.data[p * 3 + c]);
      const long r = std::lround(v);  // half away from zero
      out.data[p * 3 + c] =
          static_cast<std::uint8_t>(std::clamp<long>(r, 0, 255));
    }
  }
  return out;
}

// ---- Netpbm IO -------------------------------------------------------------

namespace {

// Reads the next decimal token, skipping whitespace and '#' comments.
unsigned long next_token(std::istream& in, const std::string& path,
                         const char* what) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c))
    fail(path + ": malformed header (expected " + std::string(what) + ")");
  unsigned long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<unsigned long>(c - '0');
    if (v > 1000000000UL) fail(path + ": absurd header value");
    c = in.get();
  }
  if (c == EOF) fail(path + ": truncated header after " + std::string(what));
  in.unget();
  return v;
}

void expect_magic(std::istream& in, const std::string& path, char digit) {
  char m[2];
  if (!in.read(m, 2) || m[0] != 'P' || m[1] != digit)
    fail(path + ": not a P" + std::string(1, digit) + " file");
}

void skip_single_whitespace(std::istream& in, const std::string& path) {
  const int c = in.get();
  if (c == EOF || !std::isspace(c))
    fail(path + ": missing whitespace before raster data");
}

}  // namespace

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path + ": cannot open");
  expect_magic(in, path, '6');
  const unsigned long w = next_token(in, path, "width");
  const unsigned long h = next_token(in, path, "height");
  const unsigned long maxval = next_token(in, path, "maxval");
  if (w == 0 || h == 0) fail(path + ": zero dimensions");
  if (maxval != 255)
    fail(path + ": unsupported maxval " + std::to_string(maxval) +
         " (only 255)");
  skip_single_whitespace(in, path);
  ImageBuffer img(w, h);
  if (!in.read(reinterpret_cast<char*>(img.data.data()),
               static_cast<std::streamsize>(img.data.size())))
    fail(path + ": truncated pixel data");
  return img;
}

void write_ppm(const ImageBuffer& img, const std::string& path) {
  if (img.data.size() != img.width * img.height * 3)
    throw std::invalid_argument("write_ppm: buffer size does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path + ": cannot open for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  out.flush();
  if (!out) fail(path + ": write failed");
}

SoftMask read_pgm_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path + ": cannot open");
  expect_magic(in, path, '5');
  const unsigned long w = next_token(in, path, "width");
  const unsigned long h = next_token(in, path, "height");
  const unsigned long maxval = next_token(in, path, "maxval");
  if (w == 0 || h == 0) fail(path + ": zero dimensions");
  if (maxval != 255 && maxval != 65535)
    fail(path + ": unsupported maxval " + std::to_string(maxval) +
         " (only 255 or 65535)");
  skip_single_whitespace(in, path);

  SoftMask mask(w, h);
  const std::size_t n = mask.data.size();
  if (maxval == 255) {
    std::vector<std::uint8_t> raw(n);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(n)))
      fail(path + ": truncated pixel data");
    for (std::size_t i = 0; i < n; ++i)
      mask.data[i] = static_cast<double>(raw[i]) / 255.0;
  } else {
    std::vector<std::uint8_t> raw(n * 2);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size())))
      fail(path + ": truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) |
                         static_cast<unsigned>(raw[2 * i + 1]);  // big-endian
      mask.data[i] = static_cast<double>(v) / 65535.0;
    }
  }
  return mask;
}

void write_pgm_mask(const SoftMask& mask, const std::string& path,
                    unsigned maxval) {
  if (maxval != 255 && maxval != 65535)
    throw std::invalid_argument("write_pgm_mask: maxval must be 255 or 65535");
  if (mask.data.size() != mask.width * mask.height)
    throw std::invalid_argument(
        "write_pgm_mask: buffer size does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path + ": cannot open for writing");
  out << "P5\n" << mask.width << " " << mask.height << "\n" << maxval << "\n";
  const double mv = static_cast<double>(maxval);
  for (double v : mask.data) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * mv);
    if (maxval == 255) {
      const std::uint8_t b = static_cast<std::uint8_t>(q);
      out.write(reinterpret_cast<const char*>(&b), 1);
    } else {
      const std::uint8_t b[2] = {static_cast<std::uint8_t>(q >> 8),
                                 static_cast<std::uint8_t>(q & 0xFF)};
      out.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  out.flush();
  if (!out) fail(path + ": write failed");
}

}  // namespace dubstyle::compositor
