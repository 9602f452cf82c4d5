#pragma once

// Layer-based output stage: erode a binary face mask, feather it with a
// Gaussian, and alpha-composite a foreground face render over the
// original background frame.
//
// Exactness conventions, fixed for reproducible golden tests:
//   - erosion uses a square structuring element of side 2*radius+1 with
//     out-of-bounds treated as 0 (the mask erodes inward at borders);
//   - feathering uses a separable Gaussian, kernel radius ceil(3*sigma),
//     normalized to sum 1, clamp-to-edge, output clamped to [0,1];
//   - compositing rounds half away from zero to 8 bits.

#include <cstdint>
#include <string>
#include <vector>

namespace dubstyle::compositor {

struct ImageBuffer {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> data;  // W*H*3, row-major RGB

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h)
      : width(w), height(h), data(w * h * 3, 0) {}
};

struct SoftMask {
  std::size_t width = 0, height = 0;
  std::vector<double> data;  // W*H, unit range

  SoftMask() = default;
  SoftMask(std::size_t w, std::size_t h)
      : width(w), height(h), data(w * h, 0.0) {}
};

// Morphological erosion (separable min filter). radius 0 is the identity.
SoftMask erode_mask(const SoftMask& mask, std::size_t radius);

// Separable Gaussian blur. sigma 0 is the identity.
SoftMask feather_mask(const SoftMask& mask, double sigma);

// Per pixel/channel round(m*fg + (1-m)*bg); throws std::invalid_argument
// on any dimension mismatch.
ImageBuffer composite(const ImageBuffer& fg, const ImageBuffer& bg,
                      const SoftMask& mask);

// Binary PPM (P6, maxval 255).
ImageBuffer read_ppm(const std::string& path);
void write_ppm(const ImageBuffer& img, const std::string& path);

// Binary PGM (P5); maxval 255 or 65535 (16-bit big-endian), mapped to
// [0,1] by dividing by maxval.
SoftMask read_pgm_mask(const std::string& path);
void write_pgm_mask(const SoftMask& mask, const std::string& path,
                    unsigned maxval = 255);

}  // namespace dubstyle::compositor
