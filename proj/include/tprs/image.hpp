#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tprs {

// Owned pixel buffer, values in [0,1], row-major, interleaved channels
// (1 = grayscale, 3 = RGB).
struct FundusImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> pixels;

  static FundusImage create(int width, int height, int channels,
                            double fill = 0.0);
  double at(int y, int x, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double& at(int y, int x, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return pixels.size(); }
  void clamp01();
  bool valid() const;
};

// Rec.601 luma of an RGB image (identity for grayscale).
FundusImage luminance(const FundusImage& img);

// ---- PNG / PNM I/O ----------------------------------------------------------
// 8-bit PNG, color type 0 (gray) or 2 (RGB), non-interlaced. The reader also
// accepts RGBA (alpha dropped). Writes are atomic (temp file + rename).
void write_png(const std::string& path, const FundusImage& img);
FundusImage read_png(const std::string& path);

// Binary PGM (P5) / PPM (P6).
void write_pnm(const std::string& path, const FundusImage& img);
FundusImage read_pnm(const std::string& path);

// Dispatch on extension (.png/.ppm/.pgm).
void write_image(const std::string& path, const FundusImage& img);
FundusImage read_image(const std::string& path);

// Quantize to 8 bits the same way the writers do.
std::vector<uint8_t> quantize8(const FundusImage& img);

}  // namespace tprs
