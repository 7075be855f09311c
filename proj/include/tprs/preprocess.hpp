#pragma once

#include <vector>

#include "tprs/image.hpp"
#include "tprs/rng.hpp"

namespace tprs {

struct PreprocessConfig {
  double clahe_clip = 2.0;
  int clahe_grid = 8;          // tiles per side
  double denoise_sigma = 1.5;
  int target_size = 224;
  double blur_threshold = 100.0;  // Laplacian variance on the 0-255 scale
  double rot_limit_deg = 15.0;
  double brightness_limit = 0.20;
  void validate() const;
};

// Contrast-limited adaptive histogram equalization. RGB images are equalized
// on the luma channel and the per-pixel gain is applied to all channels, so
// chromaticity is preserved. Images smaller than one tile fall back to a
// single global equalization.
FundusImage clahe(const FundusImage& img, const PreprocessConfig& cfg);

// Separable Gaussian blur, kernel radius ceil(3*sigma), reflect padding.
FundusImage gaussian_denoise(const FundusImage& img, double sigma);

// Bilinear resize to target x target (pixel-center convention).
FundusImage resize(const FundusImage& img, int target);

// Variance of the 4-neighbor Laplacian response on luma scaled to [0,255].
double laplacian_variance(const FundusImage& img);

// Random rotation in [-rot_limit, rot_limit] (bilinear, black fill),
// horizontal flip with probability 0.5, multiplicative brightness in
// [1-limit, 1+limit] clamped to [0,1]. Train-split only.
FundusImage augment(const FundusImage& img, Rng& rng,
                    const PreprocessConfig& cfg);

// Deterministic variants used by augment and by tests.
FundusImage rotate_bilinear(const FundusImage& img, double degrees);
FundusImage hflip(const FundusImage& img);
FundusImage adjust_brightness(const FundusImage& img, double factor);

// (v - min) / (max - min); a constant series maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& series);

// CLAHE -> denoise -> resize, the fixed deterministic pipeline order.
FundusImage preprocess_image(const FundusImage& img, const PreprocessConfig& cfg);

}  // namespace tprs
