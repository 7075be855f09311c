#include "tprs/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tprs {

namespace {

constexpr int kBins = 256;

int bin_of(double v) {
  const int b = static_cast<int>(v * kBins);
  return std::clamp(b, 0, kBins - 1);
}

// reflect-with-edge index (…2,1,0 | 0,1,2… | n-1,n-2…)
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<size_t>(i + r)];
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (clahe_clip <= 0 || clahe_grid <= 0 || denoise_sigma <= 0 ||
      target_size <= 0 || blur_threshold <= 0 || rot_limit_deg < 0 ||
      brightness_limit < 0) {
    throw std::invalid_argument("preprocess config values must be positive");
  }
}

FundusImage clahe(const FundusImage& img, const PreprocessConfig& cfg) {
  cfg.validate();
  const FundusImage luma = luminance(img);
  const int w = img.width, h = img.height;

  // degenerate images get a single global tile
  int grid = cfg.clahe_grid;
  if (w < grid || h < grid) grid = 1;
  const int tw = (w + grid - 1) / grid;
  const int th = (h + grid - 1) / grid;

  // per-tile clipped histograms -> cdf lookup tables
  std::vector<std::vector<double>> maps(static_cast<size_t>(grid) * grid,
                                        std::vector<double>(kBins, 0.0));
  for (int ty = 0; ty < grid; ++ty) {
    for (int tx = 0; tx < grid; ++tx) {
      const int x0 = tx * tw, y0 = ty * th;
      const int x1 = std::min(w, x0 + tw), y1 = std::min(h, y0 + th);
      std::vector<double> hist(kBins, 0.0);
      const double count = static_cast<double>((x1 - x0) * (y1 - y0));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[bin_of(luma.at(y, x))] += 1.0;

      const double limit = std::max(1.0, cfg.clahe_clip * count / kBins);
      double excess = 0.0;
      for (double& b : hist) {
        if (b > limit) {
          excess += b - limit;
          b = limit;
        }
      }
      const double bonus = excess / kBins;
      for (double& b : hist) b += bonus;

      auto& map = maps[static_cast<size_t>(ty) * grid + tx];
      double cdf = 0.0;
      for (int b = 0; b < kBins; ++b) {
        cdf += hist[b];
        map[b] = cdf / count;
      }
    }
  }

  // bilinear interpolation between the four surrounding tile mappings
  FundusImage out = img;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) / th - 0.5;
    int ty0 = static_cast<int>(std::floor(fy));
    const double wy = fy - ty0;
    const int ty1 = std::clamp(ty0 + 1, 0, grid - 1);
    ty0 = std::clamp(ty0, 0, grid - 1);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / tw - 0.5;
      int tx0 = static_cast<int>(std::floor(fx));
      const double wx = fx - tx0;
      const int tx1 = std::clamp(tx0 + 1, 0, grid - 1);
      tx0 = std::clamp(tx0, 0, grid - 1);

      const int b = bin_of(luma.at(y, x));
      const double m00 = maps[static_cast<size_t>(ty0) * grid + tx0][b];
      const double m01 = maps[static_cast<size_t>(ty0) * grid + tx1][b];
      const double m10 = maps[static_cast<size_t>(ty1) * grid + tx0][b];
      const double m11 = maps[static_cast<size_t>(ty1) * grid + tx1][b];
      const double mapped = (1 - wy) * ((1 - wx) * m00 + wx * m01) +
                            wy * ((1 - wx) * m10 + wx * m11);

      if (img.channels == 1) {
        out.at(y, x) = std::clamp(mapped, 0.0, 1.0);
      } else {
        const double l = luma.at(y, x);
        const double gain = mapped / std::max(l, 1e-12);
        for (int c = 0; c < 3; ++c)
          out.at(y, x, c) = std::clamp(img.at(y, x, c) * gain, 0.0, 1.0);
      }
    }
  }
  return out;
}

FundusImage gaussian_denoise(const FundusImage& img, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("denoise sigma must be > 0");
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = img.width, h = img.height, ch = img.channels;

  FundusImage tmp = img, out = img;
  // horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[static_cast<size_t>(i + r)] * img.at(y, reflect(x + i, w), c);
        tmp.at(y, x, c) = acc;
      }
  // vertical pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[static_cast<size_t>(i + r)] * tmp.at(reflect(y + i, h), x, c);
        out.at(y, x, c) = std::clamp(acc, 0.0, 1.0);
      }
  return out;
}

FundusImage resize(const FundusImage& img, int target) {
  if (target <= 0) throw std::invalid_argument("resize target must be > 0");
  if (img.width < 2 || img.height < 2) {
    throw std::invalid_argument("resize source must be at least 2x2");
  }
  if (img.width == target && img.height == target) return img;

  FundusImage out = FundusImage::create(target, target, img.channels);
  const double sx_scale = static_cast<double>(img.width) / target;
  const double sy_scale = static_cast<double>(img.height) / target;
  for (int y = 0; y < target; ++y) {
    const double sy = (y + 0.5) * sy_scale - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < target; ++x) {
      const double sx = (x + 0.5) * sx_scale - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = std::clamp(sx - x0, 0.0, 1.0);
      for (int c = 0; c < img.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                         wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

double laplacian_variance(const FundusImage& img) {
  const FundusImage luma = luminance(img);
  const int w = img.width, h = img.height;
  std::vector<double> resp(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double c = luma.at(y, x) * 255.0;
      const double up = luma.at(reflect(y - 1, h), x) * 255.0;
      const double dn = luma.at(reflect(y + 1, h), x) * 255.0;
      const double lf = luma.at(y, reflect(x - 1, w)) * 255.0;
      const double rt = luma.at(y, reflect(x + 1, w)) * 255.0;
      resp[static_cast<size_t>(y) * w + x] = up + dn + lf + rt - 4.0 * c;
    }
  double mean = 0.0;
  for (double v : resp) mean += v;
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double v : resp) var += (v - mean) * (v - mean);
  return var / static_cast<double>(resp.size());
}

FundusImage rotate_bilinear(const FundusImage& img, double degrees) {
  const double th = degrees * M_PI / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  FundusImage out = FundusImage::create(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // inverse mapping into the source image
      const double dx = x - cx, dy = y - cy;
      const double sx = ct * dx + st * dy + cx;
      const double sy = -st * dx + ct * dy + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double wx = sx - x0, wy = sy - y0;
      for (int c = 0; c < img.channels; ++c) {
        auto sample = [&](int yy, int xx) -> double {
          if (xx < 0 || xx >= img.width || yy < 0 || yy >= img.height) return 0.0;
          return img.at(yy, xx, c);
        };
        const double v =
            (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
            wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

FundusImage hflip(const FundusImage& img) {
  FundusImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

FundusImage adjust_brightness(const FundusImage& img, double factor) {
  FundusImage out = img;
  for (double& v : out.pixels) v = std::clamp(v * factor, 0.0, 1.0);
  return out;
}

FundusImage augment(const FundusImage& img, Rng& rng,
                    const PreprocessConfig& cfg) {
  // fixed draw order keeps augmented streams reproducible
  const double angle = rng.uniform(-cfg.rot_limit_deg, cfg.rot_limit_deg);
  const bool flip = rng.bernoulli(0.5);
  const double brightness =
      rng.uniform(1.0 - cfg.brightness_limit, 1.0 + cfg.brightness_limit);

  FundusImage out = rotate_bilinear(img, angle);
  if (flip) out = hflip(out);
  return adjust_brightness(out, brightness);
}

std::vector<double> minmax_normalize(const std::vector<double>& series) {
  if (series.empty()) {
    throw std::invalid_argument("minmax_normalize: empty series");
  }
  const auto [mn_it, mx_it] = std::minmax_element(series.begin(), series.end());
  const double mn = *mn_it, mx = *mx_it;
  std::vector<double> out(series.size(), 0.0);
  if (mx > mn) {
    for (size_t i = 0; i < series.size(); ++i)
      out[i] = (series[i] - mn) / (mx - mn);
  }
  // constant series stays all zeros; degenerate windows must not abort batches
  return out;
}

FundusImage preprocess_image(const FundusImage& img, const PreprocessConfig& cfg) {
  return resize(gaussian_denoise(clahe(img, cfg), cfg.denoise_sigma),
                cfg.target_size);
}

}  // namespace tprs
