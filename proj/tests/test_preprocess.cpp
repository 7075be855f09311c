#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tprs/image.hpp"
#include "tprs/preprocess.hpp"
#include "tprs/rng.hpp"

using namespace tprs;

namespace {

// 256-bin Shannon entropy of the luma channel, in bits
double entropy_bits(const FundusImage& img) {
  FundusImage luma = luminance(img);
  std::vector<double> hist(256, 0.0);
  for (double v : luma.pixels) {
    int b = std::clamp(static_cast<int>(v * 256.0), 0, 255);
    hist[b] += 1.0;
  }
  const double n = static_cast<double>(luma.pixels.size());
  double h = 0.0;
  for (double c : hist) {
    if (c > 0) h -= (c / n) * std::log2(c / n);
  }
  return h;
}

// plain global histogram equalization, the reference for 1x1-grid CLAHE
FundusImage global_he_oracle(const FundusImage& img) {
  std::vector<double> hist(256, 0.0);
  for (double v : img.pixels) {
    hist[std::clamp(static_cast<int>(v * 256.0), 0, 255)] += 1.0;
  }
  std::vector<double> cdf(256, 0.0);
  double acc = 0.0;
  const double n = static_cast<double>(img.pixels.size());
  for (int b = 0; b < 256; ++b) {
    acc += hist[b];
    cdf[b] = acc / n;
  }
  FundusImage out = img;
  for (double& v : out.pixels) {
    v = cdf[std::clamp(static_cast<int>(v * 256.0), 0, 255)];
  }
  return out;
}

FundusImage checkerboard(int n, double lo = 0.0, double hi = 1.0) {
  FundusImage img = FundusImage::create(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) img.at(y, x) = ((x + y) % 2) ? hi : lo;
  return img;
}

}  // namespace

TEST_CASE("clahe constant image stays constant") {
  PreprocessConfig cfg;
  FundusImage img = FundusImage::create(64, 64, 1, 0.5);
  FundusImage out = clahe(img, cfg);
  for (double v : out.pixels) CHECK(v == doctest::Approx(out.pixels[0]).epsilon(1e-12));
}

TEST_CASE("clahe raises entropy on a low-contrast ramp") {
  PreprocessConfig cfg;
  FundusImage img = FundusImage::create(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      img.at(y, x) = 0.45 + 0.10 * ((x + y) / 126.0);
  FundusImage out = clahe(img, cfg);
  CHECK(entropy_bits(out) >= entropy_bits(img));
}

TEST_CASE("clahe with one tile and huge clip matches global equalization") {
  PreprocessConfig cfg;
  cfg.clahe_grid = 1;
  cfg.clahe_clip = 1e9;
  FundusImage img = FundusImage::create(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x) = (x < 8) ? 0.3 : 0.7;
  FundusImage ours = clahe(img, cfg);
  FundusImage ref = global_he_oracle(img);
  for (size_t i = 0; i < ours.pixels.size(); ++i)
    CHECK(ours.pixels[i] == doctest::Approx(ref.pixels[i]).epsilon(1e-12));
}

TEST_CASE("clahe falls back to a single tile on tiny images") {
  PreprocessConfig cfg;  // 8x8 grid vs 4x4 image
  FundusImage img = FundusImage::create(4, 4, 1);
  for (int i = 0; i < 16; ++i) img.pixels[i] = i / 16.0;
  FundusImage out = clahe(img, cfg);
  CHECK(out.valid());
}

TEST_CASE("clahe determinism and range") {
  PreprocessConfig cfg;
  Rng rng(5);
  FundusImage img = FundusImage::create(37, 41, 3);
  for (double& v : img.pixels) v = rng.uniform();
  FundusImage a = clahe(img, cfg);
  FundusImage b = clahe(img, cfg);
  CHECK(a.pixels == b.pixels);
  CHECK(a.valid());
}

TEST_CASE("gaussian denoise: constants, impulse kernel, variance reduction") {
  SUBCASE("constant image unchanged") {
    FundusImage img = FundusImage::create(20, 20, 1, 0.42);
    FundusImage out = gaussian_denoise(img, 1.5);
    for (double v : out.pixels) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
  }

  SUBCASE("impulse response equals the sampled normalized 2-d gaussian") {
    const double sigma = 1.5;
    const int r = static_cast<int>(std::ceil(3 * sigma));
    const int n = 4 * r + 1;
    FundusImage img = FundusImage::create(n, n, 1, 0.0);
    img.at(n / 2, n / 2) = 1.0;
    FundusImage out = gaussian_denoise(img, sigma);

    double total = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        total += std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double expect =
            std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma)) / total;
        CHECK(out.at(n / 2 + dy, n / 2 + dx) == doctest::Approx(expect).epsilon(1e-6));
      }
  }

  SUBCASE("white noise variance shrinks") {
    Rng rng(9);
    FundusImage img = FundusImage::create(48, 48, 1);
    for (double& v : img.pixels) v = rng.uniform();
    FundusImage out = gaussian_denoise(img, 1.5);
    auto var = [](const FundusImage& im) {
      double mu = 0;
      for (double v : im.pixels) mu += v;
      mu /= im.pixels.size();
      double s = 0;
      for (double v : im.pixels) s += (v - mu) * (v - mu);
      return s / im.pixels.size();
    };
    CHECK(var(out) < var(img));
  }
}

TEST_CASE("resize: identity, constants, hand-computed checkerboard") {
  SUBCASE("same-size resize is bit identical") {
    Rng rng(3);
    FundusImage img = FundusImage::create(224, 224, 3);
    for (double& v : img.pixels) v = rng.uniform();
    FundusImage out = resize(img, 224);
    CHECK(out.pixels == img.pixels);
  }

  SUBCASE("constant stays constant") {
    FundusImage img = FundusImage::create(10, 10, 1, 0.7);
    FundusImage out = resize(img, 23);
    for (double v : out.pixels) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("2x2 checkerboard to 4x4 matches manual bilinear weights") {
    FundusImage img = FundusImage::create(2, 2, 1);
    img.at(0, 0) = 1.0;
    img.at(1, 1) = 1.0;
    FundusImage out = resize(img, 4);
    const double expect[4][4] = {
        {1.0, 0.75, 0.25, 0.0},
        {0.75, 0.625, 0.375, 0.25},
        {0.25, 0.375, 0.625, 0.75},
        {0.0, 0.25, 0.75, 1.0},
    };
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(out.at(y, x) == doctest::Approx(expect[y][x]).epsilon(1e-12));
  }

  SUBCASE("zero target rejected") {
    FundusImage img = FundusImage::create(4, 4, 1);
    CHECK_THROWS_AS(resize(img, 0), std::invalid_argument);
  }
}

TEST_CASE("laplacian variance blur scoring") {
  SUBCASE("constant image scores zero and is rejected") {
    PreprocessConfig cfg;
    FundusImage img = FundusImage::create(32, 32, 1, 0.5);
    const double v = laplacian_variance(img);
    CHECK(v == doctest::Approx(0.0));
    CHECK(v < cfg.blur_threshold);
  }

  SUBCASE("sharp checkerboard matches the direct convolution oracle and passes") {
    FundusImage img = checkerboard(32);
    // independent oracle: same stencil evaluated with plain loops
    const int w = img.width, h = img.height;
    std::vector<double> resp;
    auto ref = [&](int y, int x) {
      y = std::clamp(y < 0 ? -y - 1 : y, 0, h - 1);
      x = std::clamp(x < 0 ? -x - 1 : x, 0, w - 1);
      if (y >= h) y = 2 * h - 1 - y;
      if (x >= w) x = 2 * w - 1 - x;
      return img.at(y, x) * 255.0;
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        resp.push_back(ref(y - 1, x) + ref(y + 1, x) + ref(y, x - 1) +
                       ref(y, x + 1) - 4 * ref(y, x));
    double mu = 0;
    for (double r : resp) mu += r;
    mu /= resp.size();
    double var = 0;
    for (double r : resp) var += (r - mu) * (r - mu);
    var /= resp.size();

    const double got = laplacian_variance(img);
    CHECK(got == doctest::Approx(var).epsilon(1e-9));
    CHECK(got > 100.0);
  }

  SUBCASE("heavy blur lowers the score") {
    FundusImage sharp = checkerboard(32);
    FundusImage soft = gaussian_denoise(sharp, 8.0);
    CHECK(laplacian_variance(soft) < laplacian_variance(sharp));
  }
}

TEST_CASE("augment pieces") {
  Rng rng(11);
  FundusImage img = FundusImage::create(16, 16, 3);
  for (double& v : img.pixels) v = rng.uniform();

  SUBCASE("identity draws leave the image unchanged") {
    FundusImage r = rotate_bilinear(img, 0.0);
    CHECK(r.pixels == img.pixels);
    FundusImage b = adjust_brightness(img, 1.0);
    CHECK(b.pixels == img.pixels);
  }

  SUBCASE("double horizontal flip is the identity") {
    CHECK(hflip(hflip(img)).pixels == img.pixels);
  }

  SUBCASE("brightness clamps at 1") {
    FundusImage one = FundusImage::create(2, 2, 1, 0.9);
    FundusImage out = adjust_brightness(one, 1.2);
    for (double v : out.pixels) CHECK(v == doctest::Approx(1.0));
  }

  SUBCASE("augment output is a valid image and deterministic per seed") {
    PreprocessConfig cfg;
    Rng r1(77), r2(77);
    FundusImage a = augment(img, r1, cfg);
    FundusImage b = augment(img, r2, cfg);
    CHECK(a.valid());
    CHECK(a.pixels == b.pixels);
  }
}

TEST_CASE("minmax_normalize") {
  CHECK(minmax_normalize({2, 4, 6}) == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(minmax_normalize({5, 5, 5}) == std::vector<double>{0.0, 0.0, 0.0});
  auto v = minmax_normalize({7.0, 8.5, 6.1});
  CHECK(v[0] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[2] == doctest::Approx(0.0));
  CHECK_THROWS_AS(minmax_normalize({}), std::invalid_argument);

  // non-constant series always spans [0,1]
  Rng rng(17);
  for (int it = 0; it < 40; ++it) {
    std::vector<double> s(1 + it % 7);
    for (auto& x : s) x = rng.uniform(-50, 50);
    auto n = minmax_normalize(s);
    const auto [mn, mx] = std::minmax_element(n.begin(), n.end());
    if (s.size() > 1 && *std::minmax_element(s.begin(), s.end()).first !=
                            *std::minmax_element(s.begin(), s.end()).second) {
      CHECK(*mn == doctest::Approx(0.0));
      CHECK(*mx == doctest::Approx(1.0));
    }
    for (double x : n) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("pipeline keeps images in range and is deterministic") {
  PreprocessConfig cfg;
  cfg.target_size = 24;
  Rng rng(23);
  FundusImage img = FundusImage::create(50, 40, 3);
  for (double& v : img.pixels) v = rng.uniform();
  FundusImage a = preprocess_image(img, cfg);
  FundusImage b = preprocess_image(img, cfg);
  CHECK(a.valid());
  CHECK(a.width == 24);
  CHECK(a.height == 24);
  CHECK(a.pixels == b.pixels);
}

TEST_CASE("png round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "tprs_png_test";
  fs::create_directories(dir);

  SUBCASE("rgb and gray round trips preserve quantized pixels") {
    Rng rng(31);
    for (int ch : {1, 3}) {
      FundusImage img = FundusImage::create(21, 13, ch);
      for (double& v : img.pixels) v = rng.uniform();
      const auto path = (dir / ("t" + std::to_string(ch) + ".png")).string();
      write_png(path, img);
      FundusImage back = read_png(path);
      REQUIRE(back.width == img.width);
      REQUIRE(back.height == img.height);
      REQUIRE(back.channels == ch);
      for (size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
      // writing the decoded image again is byte-stable
      const auto path2 = (dir / "t2.png").string();
      write_png(path2, back);
      FundusImage again = read_png(path2);
      CHECK(again.pixels == back.pixels);
    }
  }

  SUBCASE("pnm round trip") {
    Rng rng(37);
    FundusImage img = FundusImage::create(9, 7, 3);
    for (double& v : img.pixels) v = rng.uniform();
    const auto path = (dir / "t.ppm").string();
    write_pnm(path, img);
    FundusImage back = read_pnm(path);
    for (size_t i = 0; i < img.pixels.size(); ++i)
      CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
  }

  SUBCASE("truncated png rejected") {
    Rng rng(41);
    FundusImage img = FundusImage::create(16, 16, 3);
    for (double& v : img.pixels) v = rng.uniform();
    const auto path = (dir / "full.png").string();
    write_png(path, img);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    const auto cut = (dir / "cut.png").string();
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS(read_png(cut));
  }

  SUBCASE("non-image bytes rejected") {
    const auto path = (dir / "junk.png").string();
    std::ofstream out(path, std::ios::binary);
    out << "definitely not a png";
    out.close();
    CHECK_THROWS(read_png(path));
  }
}
