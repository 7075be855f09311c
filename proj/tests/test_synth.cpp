#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tprs/data.hpp"
#include "tprs/fsio.hpp"
#include "tprs/synth.hpp"

using namespace tprs;

namespace {

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    for (size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= ra.size();
  mb /= rb.size();
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("gen_biomarkers baselines and determinism") {
  CohortConfig cfg;

  SUBCASE("zero sigma pins the baseline to the mean") {
    CohortConfig degen = cfg;
    degen.hba1c_sigma = 0;
    degen.thickness_sigma = 0;
    degen.vegf_sigma = 0;
    Rng rng(1);
    auto s = gen_biomarkers(0, degen, rng);
    CHECK(s[0].values[0] == doctest::Approx(7.0));
    CHECK(s[1].values[0] == doctest::Approx(250.0));
    CHECK(s[2].values[0] == doctest::Approx(100.0));
  }

  SUBCASE("same seed reproduces the series") {
    Rng r1(9), r2(9);
    auto a = gen_biomarkers(3, cfg, r1);
    auto b = gen_biomarkers(3, cfg, r2);
    for (int k = 0; k < 3; ++k) {
      CHECK(a[k].values == b[k].values);
      CHECK(a[k].timestamps == b[k].timestamps);
    }
  }

  SUBCASE("timestamps run 0,6,...,6(T-1) and drift follows the grade") {
    CohortConfig c = cfg;
    c.visits = 4;
    c.hba1c_sigma = 0;
    c.thickness_sigma = 0;
    Rng rng(3);
    auto s = gen_biomarkers(4, c, rng);
    CHECK(s[0].timestamps == std::vector<double>{0, 6, 12, 18});
    // grade-4 HbA1c drifts up, thickness down (noise is small vs drift)
    CHECK(s[0].values.back() > s[0].values.front());
    CHECK(s[1].values.back() < s[1].values.front());
  }

  SUBCASE("sample means approach the configured parameters") {
    Rng rng(20260809);
    double sum_h = 0, sum_t = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
      Rng r = rng.split(static_cast<uint64_t>(i));
      auto s = gen_biomarkers(0, cfg, r);
      sum_h += s[0].values[0];
      sum_t += s[1].values[0];
    }
    // 4 standard errors of slack at n = 4000
    CHECK(std::fabs(sum_h / n - 7.0) < 4 * 1.5 / std::sqrt(double(n)));
    CHECK(std::fabs(sum_t / n - 250.0) < 4 * 20.0 / std::sqrt(double(n)));
  }
}

TEST_CASE("gen_fundus lesion policy") {
  SUBCASE("grade 0 has an empty mask") {
    Rng rng(5);
    auto f = gen_fundus(0, 32, rng);
    for (double v : f.mask.pixels) CHECK(v == 0.0);
  }

  SUBCASE("higher grades add more lesion pixels under the same seed policy") {
    Rng r1(7), r4(7);
    auto g1 = gen_fundus(1, 32, r1);
    auto g4 = gen_fundus(4, 32, r4);
    auto count = [](const FundusImage& m) {
      int c = 0;
      for (double v : m.pixels) c += v > 0.5;
      return c;
    };
    CHECK(count(g1.mask) > 0);
    CHECK(count(g4.mask) > count(g1.mask));
    // confluent grade-4 lesions may merge into fewer components, but both
    // grades must produce localizable boxes
    CHECK(!lesion_boxes(g1.mask).empty());
    CHECK(!lesion_boxes(g4.mask).empty());
  }

  SUBCASE("mask pixels stay inside the retina disc") {
    Rng rng(11);
    auto f = gen_fundus(4, 48, rng);
    const double cy = 23.5, cx = 23.5, radius = 0.47 * 48;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        if (f.mask.at(y, x) > 0.5) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          CHECK(d2 <= radius * radius + 1e-9);
        }
      }
  }

  SUBCASE("images are valid and deterministic") {
    Rng r1(13), r2(13);
    auto a = gen_fundus(2, 32, r1);
    auto b = gen_fundus(2, 32, r2);
    CHECK(a.image.valid());
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.mask.pixels == b.mask.pixels);
  }
}

TEST_CASE("lesion_boxes connected components") {
  FundusImage mask = FundusImage::create(8, 8, 1, 0.0);
  mask.at(1, 1) = 1;
  mask.at(1, 2) = 1;
  mask.at(2, 1) = 1;
  mask.at(5, 6) = 1;
  auto boxes = lesion_boxes(mask);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0].x0 == 1);
  CHECK(boxes[0].y0 == 1);
  CHECK(boxes[0].x1 == 2);
  CHECK(boxes[0].y1 == 2);
  CHECK(boxes[1].x0 == 6);
  CHECK(boxes[1].y1 == 5);
}

TEST_CASE("gen_cohort structure and statistics") {
  SUBCASE("one-hot priors produce a single grade") {
    CohortConfig cfg;
    cfg.n = 20;
    cfg.class_priors = {0, 0, 1.0, 0, 0};
    cfg.seed = 4;
    auto cohort = gen_cohort(cfg);
    CHECK(cohort.size() == 20);
    for (const auto& r : cohort) CHECK(r.grade == 2);
  }

  SUBCASE("risk and progression are anti-correlated") {
    CohortConfig cfg;
    cfg.n = 1000;
    cfg.seed = 99;
    auto cohort = gen_cohort(cfg);
    std::vector<double> risk, months;
    for (const auto& r : cohort) {
      risk.push_back(r.risk);
      months.push_back(r.progression_months);
    }
    CHECK(spearman(risk, months) < -0.5);

    // censoring fraction lands near the configured 20%
    int censored = 0;
    for (const auto& r : cohort) censored += r.event == 0;
    CHECK(std::fabs(censored / 1000.0 - 0.2) < 0.05);
  }

  SUBCASE("byte-identical reruns") {
    namespace fs = std::filesystem;
    CohortConfig cfg;
    cfg.n = 8;
    cfg.seed = 7;
    const auto dir1 = fs::temp_directory_path() / "tprs_synth_a";
    const auto dir2 = fs::temp_directory_path() / "tprs_synth_b";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    write_cohort(gen_cohort(cfg), dir1.string());
    write_cohort(gen_cohort(cfg), dir2.string());
    CHECK(read_bytes((dir1 / "manifest.csv").string()) ==
          read_bytes((dir2 / "manifest.csv").string()));
    CHECK(read_bytes((dir1 / "biomarkers.csv").string()) ==
          read_bytes((dir2 / "biomarkers.csv").string()));
    CHECK(read_bytes((dir1 / "images/p00003.png").string()) ==
          read_bytes((dir2 / "images/p00003.png").string()));
  }
}

TEST_CASE("cohort round trip through the manifest") {
  namespace fs = std::filesystem;
  CohortConfig cfg;
  cfg.n = 10;
  cfg.seed = 31;
  auto cohort = gen_cohort(cfg);
  const auto dir = fs::temp_directory_path() / "tprs_roundtrip";
  fs::remove_all(dir);
  write_cohort(cohort, dir.string());

  auto loaded = load_manifest((dir / "manifest.csv").string());
  REQUIRE(loaded.size() == cohort.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].patient_id == cohort[i].patient_id);
    CHECK(loaded[i].grade == cohort[i].grade);
    CHECK(loaded[i].risk == doctest::Approx(cohort[i].risk).epsilon(1e-12));
    CHECK(loaded[i].event == cohort[i].event);
    REQUIRE(loaded[i].biomarkers.size() == 3);
    // series content survives the round trip exactly (text is %.17g)
    for (int k = 0; k < 3; ++k) {
      CHECK(loaded[i].biomarkers[k].values == cohort[i].biomarkers[k].values);
    }
    // images survive up to 8-bit quantization
    REQUIRE(loaded[i].image.has_value());
    for (size_t p = 0; p < loaded[i].image->pixels.size(); ++p) {
      CHECK(std::fabs(loaded[i].image->pixels[p] - cohort[i].image->pixels[p]) <=
            0.5 / 255.0 + 1e-12);
    }
  }

  // malformed rows are reported with their row number
  const std::string manifest = read_bytes((dir / "manifest.csv").string());
  const auto broken = manifest + "pX,images/pX.png,9,,,,55,10\n";
  atomic_write_bytes((dir / "bad.csv").string(), broken);
  CHECK_THROWS_WITH_AS(load_manifest((dir / "bad.csv").string()),
                       doctest::Contains("row 12"), std::runtime_error);
}

TEST_CASE("make_input assembles tensors, graphs and metadata") {
  CohortConfig cfg;
  cfg.n = 3;
  cfg.seed = 77;
  cfg.image_size = 32;
  auto cohort = gen_cohort(cfg);

  ModelConfig mcfg;  // desk scale, 32x32
  ModelInput in = make_input(cohort[0], mcfg);
  CHECK(in.image.shape() == Shape{32, 32, 3});
  CHECK(in.graph.num_nodes == 3 * cfg.visits);
  CHECK(in.meta.size() == 2);
  for (double v : in.meta) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // undersized config forces a resize
  ModelConfig small = mcfg;
  small.image_size = 16;
  small.cnn_channels = {8, 16};
  small.cnn_grid = 4;
  small.vit_patch = 4;
  ModelInput in16 = make_input(cohort[0], small);
  CHECK(in16.image.shape() == Shape{16, 16, 3});

  PatientRecord no_bio = cohort[0];
  no_bio.biomarkers.clear();
  CHECK_THROWS_AS(make_input(no_bio, mcfg), std::invalid_argument);
}
