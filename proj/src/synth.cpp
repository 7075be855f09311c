#include "tprs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"

namespace tprs {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LesionSpec {
  double cy, cx, radius;
  double r, g, b;
};

void paint_disc(FundusImage& img, FundusImage& mask, const LesionSpec& l,
                double disc_cy, double disc_cx, double disc_r, bool record) {
  const int y0 = std::max(0, static_cast<int>(std::floor(l.cy - l.radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(l.cy + l.radius)));
  const int x0 = std::max(0, static_cast<int>(std::floor(l.cx - l.radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(l.cx + l.radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y - l.cy, dx = x - l.cx;
      if (dy * dy + dx * dx > l.radius * l.radius) continue;
      const double ry = y - disc_cy, rx = x - disc_cx;
      if (ry * ry + rx * rx > disc_r * disc_r) continue;  // stay on the retina
      img.at(y, x, 0) = l.r;
      img.at(y, x, 1) = l.g;
      img.at(y, x, 2) = l.b;
      if (record) mask.at(y, x) = 1.0;
    }
}

}  // namespace

void CohortConfig::validate() const {
  if (n <= 0 || visits < 1 || image_size < 16) {
    throw std::invalid_argument("cohort config: n, visits, image size out of range");
  }
  double total = 0;
  for (double p : class_priors) {
    if (p < 0) throw std::invalid_argument("cohort config: negative prior");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("cohort config: class priors must sum to 1");
  }
  if (hba1c_sigma < 0 || thickness_sigma < 0 || vegf_sigma < 0) {
    throw std::invalid_argument("cohort config: sigma values must be non-negative");
  }
  if (censoring_fraction < 0 || censoring_fraction >= 1) {
    throw std::invalid_argument("cohort config: censoring fraction in [0,1)");
  }
}

std::vector<BiomarkerSeries> gen_biomarkers(int grade, const CohortConfig& cfg,
                                            Rng& rng) {
  if (grade < 0 || grade > 4) throw std::invalid_argument("grade must be 0..4");
  std::vector<BiomarkerSeries> out(3);

  // per-visit drift scales with grade: glycemia and VEGF worsen upward,
  // thickness decays
  const double drift_h = 0.15 * grade;
  const double drift_t = -2.0 * grade;
  const double drift_v = 4.0 * grade;

  const double base_h = rng.normal(cfg.hba1c_mu, cfg.hba1c_sigma);
  const double base_t = rng.normal(cfg.thickness_mu, cfg.thickness_sigma);
  const double base_v = std::max(0.0, rng.normal(cfg.vegf_mu, cfg.vegf_sigma));

  auto fill = [&](BiomarkerSeries& s, BiomarkerId id, double base, double drift,
                  double noise_sigma) {
    s.id = id;
    for (int i = 0; i < cfg.visits; ++i) {
      s.timestamps.push_back(6.0 * i);
      // visit 0 is the exact baseline draw; later visits add drift + noise
      const double v =
          i == 0 ? base : base + drift * i + rng.normal(0.0, noise_sigma);
      s.values.push_back(v);
    }
  };
  fill(out[0], BiomarkerId::kHbA1c, base_h, drift_h, 0.06);
  fill(out[1], BiomarkerId::kRetinalThickness, base_t, drift_t, 1.2);
  fill(out[2], BiomarkerId::kVegf, base_v, drift_v, 2.5);
  return out;
}

SyntheticFundus gen_fundus(int grade, int size, Rng& rng) {
  if (size < 16) throw std::invalid_argument("gen_fundus: size must be >= 16");
  if (grade < 0 || grade > 4) throw std::invalid_argument("grade must be 0..4");

  SyntheticFundus out;
  out.image = FundusImage::create(size, size, 3, 0.0);
  out.mask = FundusImage::create(size, size, 1, 0.0);
  FundusImage& img = out.image;

  const double cy = (size - 1) / 2.0, cx = (size - 1) / 2.0;
  const double radius = 0.47 * size;

  // retina disc with radial shading and slight texture noise
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - cy, dx = x - cx;
      const double r2 = (dy * dy + dx * dx) / (radius * radius);
      if (r2 > 1.0) {
        img.at(y, x, 0) = 0.02;
        img.at(y, x, 1) = 0.02;
        img.at(y, x, 2) = 0.02;
        continue;
      }
      const double shade = 1.0 - 0.40 * r2 + rng.normal(0.0, 0.015);
      img.at(y, x, 0) = std::clamp(0.72 * shade, 0.0, 1.0);
      img.at(y, x, 1) = std::clamp(0.38 * shade, 0.0, 1.0);
      img.at(y, x, 2) = std::clamp(0.20 * shade, 0.0, 1.0);
    }

  // optic disc
  const double od_cy = cy - 0.1 * size * rng.uniform(-1.0, 1.0);
  const double od_cx = cx + 0.28 * size * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  const double od_r = 0.09 * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - od_cy, dx = x - od_cx;
      if (dy * dy + dx * dx <= od_r * od_r) {
        const double ry = y - cy, rx = x - cx;
        if (ry * ry + rx * rx <= radius * radius) {
          img.at(y, x, 0) = 0.93;
          img.at(y, x, 1) = 0.82;
          img.at(y, x, 2) = 0.55;
        }
      }
    }

  // vessel arcs leaving the optic disc
  const int vessels = 3 + rng.uniform_int(0, 1);
  for (int v = 0; v < vessels; ++v) {
    const double theta0 = rng.uniform(0.0, 2.0 * M_PI);
    const double curve = rng.uniform(-0.8, 0.8);
    double py = od_cy, px = od_cx;
    double dir = theta0;
    const int steps = size * 2;
    for (int s = 0; s < steps; ++s) {
      py += 0.5 * std::sin(dir);
      px += 0.5 * std::cos(dir);
      dir += curve / steps;
      const int iy = static_cast<int>(std::lround(py));
      const int ix = static_cast<int>(std::lround(px));
      if (iy < 0 || iy >= size || ix < 0 || ix >= size) break;
      const double ry = iy - cy, rx = ix - cx;
      if (ry * ry + rx * rx > radius * radius) break;
      img.at(iy, ix, 0) *= 0.55;
      img.at(iy, ix, 1) *= 0.45;
      img.at(iy, ix, 2) *= 0.45;
    }
  }

  // Grade-dependent lesion roster. Each step up the scale introduces a new
  // lesion type on top of denser counts, so neighbouring grades differ both
  // qualitatively and in total lesion area:
  //   1: microaneurysm dots, 2: + hemorrhage blobs, 3: + bright exudates,
  //   4: dense confluent involvement with enlarged hemorrhages.
  const int micro = grade == 0 ? 0 : 6 + 4 * grade;
  const int hemorrhages = grade >= 2 ? 6 * (grade - 1) : 0;
  const int exudates = grade >= 3 ? 5 * (grade - 2) : 0;
  const int blotches = grade == 4 ? 3 : 0;  // large proliferative-stage bleeds

  auto place = [&](double lesion_r, double r, double g, double b) {
    const double rho = radius * (0.15 + 0.65 * std::sqrt(rng.uniform()));
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    LesionSpec l;
    l.cy = cy + rho * std::sin(ang);
    l.cx = cx + rho * std::cos(ang);
    l.radius = lesion_r;
    l.r = r;
    l.g = g;
    l.b = b;
    paint_disc(img, out.mask, l, cy, cx, radius, true);
  };

  const double unit = size / 32.0;
  const double hem_r = (grade == 4 ? 4.0 : 2.8) * unit;
  for (int i = 0; i < micro; ++i)
    place(std::max(1.2, 1.7 * unit), 0.12, 0.02, 0.02);
  for (int i = 0; i < hemorrhages; ++i)
    place(std::max(1.8, hem_r), 0.20, 0.03, 0.05);
  for (int i = 0; i < exudates; ++i)
    place(std::max(1.5, 2.2 * unit), 0.99, 0.95, 0.60);
  for (int i = 0; i < blotches; ++i)
    place(std::max(3.0, 5.0 * unit), 0.16, 0.02, 0.03);

  img.clamp01();
  return out;
}

std::vector<PatientRecord> gen_cohort(const CohortConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);

  std::vector<PatientRecord> out;
  out.reserve(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Rng rng = root.split(static_cast<uint64_t>(i));
    PatientRecord rec;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%05d", i);
    rec.patient_id = buf;

    // grade from the priors
    double u = rng.uniform(), acc = 0;
    rec.grade = 4;
    for (int g = 0; g < 5; ++g) {
      acc += cfg.class_priors[static_cast<size_t>(g)];
      if (u < acc) {
        rec.grade = g;
        break;
      }
    }

    rec.biomarkers = gen_biomarkers(rec.grade, cfg, rng);
    SyntheticFundus fundus = gen_fundus(rec.grade, cfg.image_size, rng);
    rec.image = std::move(fundus.image);
    rec.lesion_mask = std::move(fundus.mask);
    rec.image_path = "images/" + rec.patient_id + ".png";

    rec.age = std::clamp(rng.normal(58.0, 10.0), 25.0, 90.0);
    rec.diabetes_years = std::clamp(rng.normal(12.0, 6.0), 1.0, 40.0);

    // risk from the biomarker trajectory and grade
    const auto& hb = rec.biomarkers[0];
    const auto& th = rec.biomarkers[1];
    const double span_years =
        cfg.visits > 1 ? (hb.timestamps.back() - hb.timestamps.front()) / 12.0
                       : 0.0;
    const double slope =
        span_years > 0 ? (hb.values.back() - hb.values.front()) / span_years : 0.0;
    const double drop =
        span_years > 0 ? (th.values.front() - th.values.back()) / span_years : 0.0;
    const double logit = cfg.risk_intercept + cfg.risk_coef_slope * slope +
                         cfg.risk_coef_drop * drop +
                         cfg.risk_coef_grade * rec.grade +
                         rng.normal(0.0, cfg.risk_noise_sigma);
    rec.risk = std::clamp(logistic(logit), 0.0, 1.0);
    rec.has_risk = true;

    // higher risk draws stochastically shorter progression times
    const double t = std::clamp(1.0 + 60.0 * (1.0 - rec.risk) * rng.uniform(0.5, 1.5),
                                1.0, 120.0);
    const bool censored = rng.uniform() < cfg.censoring_fraction;
    rec.event = censored ? 0 : 1;
    rec.progression_months = censored ? std::max(0.5, t * rng.uniform(0.3, 0.95)) : t;
    rec.has_progression = true;

    out.push_back(std::move(rec));
  }
  return out;
}

void write_cohort(const std::vector<PatientRecord>& records,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  std::ostringstream manifest;
  manifest << "patient_id,image_path,grade,risk,progression_months,event,age,"
              "diabetes_years\n";
  std::ostringstream bio;
  bio << "patient_id,biomarker,month,value\n";

  for (const auto& rec : records) {
    if (!rec.image.has_value()) {
      throw std::invalid_argument("write_cohort: record lacks an inline image");
    }
    write_png((fs::path(out_dir) / rec.image_path).string(), *rec.image);
    if (rec.lesion_mask.has_value()) {
      write_png((fs::path(out_dir) / "masks" / (rec.patient_id + ".png")).string(),
                *rec.lesion_mask);
    }
    manifest << rec.patient_id << "," << rec.image_path << "," << rec.grade
             << "," << (rec.has_risk ? format_double(rec.risk) : "") << ","
             << (rec.has_progression ? format_double(rec.progression_months) : "")
             << "," << (rec.has_progression ? std::to_string(rec.event) : "")
             << "," << format_double(rec.age) << ","
             << format_double(rec.diabetes_years) << "\n";
    for (const auto& s : rec.biomarkers) {
      for (size_t i = 0; i < s.values.size(); ++i) {
        bio << rec.patient_id << "," << biomarker_name(s.id) << ","
            << format_double(s.timestamps[i]) << ","
            << format_double(s.values[i]) << "\n";
      }
    }
  }
  atomic_write_bytes((fs::path(out_dir) / "manifest.csv").string(), manifest.str());
  atomic_write_bytes((fs::path(out_dir) / "biomarkers.csv").string(), bio.str());
}

std::vector<LesionBox> lesion_boxes(const FundusImage& mask) {
  const int h = mask.height, w = mask.width;
  std::vector<int> label(static_cast<size_t>(h) * w, 0);
  std::vector<LesionBox> boxes;
  int next = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.at(y, x) <= 0.5 || label[static_cast<size_t>(y) * w + x]) continue;
      ++next;
      LesionBox box{x, y, x, y};
      std::vector<std::pair<int, int>> stack{{y, x}};
      label[static_cast<size_t>(y) * w + x] = next;
      while (!stack.empty()) {
        auto [py, px] = stack.back();
        stack.pop_back();
        box.x0 = std::min(box.x0, px);
        box.x1 = std::max(box.x1, px);
        box.y0 = std::min(box.y0, py);
        box.y1 = std::max(box.y1, py);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = py + dy[k], nx = px + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (mask.at(ny, nx) <= 0.5 || label[static_cast<size_t>(ny) * w + nx])
            continue;
          label[static_cast<size_t>(ny) * w + nx] = next;
          stack.push_back({ny, nx});
        }
      }
      boxes.push_back(box);
    }
  return boxes;
}

}  // namespace tprs
