#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tprs/graph.hpp"
#include "tprs/image.hpp"
#include "tprs/rng.hpp"

namespace tprs {

// One subject. Images may live on disk (image_path) or inline (image).
struct PatientRecord {
  std::string patient_id;
  std::string image_path;
  std::optional<FundusImage> image;
  std::vector<BiomarkerSeries> biomarkers;
  double age = 0;              // years, raw
  double diabetes_years = 0;   // years, raw
  int grade = 0;               // 0..4
  double risk = 0;             // in [0,1]
  bool has_risk = false;
  double progression_months = 0;
  int event = 0;
  bool has_progression = false;
  std::optional<FundusImage> lesion_mask;  // synthetic cohorts only
};

struct CohortConfig {
  int n = 200;
  std::array<double, 5> class_priors = {0.2, 0.2, 0.2, 0.2, 0.2};
  double hba1c_mu = 7.0, hba1c_sigma = 1.5;        // percent
  double thickness_mu = 250.0, thickness_sigma = 20.0;  // micrometers
  double vegf_mu = 100.0, vegf_sigma = 30.0;       // pg/mL; the source text
                                                   // never fixes these
  int visits = 6;                                  // T, months 0,6,..,6(T-1)
  int image_size = 32;
  uint64_t seed = 0;
  // risk = logistic(a*hba1c_slope + b*thickness_drop + c*grade + noise)
  double risk_coef_slope = 2.2;
  double risk_coef_drop = 0.10;
  double risk_coef_grade = 0.9;
  double risk_noise_sigma = 0.25;
  double risk_intercept = -2.4;
  double censoring_fraction = 0.2;
  void validate() const;
};

// Baselines from the configured Gaussians; per-visit drift proportional to
// grade (HbA1c and VEGF drift up, thickness down) plus noise on later visits.
std::vector<BiomarkerSeries> gen_biomarkers(int grade, const CohortConfig& cfg,
                                            Rng& rng);

// Fundus-like disc with radial shading and vessel arcs; grade-dependent
// lesions (dark microaneurysm dots, larger hemorrhage blobs, bright
// exudate patches). The mask marks lesion pixels.
struct SyntheticFundus {
  FundusImage image;
  FundusImage mask;  // grayscale 0/1
};
SyntheticFundus gen_fundus(int grade, int size, Rng& rng);

std::vector<PatientRecord> gen_cohort(const CohortConfig& cfg);

// Writes images/, masks/, manifest.csv and biomarkers.csv under out_dir.
void write_cohort(const std::vector<PatientRecord>& records,
                  const std::string& out_dir);

// Axis-aligned boxes of the mask's connected components (4-neighborhood).
struct LesionBox {
  int x0, y0, x1, y1;  // inclusive
  bool contains(int y, int x) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};
std::vector<LesionBox> lesion_boxes(const FundusImage& mask);

}  // namespace tprs
