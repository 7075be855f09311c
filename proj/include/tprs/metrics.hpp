#pragma once

#include <string>
#include <vector>

namespace tprs {

struct ConfusionMatrix {
  int classes = 0;
  std::vector<int64_t> counts;  // rows = true, cols = predicted
  int64_t at(int t, int p) const {
    return counts[static_cast<size_t>(t) * classes + p];
  }
  int64_t& at(int t, int p) {
    return counts[static_cast<size_t>(t) * classes + p];
  }
  int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int>& y_true,
                          const std::vector<int>& y_pred, int classes);

// Quadratic weighted kappa, w_ij = (i-j)^2/(C-1)^2, expected counts from the
// marginal outer product. A degenerate table (zero expected disagreement)
// returns 0 with the flag set.
double qwk(const ConfusionMatrix& cm, bool* degenerate_flag = nullptr);

double cohen_kappa(const ConfusionMatrix& cm, bool* degenerate_flag = nullptr);

// One-vs-rest macro reductions for multi-class tables; a 2x2 table reduces to
// the usual binary definitions with class 1 as positive. 0/0 ratios are
// reported as 0 with the flag set.
struct ClassificationMetrics {
  double accuracy = 0;
  double sensitivity = 0;  // macro recall
  double specificity = 0;
  double precision_macro = 0;
  double recall_macro = 0;
  double f1 = 0;           // macro F1
  double mcc = 0;          // multi-class generalization
  double cohen_kappa = 0;
  double ppv = 0;          // macro precision
  double npv = 0;
  bool undefined_ratio_flag = false;
};
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold, fpr, tpr;
};
struct RocResult {
  double auc = 0;
  std::vector<RocPoint> curve;
};
// AUC equals the Mann-Whitney statistic P(s+ > s-) + 0.5 P(tie); curve points
// at every distinct threshold (score >= t predicts positive).
RocResult roc_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels);

struct PrPoint {
  double threshold, recall, precision;
};
struct PrResult {
  double auc = 0;
  std::vector<PrPoint> curve;  // recall-ascending, anchored at (0,1)
};
PrResult pr_auc(const std::vector<double>& scores,
                const std::vector<int>& labels);

double brier(const std::vector<double>& probs, const std::vector<int>& outcomes);

// Harrell's C over pairs where the earlier observed time has an event;
// risk ties count 1/2. Throws when no pair is comparable.
double c_index(const std::vector<double>& risks,
               const std::vector<double>& times,
               const std::vector<int>& events);

// TP/N - (FP/N) * p_t/(1-p_t)
double net_benefit(int64_t tp, int64_t fp, int64_t n, double p_t);

struct DcaPoint {
  double p_t;
  double net_benefit;
  double treat_all_benefit;
};
// Thresholds scores at each grid p_t; treat-none is identically 0.
std::vector<DcaPoint> dca_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels,
                                const std::vector<double>& grid);
std::vector<double> default_dca_grid();  // 0.01 .. 0.99 step 0.01

struct YoudenResult {
  double threshold = 0;
  double j = 0;
};
// Maximizes sensitivity + specificity - 1 over distinct score cut-points
// (score >= t), ties broken toward the lower threshold.
YoudenResult youden_threshold(const std::vector<double>& scores,
                              const std::vector<int>& labels);

struct DelongResult {
  double auc_a = 0, auc_b = 0;
  double var_a = 0, var_b = 0;
  double z = 0, p = 1.0;
  bool zero_variance_flag = false;
};
// DeLong covariance from placement values; two-sided normal p-value.
DelongResult delong_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b,
                         const std::vector<int>& labels);
// Variance of a single AUC from the same placement machinery.
double delong_auc_variance(const std::vector<double>& scores,
                           const std::vector<int>& labels);

// Everything the evaluate pipeline emits for one set of predictions.
struct MetricsReport {
  int64_t n = 0;
  double accuracy = 0;
  double qwk = 0;
  double sensitivity = 0;
  double specificity = 0;
  double f1 = 0;
  double mcc = 0;
  double cohen_kappa = 0;
  double brier = 0;          // binary DR detection (1 - p0 vs grade >= 1)
  double brier_risk = 0;     // risk score vs observed event flag
  double auc_roc = 0;        // macro one-vs-rest over classes present
  double pr_auc = 0;
  double auc_detection = 0;  // binary DR detection AUC
  double pr_detection = 0;
  double ppv = 0;
  double npv = 0;
  double precision_macro = 0;
  double recall_macro = 0;
  double c_index = 0;
  bool has_c_index = false;
  bool has_brier_risk = false;
  double youden_threshold = 0;
  double youden_j = 0;
  double net_benefit_03 = 0;  // detection net benefit at p_t = 0.3
  bool degenerate_flag = false;
  ConfusionMatrix cm;
  std::vector<RocPoint> roc_curve;   // binary detection
  std::vector<PrPoint> pr_curve;     // binary detection
  std::vector<DcaPoint> dca;         // binary detection
};

// One prediction row as consumed by `evaluate` (risk/time/event optional).
struct PredictionRow {
  std::string patient_id;
  int true_grade = 0;
  int pred_grade = 0;
  std::vector<double> probs;  // p0..p4
  double risk = 0;
  bool has_risk = false;
  double progression_months = 0;
  int event = 0;
  bool has_progression = false;
};

MetricsReport compute_report(const std::vector<PredictionRow>& rows,
                             int classes = 5);

}  // namespace tprs
