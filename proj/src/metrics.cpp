#include "tprs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace tprs {

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

void check_binary_labels(const std::vector<double>& scores,
                         const std::vector<int>& labels, const char* op,
                         bool need_both = true) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument(std::string(op) + ": scores/labels misaligned");
  }
  int pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw std::invalid_argument(std::string(op) + ": labels must be 0/1");
    }
    (l ? pos : neg) += 1;
  }
  if (need_both && (pos == 0 || neg == 0)) {
    throw std::invalid_argument(std::string(op) + ": both classes required");
  }
}

// placement values: V10 per positive, V01 per negative
void placements(const std::vector<double>& scores, const std::vector<int>& labels,
                std::vector<double>& v10, std::vector<double>& v01,
                double& auc) {
  std::vector<double> pos, neg;
  for (size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? pos : neg).push_back(scores[i]);
  }
  v10.assign(pos.size(), 0.0);
  v01.assign(neg.size(), 0.0);
  for (size_t i = 0; i < pos.size(); ++i) {
    double s = 0;
    for (double nv : neg) s += pos[i] > nv ? 1.0 : (pos[i] == nv ? 0.5 : 0.0);
    v10[i] = s / static_cast<double>(neg.size());
  }
  for (size_t j = 0; j < neg.size(); ++j) {
    double s = 0;
    for (double pv : pos) s += pv > neg[j] ? 1.0 : (pv == neg[j] ? 0.5 : 0.0);
    v01[j] = s / static_cast<double>(pos.size());
  }
  auc = 0;
  for (double v : v10) auc += v;
  auc /= static_cast<double>(v10.size());
}

double sample_var(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mu = 0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& y_true,
                          const std::vector<int>& y_pred, int classes) {
  if (y_true.size() != y_pred.size() || y_true.empty() || classes < 2) {
    throw std::invalid_argument("confusion: inputs misaligned");
  }
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<size_t>(classes) * classes, 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= classes || y_pred[i] < 0 ||
        y_pred[i] >= classes) {
      throw std::invalid_argument("confusion: label out of range at row " +
                                  std::to_string(i));
    }
    cm.at(y_true[i], y_pred[i]) += 1;
  }
  return cm;
}

double qwk(const ConfusionMatrix& cm, bool* degenerate_flag) {
  const int c = cm.classes;
  const double n = static_cast<double>(cm.total());
  if (n <= 0) throw std::invalid_argument("qwk: empty confusion matrix");
  std::vector<double> row(c, 0), col(c, 0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      row[i] += static_cast<double>(cm.at(i, j));
      col[j] += static_cast<double>(cm.at(i, j));
    }
  const double denom_w = static_cast<double>(c - 1) * (c - 1);
  double num = 0, den = 0;
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      const double w = (i - j) * (i - j) / denom_w;
      num += w * static_cast<double>(cm.at(i, j));
      den += w * row[i] * col[j] / n;
    }
  if (den == 0.0) {
    if (degenerate_flag) *degenerate_flag = true;
    return 0.0;
  }
  if (degenerate_flag) *degenerate_flag = false;
  return 1.0 - num / den;
}

double cohen_kappa(const ConfusionMatrix& cm, bool* degenerate_flag) {
  const int c = cm.classes;
  const double n = static_cast<double>(cm.total());
  if (n <= 0) throw std::invalid_argument("cohen_kappa: empty confusion matrix");
  std::vector<double> row(c, 0), col(c, 0);
  double diag = 0;
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      row[i] += static_cast<double>(cm.at(i, j));
      col[j] += static_cast<double>(cm.at(i, j));
      if (i == j) diag += static_cast<double>(cm.at(i, j));
    }
  const double po = diag / n;
  double pe = 0;
  for (int i = 0; i < c; ++i) pe += (row[i] / n) * (col[i] / n);
  if (pe == 1.0) {
    if (degenerate_flag) *degenerate_flag = true;
    return 0.0;
  }
  if (degenerate_flag) *degenerate_flag = false;
  return (po - pe) / (1.0 - pe);
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  const int c = cm.classes;
  const double n = static_cast<double>(cm.total());
  if (n <= 0) throw std::invalid_argument("classification_metrics: empty matrix");

  ClassificationMetrics m;
  auto ratio = [&m](double num, double den) {
    if (den == 0.0) {
      m.undefined_ratio_flag = true;
      return 0.0;
    }
    return num / den;
  };

  double diag = 0;
  for (int i = 0; i < c; ++i) diag += static_cast<double>(cm.at(i, i));
  m.accuracy = diag / n;

  double sens = 0, spec = 0, prec = 0, rec = 0, f1 = 0, npv = 0;
  for (int k = 0; k < c; ++k) {
    double tp = static_cast<double>(cm.at(k, k));
    double fn = 0, fp = 0;
    for (int j = 0; j < c; ++j) {
      if (j != k) {
        fn += static_cast<double>(cm.at(k, j));
        fp += static_cast<double>(cm.at(j, k));
      }
    }
    const double tn = n - tp - fn - fp;
    const double se = ratio(tp, tp + fn);
    const double sp = ratio(tn, tn + fp);
    const double pr = ratio(tp, tp + fp);
    sens += se;
    spec += sp;
    prec += pr;
    rec += se;
    npv += ratio(tn, tn + fn);
    f1 += (pr + se) == 0.0 ? 0.0 : 2.0 * pr * se / (pr + se);
  }
  m.precision_macro = prec / c;
  m.recall_macro = rec / c;
  if (c == 2) {
    // binary convention, class 1 positive
    const double tp = static_cast<double>(cm.at(1, 1));
    const double fn = static_cast<double>(cm.at(1, 0));
    const double fp = static_cast<double>(cm.at(0, 1));
    const double tn = static_cast<double>(cm.at(0, 0));
    m.sensitivity = ratio(tp, tp + fn);
    m.specificity = ratio(tn, tn + fp);
    m.ppv = ratio(tp, tp + fp);
    m.npv = ratio(tn, tn + fn);
    m.f1 = (m.ppv + m.sensitivity) == 0.0
               ? 0.0
               : 2.0 * m.ppv * m.sensitivity / (m.ppv + m.sensitivity);
  } else {
    m.sensitivity = sens / c;
    m.specificity = spec / c;
    m.ppv = m.precision_macro;
    m.npv = npv / c;
    m.f1 = f1 / c;
  }

  // multi-class MCC (matches the binary formula at C = 2)
  std::vector<double> row(c, 0), col(c, 0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      row[i] += static_cast<double>(cm.at(i, j));
      col[j] += static_cast<double>(cm.at(i, j));
    }
  double sum_rc = 0, sum_r2 = 0, sum_c2 = 0;
  for (int i = 0; i < c; ++i) {
    sum_rc += row[i] * col[i];
    sum_r2 += row[i] * row[i];
    sum_c2 += col[i] * col[i];
  }
  const double cov = diag * n - sum_rc;
  const double den = std::sqrt(n * n - sum_r2) * std::sqrt(n * n - sum_c2);
  if (den == 0.0) {
    m.undefined_ratio_flag = true;
    m.mcc = 0.0;
  } else {
    m.mcc = cov / den;
  }

  bool kflag = false;
  m.cohen_kappa = cohen_kappa(cm, &kflag);
  m.undefined_ratio_flag = m.undefined_ratio_flag || kflag;
  return m;
}

RocResult roc_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  check_binary_labels(scores, labels, "roc_auc");

  // rank-sum AUC with midranks for ties
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_pos = 0;
  int64_t npos = 0, nneg = 0;
  for (size_t k = 0; k < n; ++k) {
    if (labels[k]) {
      rank_pos += rank[k];
      ++npos;
    } else {
      ++nneg;
    }
  }
  RocResult r;
  r.auc = (rank_pos - static_cast<double>(npos) * (npos + 1) / 2.0) /
          (static_cast<double>(npos) * static_cast<double>(nneg));

  // curve at every distinct threshold, descending
  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : distinct) {
    int64_t tp = 0, fp = 0;
    for (size_t k = 0; k < n; ++k) {
      if (scores[k] >= t) (labels[k] ? tp : fp) += 1;
    }
    r.curve.push_back({t, static_cast<double>(fp) / nneg,
                       static_cast<double>(tp) / npos});
  }
  return r;
}

PrResult pr_auc(const std::vector<double>& scores,
                const std::vector<int>& labels) {
  check_binary_labels(scores, labels, "pr_auc", false);
  int64_t npos = 0;
  for (int l : labels) npos += l;
  if (npos == 0) throw std::invalid_argument("pr_auc: at least one positive required");

  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  PrResult r;
  r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (double t : distinct) {
    int64_t tp = 0, fp = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
      if (scores[k] >= t) (labels[k] ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(npos);
    const double precision =
        tp + fp == 0 ? 1.0
                     : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.curve.push_back({t, recall, precision});
  }
  // trapezoid over the recall-sorted operating points
  for (size_t k = 1; k < r.curve.size(); ++k) {
    r.auc += (r.curve[k].recall - r.curve[k - 1].recall) *
             (r.curve[k].precision + r.curve[k - 1].precision) / 2.0;
  }
  return r;
}

double brier(const std::vector<double>& probs, const std::vector<int>& outcomes) {
  if (probs.size() != outcomes.size() || probs.empty()) {
    throw std::invalid_argument("brier: inputs misaligned");
  }
  double s = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0 || probs[i] > 1.0) {
      throw std::invalid_argument("brier: probabilities must be in [0,1]");
    }
    const double d = probs[i] - outcomes[i];
    s += d * d;
  }
  return s / static_cast<double>(probs.size());
}

double c_index(const std::vector<double>& risks, const std::vector<double>& times,
               const std::vector<int>& events) {
  const size_t n = risks.size();
  if (times.size() != n || events.size() != n || n < 2) {
    throw std::invalid_argument("c_index: inputs misaligned");
  }
  double comparable = 0, concordant = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!events[i]) continue;
    for (size_t j = 0; j < n; ++j) {
      if (i == j || !(times[i] < times[j])) continue;
      comparable += 1;
      if (risks[i] > risks[j]) {
        concordant += 1;
      } else if (risks[i] == risks[j]) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) {
    throw std::invalid_argument("c_index: no comparable pairs");
  }
  return concordant / comparable;
}

double net_benefit(int64_t tp, int64_t fp, int64_t n, double p_t) {
  if (!(p_t > 0.0 && p_t < 1.0)) {
    throw std::invalid_argument("net_benefit: p_t must be in (0,1)");
  }
  if (n <= 0) throw std::invalid_argument("net_benefit: empty sample");
  return static_cast<double>(tp) / n -
         (static_cast<double>(fp) / n) * (p_t / (1.0 - p_t));
}

std::vector<double> default_dca_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

std::vector<DcaPoint> dca_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels,
                                const std::vector<double>& grid) {
  check_binary_labels(scores, labels, "dca_curve", false);
  const int64_t n = static_cast<int64_t>(scores.size());
  int64_t pos = 0;
  for (int l : labels) pos += l;

  std::vector<DcaPoint> out;
  out.reserve(grid.size());
  for (double p_t : grid) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= p_t) (labels[i] ? tp : fp) += 1;
    }
    DcaPoint pt;
    pt.p_t = p_t;
    pt.net_benefit = net_benefit(tp, fp, n, p_t);
    pt.treat_all_benefit = net_benefit(pos, n - pos, n, p_t);
    out.push_back(pt);
  }
  return out;
}

YoudenResult youden_threshold(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  check_binary_labels(scores, labels, "youden_threshold");
  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  int64_t npos = 0, nneg = 0;
  for (int l : labels) (l ? npos : nneg) += 1;

  // maximize tp*nneg + tn*npos in exact integer arithmetic so ties break
  // toward the lower threshold deterministically
  YoudenResult best;
  int64_t best_num = -1;
  for (double t : distinct) {
    int64_t tp = 0, tn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t && labels[i]) ++tp;
      if (scores[i] < t && !labels[i]) ++tn;
    }
    const int64_t num = tp * nneg + tn * npos;
    if (num > best_num) {
      best_num = num;
      best.threshold = t;
      best.j = static_cast<double>(tp) / npos +
               static_cast<double>(tn) / nneg - 1.0;
    }
  }
  return best;
}

DelongResult delong_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b,
                         const std::vector<int>& labels) {
  if (scores_a.size() != scores_b.size()) {
    throw std::invalid_argument("delong_test: paired scores required");
  }
  check_binary_labels(scores_a, labels, "delong_test");

  DelongResult r;
  std::vector<double> v10a, v01a, v10b, v01b;
  placements(scores_a, labels, v10a, v01a, r.auc_a);
  placements(scores_b, labels, v10b, v01b, r.auc_b);

  const double m = static_cast<double>(v10a.size());
  const double n = static_cast<double>(v01a.size());

  auto covar = [](const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return x.size() > 1 ? s / static_cast<double>(x.size() - 1) : 0.0;
  };

  r.var_a = sample_var(v10a) / m + sample_var(v01a) / n;
  r.var_b = sample_var(v10b) / m + sample_var(v01b) / n;
  const double cov = covar(v10a, v10b) / m + covar(v01a, v01b) / n;
  const double var_diff = r.var_a + r.var_b - 2.0 * cov;
  if (var_diff <= 0.0) {
    r.zero_variance_flag = true;
    r.z = 0.0;
    r.p = 1.0;
    return r;
  }
  r.z = (r.auc_a - r.auc_b) / std::sqrt(var_diff);
  r.p = 2.0 * (1.0 - phi(std::fabs(r.z)));
  return r;
}

double delong_auc_variance(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  std::vector<double> v10, v01;
  double auc;
  placements(scores, labels, v10, v01, auc);
  return sample_var(v10) / static_cast<double>(v10.size()) +
         sample_var(v01) / static_cast<double>(v01.size());
}

MetricsReport compute_report(const std::vector<PredictionRow>& rows, int classes) {
  if (rows.empty()) throw std::invalid_argument("compute_report: no rows");

  MetricsReport rep;
  rep.n = static_cast<int64_t>(rows.size());
  std::vector<int> y_true, y_pred;
  for (const auto& r : rows) {
    y_true.push_back(r.true_grade);
    y_pred.push_back(r.pred_grade);
  }
  rep.cm = confusion(y_true, y_pred, classes);
  bool qflag = false;
  rep.qwk = qwk(rep.cm, &qflag);
  auto cls = classification_metrics(rep.cm);
  rep.accuracy = cls.accuracy;
  rep.sensitivity = cls.sensitivity;
  rep.specificity = cls.specificity;
  rep.f1 = cls.f1;
  rep.mcc = cls.mcc;
  rep.cohen_kappa = cls.cohen_kappa;
  rep.ppv = cls.ppv;
  rep.npv = cls.npv;
  rep.precision_macro = cls.precision_macro;
  rep.recall_macro = cls.recall_macro;
  rep.degenerate_flag = qflag || cls.undefined_ratio_flag;

  // macro one-vs-rest AUCs over classes present on both sides
  double auc_sum = 0, pr_sum = 0;
  int auc_classes = 0;
  for (int k = 0; k < classes; ++k) {
    std::vector<double> sc;
    std::vector<int> lb;
    int64_t pos = 0;
    for (const auto& r : rows) {
      sc.push_back(k < static_cast<int>(r.probs.size()) ? r.probs[k] : 0.0);
      lb.push_back(r.true_grade == k ? 1 : 0);
      pos += lb.back();
    }
    if (pos == 0 || pos == rep.n) continue;
    auc_sum += roc_auc(sc, lb).auc;
    pr_sum += pr_auc(sc, lb).auc;
    ++auc_classes;
  }
  if (auc_classes > 0) {
    rep.auc_roc = auc_sum / auc_classes;
    rep.pr_auc = pr_sum / auc_classes;
  } else {
    rep.degenerate_flag = true;
  }

  // binary DR detection: No DR vs Mild+ with score 1 - p0
  std::vector<double> det_scores;
  std::vector<int> det_labels;
  for (const auto& r : rows) {
    det_scores.push_back(r.probs.empty() ? (r.pred_grade > 0 ? 1.0 : 0.0)
                                         : 1.0 - r.probs[0]);
    det_labels.push_back(r.true_grade > 0 ? 1 : 0);
  }
  int64_t det_pos = 0;
  for (int l : det_labels) det_pos += l;
  if (det_pos > 0 && det_pos < rep.n) {
    auto roc = roc_auc(det_scores, det_labels);
    rep.auc_detection = roc.auc;
    rep.roc_curve = roc.curve;
    auto pr = pr_auc(det_scores, det_labels);
    rep.pr_detection = pr.auc;
    rep.pr_curve = pr.curve;
    rep.brier = brier(det_scores, det_labels);
    auto yj = youden_threshold(det_scores, det_labels);
    rep.youden_threshold = yj.threshold;
    rep.youden_j = yj.j;
    rep.dca = dca_curve(det_scores, det_labels, default_dca_grid());
    for (const auto& p : rep.dca) {
      if (std::fabs(p.p_t - 0.3) < 1e-9) rep.net_benefit_03 = p.net_benefit;
    }
  } else {
    rep.degenerate_flag = true;
  }

  // progression metrics from rows that carry risk/time/event
  std::vector<double> risks, times;
  std::vector<int> events;
  std::vector<double> risk_probs;
  std::vector<int> event_outcomes;
  for (const auto& r : rows) {
    if (r.has_risk && r.has_progression) {
      risks.push_back(r.risk);
      times.push_back(r.progression_months);
      events.push_back(r.event);
      risk_probs.push_back(r.risk);
      event_outcomes.push_back(r.event);
    }
  }
  if (risks.size() >= 2) {
    try {
      rep.c_index = c_index(risks, times, events);
      rep.has_c_index = true;
    } catch (const std::invalid_argument&) {
      rep.has_c_index = false;
    }
    rep.brier_risk = brier(risk_probs, event_outcomes);
    rep.has_brier_risk = true;
  }
  return rep;
}

}  // namespace tprs
