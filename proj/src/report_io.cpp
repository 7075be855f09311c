#include "tprs/report_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"

namespace tprs {

namespace {

using nlohmann::json;

double parse_field(const std::string& s, const std::string& where) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed number '" + s + "' in " + where);
  }
}

}  // namespace

std::string report_to_json(const MetricsReport& rep) {
  json j;
  j["n"] = rep.n;
  j["accuracy"] = rep.accuracy;
  j["qwk"] = rep.qwk;
  j["sensitivity"] = rep.sensitivity;
  j["specificity"] = rep.specificity;
  j["f1"] = rep.f1;
  j["mcc"] = rep.mcc;
  j["cohen_kappa"] = rep.cohen_kappa;
  j["brier"] = rep.brier;
  j["auc_roc"] = rep.auc_roc;
  j["pr_auc"] = rep.pr_auc;
  j["auc_detection"] = rep.auc_detection;
  j["pr_detection"] = rep.pr_detection;
  j["ppv"] = rep.ppv;
  j["npv"] = rep.npv;
  j["precision_macro"] = rep.precision_macro;
  j["recall_macro"] = rep.recall_macro;
  j["youden_threshold"] = rep.youden_threshold;
  j["youden_j"] = rep.youden_j;
  j["net_benefit_at_0.3"] = rep.net_benefit_03;
  j["degenerate_flag"] = rep.degenerate_flag;
  if (rep.has_c_index) j["c_index"] = rep.c_index;
  if (rep.has_brier_risk) j["brier_risk"] = rep.brier_risk;
  return j.dump(2) + "\n";
}

void write_report_files(const MetricsReport& rep, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  atomic_write_bytes((fs::path(out_dir) / "report.json").string(),
                     report_to_json(rep));

  std::ostringstream roc;
  roc << "threshold,fpr,tpr\n";
  for (const auto& p : rep.roc_curve) {
    roc << format_double(p.threshold) << "," << format_double(p.fpr) << ","
        << format_double(p.tpr) << "\n";
  }
  atomic_write_bytes((fs::path(out_dir) / "roc.csv").string(), roc.str());

  std::ostringstream pr;
  pr << "threshold,recall,precision\n";
  for (const auto& p : rep.pr_curve) {
    pr << format_double(p.threshold) << "," << format_double(p.recall) << ","
       << format_double(p.precision) << "\n";
  }
  atomic_write_bytes((fs::path(out_dir) / "pr.csv").string(), pr.str());

  std::ostringstream dca;
  dca << "p_t,net_benefit,treat_all,treat_none\n";
  for (const auto& p : rep.dca) {
    dca << format_double(p.p_t) << "," << format_double(p.net_benefit) << ","
        << format_double(p.treat_all_benefit) << ",0\n";
  }
  atomic_write_bytes((fs::path(out_dir) / "dca.csv").string(), dca.str());

  std::ostringstream cm;
  for (int i = 0; i < rep.cm.classes; ++i) {
    for (int j = 0; j < rep.cm.classes; ++j) {
      cm << (j ? "," : "") << rep.cm.at(i, j);
    }
    cm << "\n";
  }
  atomic_write_bytes((fs::path(out_dir) / "confusion.csv").string(), cm.str());
}

std::string predictions_to_csv(const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << "patient_id,true_grade,pred_grade,p0,p1,p2,p3,p4,risk,"
        "progression_months,event\n";
  for (const auto& r : rows) {
    os << r.patient_id << "," << r.true_grade << "," << r.pred_grade;
    for (int c = 0; c < 5; ++c) {
      os << ","
         << format_double(c < static_cast<int>(r.probs.size()) ? r.probs[static_cast<size_t>(c)]
                                                               : 0.0);
    }
    os << "," << (r.has_risk ? format_double(r.risk) : "");
    os << "," << (r.has_progression ? format_double(r.progression_months) : "");
    os << "," << (r.has_progression ? std::to_string(r.event) : "");
    os << "\n";
  }
  return os.str();
}

std::vector<PredictionRow> predictions_from_csv(const std::string& path) {
  std::istringstream in(read_bytes(path));
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty predictions file: " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "patient_id,true_grade,pred_grade,p0,p1,p2,p3,p4,risk,"
              "progression_months,event") {
    throw std::runtime_error("predictions header mismatch in " + path);
  }
  std::vector<PredictionRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    const std::string where = path + " row " + std::to_string(lineno);
    if (cols.size() != 11) {
      throw std::runtime_error("expected 11 columns in " + where);
    }
    PredictionRow r;
    r.patient_id = cols[0];
    r.true_grade = static_cast<int>(parse_field(cols[1], where));
    r.pred_grade = static_cast<int>(parse_field(cols[2], where));
    for (int c = 0; c < 5; ++c) {
      r.probs.push_back(parse_field(cols[static_cast<size_t>(3 + c)], where));
    }
    if (!cols[8].empty()) {
      r.risk = parse_field(cols[8], where);
      r.has_risk = true;
    }
    if (!cols[9].empty() && !cols[10].empty()) {
      r.progression_months = parse_field(cols[9], where);
      r.event = static_cast<int>(parse_field(cols[10], where));
      r.has_progression = true;
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("no prediction rows in " + path);
  return rows;
}

std::string prediction_to_json(const McPrediction& p,
                               const std::string& patient_id) {
  json j;
  j["patient_id"] = patient_id;
  j["class_probs"] = p.class_probs;
  j["grade"] = p.grade;
  j["risk"] = p.risk;
  j["tier"] = tier_name(p.tier);
  j["samples"] = p.samples;
  j["bayesian"] = p.bayesian;
  if (p.bayesian) {
    j["sigma"] = p.sigma;
    j["ci95"] = {p.ci_lo, p.ci_hi};
    j["class_sigma"] = p.class_sigma;
  }
  return j.dump(2) + "\n";
}

}  // namespace tprs
