#pragma once

#include <string>
#include <vector>

#include "tprs/metrics.hpp"
#include "tprs/model.hpp"

namespace tprs {

// Deterministic JSON rendering of a metrics report (keys sorted, doubles
// round-trippable), so identical runs produce byte-identical files.
std::string report_to_json(const MetricsReport& rep);

// report.json plus roc.csv, pr.csv, dca.csv, confusion.csv under out_dir.
void write_report_files(const MetricsReport& rep, const std::string& out_dir);

// Prediction rows as consumed by `evaluate`:
// patient_id,true_grade,pred_grade,p0..p4,risk,progression_months,event
std::string predictions_to_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> predictions_from_csv(const std::string& path);

// JSON record emitted by `predict`; sigma/CI fields are omitted for
// non-Bayesian (single deterministic pass) predictions.
std::string prediction_to_json(const McPrediction& p,
                               const std::string& patient_id);

}  // namespace tprs
