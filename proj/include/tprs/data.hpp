#pragma once

#include <string>
#include <vector>

#include "tprs/model.hpp"
#include "tprs/synth.hpp"

namespace tprs {

// Reads manifest.csv plus the biomarkers.csv sitting next to it; image paths
// resolve relative to the manifest directory. Grade-only rows (empty
// risk/progression columns) are accepted. Malformed rows raise errors naming
// the row number.
std::vector<PatientRecord> load_manifest(const std::string& manifest_path,
                                         bool load_images = true);

// Long-format biomarker CSV -> per-patient series (patients in file order).
void load_biomarkers(const std::string& path,
                     std::vector<PatientRecord>& records);

Tensor image_to_tensor(const FundusImage& img);

// Fixed-range normalization (age/100, diabetes_years/50) so a single record
// can be scored without cohort statistics.
std::vector<double> normalize_meta(const PatientRecord& rec);

// Assembles the model input: image tensor (resized if the stored image does
// not match the configured input size), temporal graph, normalized metadata.
ModelInput make_input(const PatientRecord& rec, const ModelConfig& cfg);

}  // namespace tprs
