#include "tprs/data.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"
#include "tprs/preprocess.hpp"

namespace tprs {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_bytes(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("malformed number '" + s + "' in " + where);
  }
}

}  // namespace

std::vector<PatientRecord> load_manifest(const std::string& manifest_path,
                                         bool load_images) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(manifest_path).parent_path();
  const auto lines = read_lines(manifest_path);
  if (lines.empty()) throw std::runtime_error("empty manifest: " + manifest_path);

  const std::string header =
      "patient_id,image_path,grade,risk,progression_months,event,age,"
      "diabetes_years";
  if (lines[0] != header) {
    throw std::runtime_error("manifest header mismatch in " + manifest_path +
                             " (expected '" + header + "')");
  }

  std::vector<PatientRecord> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_csv_line(lines[i]);
    const std::string where = manifest_path + " row " + std::to_string(i + 1);
    if (cols.size() != 8) {
      throw std::runtime_error("expected 8 columns in " + where);
    }
    PatientRecord rec;
    rec.patient_id = cols[0];
    rec.image_path = cols[1];
    const int grade = static_cast<int>(parse_double(cols[2], where));
    if (grade < 0 || grade > 4) {
      throw std::runtime_error("grade out of range 0..4 in " + where);
    }
    rec.grade = grade;
    if (!cols[3].empty()) {
      rec.risk = parse_double(cols[3], where);
      if (rec.risk < 0.0 || rec.risk > 1.0) {
        throw std::runtime_error("risk out of [0,1] in " + where);
      }
      rec.has_risk = true;
    }
    if (!cols[4].empty() && !cols[5].empty()) {
      rec.progression_months = parse_double(cols[4], where);
      rec.event = static_cast<int>(parse_double(cols[5], where));
      if (rec.progression_months <= 0.0) {
        throw std::runtime_error("progression_months must be > 0 in " + where);
      }
      rec.has_progression = true;
    }
    rec.age = parse_double(cols[6], where);
    rec.diabetes_years = parse_double(cols[7], where);
    if (load_images) {
      const fs::path img = dir / rec.image_path;
      if (!fs::exists(img)) {
        throw std::runtime_error("missing image file: " + img.string());
      }
      rec.image = read_image(img.string());
    }
    out.push_back(std::move(rec));
  }

  const fs::path bio = dir / "biomarkers.csv";
  if (fs::exists(bio)) load_biomarkers(bio.string(), out);
  return out;
}

void load_biomarkers(const std::string& path,
                     std::vector<PatientRecord>& records) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "patient_id,biomarker,month,value") {
    throw std::runtime_error("biomarker header mismatch in " + path);
  }
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < records.size(); ++i) index[records[i].patient_id] = i;

  // (patient, biomarker) -> series under construction
  std::map<std::pair<size_t, int>, BiomarkerSeries> building;
  for (size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_csv_line(lines[i]);
    const std::string where = path + " row " + std::to_string(i + 1);
    if (cols.size() != 4) throw std::runtime_error("expected 4 columns in " + where);
    auto it = index.find(cols[0]);
    if (it == index.end()) continue;  // rows for patients outside the manifest
    const BiomarkerId id = biomarker_from_name(cols[1]);
    auto& series = building[{it->second, static_cast<int>(id)}];
    series.id = id;
    series.timestamps.push_back(parse_double(cols[2], where));
    series.values.push_back(parse_double(cols[3], where));
  }
  for (auto& [key, series] : building) {
    series.validate();
    records[key.first].biomarkers.push_back(std::move(series));
  }
}

Tensor image_to_tensor(const FundusImage& img) {
  return Tensor::from_data({img.height, img.width, img.channels}, img.pixels);
}

std::vector<double> normalize_meta(const PatientRecord& rec) {
  return {std::clamp(rec.age / 100.0, 0.0, 1.0),
          std::clamp(rec.diabetes_years / 50.0, 0.0, 1.0)};
}

ModelInput make_input(const PatientRecord& rec, const ModelConfig& cfg) {
  if (!rec.image.has_value()) {
    throw std::invalid_argument("make_input: record " + rec.patient_id +
                                " has no image loaded");
  }
  if (rec.biomarkers.empty()) {
    throw std::invalid_argument("make_input: record " + rec.patient_id +
                                " has no biomarker series");
  }
  ModelInput in;
  const FundusImage& img = *rec.image;
  if (img.width != cfg.image_size || img.height != cfg.image_size) {
    in.image = image_to_tensor(resize(img, cfg.image_size));
  } else {
    in.image = image_to_tensor(img);
  }
  in.graph = build_graph(rec.biomarkers, cfg.time_scale);
  in.meta = normalize_meta(rec);
  if (static_cast<int>(in.meta.size()) != cfg.meta_dim) {
    throw std::invalid_argument("make_input: metadata width " +
                                std::to_string(in.meta.size()) +
                                " does not match configured meta_dim");
  }
  return in;
}

}  // namespace tprs
