#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "tprs/checkpoint.hpp"
#include "tprs/config.hpp"
#include "tprs/data.hpp"
#include "tprs/fsio.hpp"
#include "tprs/report_io.hpp"
#include "tprs/train.hpp"

namespace fs = std::filesystem;
using namespace tprs;

namespace {

void log_line(const std::string& msg) { std::cout << "[tprs] " << msg << "\n"; }

// --config file (json or key=value), then TPRS_SEED, then --seed
RunConfig resolve_config(const std::string& config_path, bool seed_set,
                         uint64_t seed_flag) {
  RunConfig rc = config_path.empty() ? default_run_config()
                                     : parse_run_config(config_path);
  apply_env_seed(rc);
  if (seed_set) rc.seed = seed_flag;
  rc.validate();
  return rc;
}

std::string locate_manifest(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.csv";
  if (!fs::exists(p)) {
    throw std::runtime_error("missing manifest: " + p.string());
  }
  return p.string();
}

// MC predictions on one split, per-patient streams derived from the master
// seed; the predict subcommand resolves the identical stream for a given id.
std::vector<PredictionRow> mc_rows(const Model& model,
                                   const std::vector<PatientRecord>& records,
                                   const std::vector<int>& idx, uint64_t seed) {
  std::vector<PredictionRow> rows;
  rows.reserve(idx.size());
  for (int i : idx) {
    const PatientRecord& rec = records[static_cast<size_t>(i)];
    ModelInput in = make_input(rec, model.config());
    McPrediction p;
    if (model.config().bayesian()) {
      Rng rng = mc_rng_for(seed, rec.patient_id);
      p = model.mc_predict(in, model.config().mc_samples, rng);
    } else {
      p = model.predict_deterministic(in);
    }
    PredictionRow row;
    row.patient_id = rec.patient_id;
    row.true_grade = rec.grade;
    row.pred_grade = p.grade;
    row.probs = p.class_probs;
    row.risk = p.risk;
    row.has_risk = true;
    if (rec.has_progression) {
      row.progression_months = rec.progression_months;
      row.event = rec.event;
      row.has_progression = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_synth(const RunConfig& rc, const std::string& out_dir) {
  CohortConfig cc = rc.cohort;
  cc.seed = rc.seed;
  log_line("synth start " + run_config_summary(rc) + " n=" + std::to_string(cc.n) +
           " out=" + out_dir);
  auto cohort = gen_cohort(cc);
  write_cohort(cohort, out_dir);
  log_line("synth done rows=" + std::to_string(cohort.size()) +
           " manifest=" + (fs::path(out_dir) / "manifest.csv").string());
  return 0;
}

int cmd_preprocess(const RunConfig& rc, const std::string& manifest,
                   const std::string& out_dir) {
  const std::string mpath = locate_manifest(manifest);
  auto records = load_manifest(mpath, true);
  fs::create_directories(fs::path(out_dir) / "images");

  std::ostringstream rejects;
  rejects << "path,laplacian_variance,accepted\n";
  std::ostringstream manifest_out;
  manifest_out << "patient_id,image_path,grade,risk,progression_months,event,"
                  "age,diabetes_years\n";
  int accepted = 0;
  for (const auto& rec : records) {
    // blur gate runs on the original image, before any enhancement
    const double lv = laplacian_variance(*rec.image);
    const bool ok = lv >= rc.preprocess.blur_threshold;
    rejects << rec.image_path << "," << format_double(lv) << ","
            << (ok ? 1 : 0) << "\n";
    if (!ok) continue;
    ++accepted;
    FundusImage processed = preprocess_image(*rec.image, rc.preprocess);
    const std::string rel = "images/" + rec.patient_id + ".png";
    write_png((fs::path(out_dir) / rel).string(), processed);
    manifest_out << rec.patient_id << "," << rel << "," << rec.grade << ","
                 << (rec.has_risk ? format_double(rec.risk) : "") << ","
                 << (rec.has_progression ? format_double(rec.progression_months) : "")
                 << "," << (rec.has_progression ? std::to_string(rec.event) : "")
                 << "," << format_double(rec.age) << ","
                 << format_double(rec.diabetes_years) << "\n";
  }
  atomic_write_bytes((fs::path(out_dir) / "manifest.csv").string(),
                     manifest_out.str());
  atomic_write_bytes((fs::path(out_dir) / "rejects.csv").string(), rejects.str());
  const fs::path bio = fs::path(mpath).parent_path() / "biomarkers.csv";
  if (fs::exists(bio)) {
    atomic_write_bytes((fs::path(out_dir) / "biomarkers.csv").string(),
                       read_bytes(bio.string()));
  }
  log_line("preprocess done total=" + std::to_string(records.size()) +
           " accepted=" + std::to_string(accepted) + " out=" + out_dir);
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data,
              const std::string& out_dir) {
  auto records = load_manifest(locate_manifest(data), true);
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.grade);
  auto splits = stratified_split(labels, rc.train.split, rc.seed);
  log_line("train start " + run_config_summary(rc) +
           " records=" + std::to_string(records.size()) +
           " train=" + std::to_string(splits[0].size()) +
           " val=" + std::to_string(splits[1].size()) +
           " test=" + std::to_string(splits[2].size()));

  Model model(rc.model, rc.seed);
  TrainConfig tcfg = rc.train;
  tcfg.seed = rc.seed;
  auto result = train(model, records, splits[0], splits[1], tcfg, rc.loss, rc.optim);

  fs::create_directories(out_dir);
  atomic_write_bytes((fs::path(out_dir) / "history.csv").string(),
                     history_csv(result.history));
  AdamState dummy;  // the restored best parameters are what matter downstream
  save_checkpoint((fs::path(out_dir) / "checkpoint.tprs").string(), model, dummy,
                  Rng(rc.seed), result.history.best_val_loss);

  auto rows = mc_rows(model, records, splits[2], rc.seed);
  atomic_write_bytes((fs::path(out_dir) / "predictions_test.csv").string(),
                     predictions_to_csv(rows));
  MetricsReport rep = compute_report(rows, rc.model.num_classes);
  write_report_files(rep, out_dir);

  log_line("train done epochs=" + std::to_string(result.history.epochs.size()) +
           " stop=" + result.history.stop_reason +
           " best_epoch=" + std::to_string(result.history.best_epoch) +
           " test_accuracy=" + format_double(rep.accuracy));
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& out_dir) {
  auto rows = predictions_from_csv(predictions);
  MetricsReport rep = compute_report(rows, 5);
  write_report_files(rep, out_dir);
  log_line("evaluate done rows=" + std::to_string(rows.size()) +
           " accuracy=" + format_double(rep.accuracy) +
           " qwk=" + format_double(rep.qwk) + " out=" + out_dir);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& image,
                const std::string& biomarkers, const std::string& patient_id,
                const std::string& meta, const std::string& saliency_path,
                const std::string& out_path, bool seed_set, uint64_t seed_flag) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  Model& model = loaded.model;

  PatientRecord rec;
  rec.patient_id =
      patient_id.empty() ? fs::path(image).stem().string() : patient_id;
  rec.image = read_image(image);
  rec.grade = 0;

  // biomarker rows for this patient from the long-format csv
  std::vector<PatientRecord> holder{rec};
  load_biomarkers(biomarkers, holder);
  rec = holder[0];
  if (rec.biomarkers.empty()) {
    throw std::runtime_error("no biomarker rows for patient '" +
                             rec.patient_id + "' in " + biomarkers);
  }

  // meta string like "age=54,diabetes_years=12"
  for (const auto& part : split_csv_line(meta)) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("bad --meta entry '" + part +
                                  "' (expected key=value)");
    }
    const std::string key = part.substr(0, eq);
    const double value = std::stod(part.substr(eq + 1));
    if (key == "age") rec.age = value;
    else if (key == "diabetes_years") rec.diabetes_years = value;
    else throw std::invalid_argument("unknown --meta key '" + key + "'");
  }

  ModelInput in = make_input(rec, model.config());
  uint64_t seed = seed_set ? seed_flag : 0;
  if (const char* env = std::getenv("TPRS_SEED"); env != nullptr && !seed_set) {
    seed = std::stoull(env);
  }
  McPrediction p;
  if (model.config().bayesian()) {
    Rng rng = mc_rng_for(seed, rec.patient_id);
    p = model.mc_predict(in, model.config().mc_samples, rng);
  } else {
    p = model.predict_deterministic(in);
  }

  const std::string record = prediction_to_json(p, rec.patient_id);
  if (out_path.empty()) {
    std::cout << record;
  } else {
    atomic_write_bytes(out_path, record);
  }
  if (!saliency_path.empty()) {
    write_image(saliency_path, model.saliency(in, p.grade));
  }
  log_line("predict done patient=" + rec.patient_id +
           " grade=" + std::to_string(p.grade) + " risk=" + format_double(p.risk) +
           " tier=" + tier_name(p.tier));
  return 0;
}

int cmd_cv(const RunConfig& rc, const std::string& data, int k,
           const std::string& out_dir) {
  auto records = load_manifest(locate_manifest(data), true);
  TrainConfig tcfg = rc.train;
  tcfg.seed = rc.seed;
  log_line("cv start k=" + std::to_string(k) + " " + run_config_summary(rc));
  auto cv = cross_validate(rc.model, records, k, tcfg, rc.loss, rc.optim);

  fs::create_directories(out_dir);
  for (size_t f = 0; f < cv.folds.size(); ++f) {
    atomic_write_bytes(
        (fs::path(out_dir) / ("fold_" + std::to_string(f) + ".json")).string(),
        report_to_json(cv.folds[f].report));
  }
  nlohmann::json j;
  for (const auto& [name, ms] : cv.aggregate) {
    j[name] = {{"mean", ms.first}, {"std", ms.second}};
  }
  atomic_write_bytes((fs::path(out_dir) / "cv_summary.json").string(),
                     j.dump(2) + "\n");
  const auto [acc_mu, acc_sd] = cv.aggregate.at("accuracy");
  log_line("cv done folds=" + std::to_string(cv.folds.size()) +
           " accuracy_mean=" + format_double(acc_mu) +
           " accuracy_std=" + format_double(acc_sd));
  return 0;
}

int cmd_ablate(const RunConfig& rc, const std::string& data,
               const std::string& variant, int epochs_override,
               const std::string& out_dir) {
  auto records = load_manifest(locate_manifest(data), true);
  TrainConfig tcfg = rc.train;
  tcfg.seed = rc.seed;
  if (epochs_override > 0) tcfg.epochs = epochs_override;
  const AblationVariant v = variant_from_name(variant);
  log_line("ablate start variant=" + variant + " epochs=" +
           std::to_string(tcfg.epochs));
  auto result = ablate(rc.model, records, v, tcfg, rc.loss, rc.optim);

  fs::create_directories(out_dir);
  write_report_files(result.report,
                     (fs::path(out_dir) / variant_name(v)).string());
  // one comparison row per run, appended to the shared table
  const fs::path table = fs::path(out_dir) / "ablation.csv";
  std::string csv;
  if (fs::exists(table)) {
    csv = read_bytes(table.string());
  } else {
    csv = "variant,param_count,fusion_in_width,accuracy,qwk,auc_roc,f1\n";
  }
  std::ostringstream row;
  row << variant_name(v) << "," << result.param_count << ","
      << result.fusion_in_width << "," << format_double(result.report.accuracy)
      << "," << format_double(result.report.qwk) << ","
      << format_double(result.report.auc_roc) << ","
      << format_double(result.report.f1) << "\n";
  atomic_write_bytes(table.string(), csv + row.str());
  log_line("ablate done variant=" + variant +
           " params=" + std::to_string(result.param_count) +
           " fusion_in=" + std::to_string(result.fusion_in_width) +
           " accuracy=" + format_double(result.report.accuracy));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TIMM-ProRS pipeline: synthetic cohorts, preprocessing, "
               "multi-modal training, evaluation and prediction"};
  app.require_subcommand(1);

  std::string config_path, data, out_dir, manifest, predictions;
  std::string checkpoint, image, biomarkers, patient_id, saliency_path, out_path;
  std::string meta = "age=55,diabetes_years=10";
  std::string variant = "full";
  uint64_t seed_flag = 0;
  bool seed_set = false;
  int n = -1, k = 5, epochs_override = -1, size = -1, visits = -1;
  std::string priors;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_flag, "master seed (overrides config and TPRS_SEED)")
        ->each([&](const std::string&) { seed_set = true; });
  };
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key=value or JSON)")
        ->check(CLI::ExistingFile);
  };

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic cohort");
  synth->add_option("--n", n, "cohort size");
  add_seed(synth);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--size", size, "image side length");
  synth->add_option("--visits", visits, "biomarker visits per patient");
  synth->add_option("--priors", priors, "five class priors, comma separated");
  add_config(synth);

  auto* prep = app.add_subcommand("preprocess", "enhance, filter and resize a dataset");
  prep->add_option("--manifest", manifest, "manifest.csv or its directory")->required();
  prep->add_option("--out", out_dir, "output directory")->required();
  add_config(prep);

  auto* tr = app.add_subcommand("train", "train the full model on a manifest");
  add_config(tr);
  tr->add_option("--data", data, "dataset directory or manifest path")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  add_seed(tr);

  auto* ev = app.add_subcommand("evaluate", "compute every metric from a predictions CSV");
  ev->add_option("--predictions", predictions, "predictions CSV")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--out", out_dir, "output directory")->required();

  auto* pr = app.add_subcommand("predict", "score one subject from a checkpoint");
  pr->add_option("--checkpoint", checkpoint, "checkpoint file")->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--image", image, "fundus image (png/ppm)")->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--biomarkers", biomarkers, "long-format biomarker CSV")->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--patient-id", patient_id, "row filter (default: image stem)");
  pr->add_option("--meta", meta, "metadata, e.g. age=54,diabetes_years=12");
  pr->add_option("--saliency", saliency_path, "write a saliency PNG here");
  pr->add_option("--out", out_path, "write the JSON record here (default stdout)");
  add_seed(pr);

  auto* cv = app.add_subcommand("cv", "stratified k-fold cross-validation");
  add_config(cv);
  cv->add_option("--data", data, "dataset directory or manifest path")->required();
  cv->add_option("--k", k, "fold count");
  cv->add_option("--out", out_dir, "output directory")->required();
  add_seed(cv);

  auto* ab = app.add_subcommand("ablate", "train and report one ablation variant");
  add_config(ab);
  ab->add_option("--data", data, "dataset directory or manifest path")->required();
  ab->add_option("--variant", variant, "full|no_vit|no_gnn|no_augmentation|no_bayesian")
      ->required();
  ab->add_option("--epochs", epochs_override, "override the epoch budget");
  ab->add_option("--out", out_dir, "output directory")->required();
  add_seed(ab);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      RunConfig rc = resolve_config(config_path, seed_set, seed_flag);
      if (synth->count("--n")) rc.cohort.n = n;
      if (synth->count("--size")) rc.cohort.image_size = size;
      if (synth->count("--visits")) rc.cohort.visits = visits;
      if (!priors.empty()) {
        std::istringstream ss(priors);
        std::string item;
        int i = 0;
        while (std::getline(ss, item, ',') && i < 5) {
          rc.cohort.class_priors[static_cast<size_t>(i++)] = std::stod(item);
        }
        if (i != 5) throw std::invalid_argument("--priors expects five values");
      }
      rc.validate();
      return cmd_synth(rc, out_dir);
    }
    if (prep->parsed()) {
      RunConfig rc = resolve_config(config_path, seed_set, seed_flag);
      return cmd_preprocess(rc, manifest, out_dir);
    }
    if (tr->parsed()) {
      RunConfig rc = resolve_config(config_path, seed_set, seed_flag);
      return cmd_train(rc, data, out_dir);
    }
    if (ev->parsed()) return cmd_evaluate(predictions, out_dir);
    if (pr->parsed()) {
      return cmd_predict(checkpoint, image, biomarkers, patient_id, meta,
                         saliency_path, out_path, seed_set, seed_flag);
    }
    if (cv->parsed()) {
      RunConfig rc = resolve_config(config_path, seed_set, seed_flag);
      return cmd_cv(rc, data, k, out_dir);
    }
    if (ab->parsed()) {
      RunConfig rc = resolve_config(config_path, seed_set, seed_flag);
      return cmd_ablate(rc, data, variant, epochs_override, out_dir);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "[tprs] validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[tprs] error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
