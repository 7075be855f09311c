#pragma once

#include <string>

#include "tprs/loss.hpp"
#include "tprs/model.hpp"
#include "tprs/optim.hpp"
#include "tprs/preprocess.hpp"
#include "tprs/synth.hpp"
#include "tprs/train.hpp"

namespace tprs {

// Everything a run needs, validated before any work starts. Two presets:
// "desk-scale" (default, trains in minutes) and "paper-scale" (full Table-1
// dimensions; shape checks only, training it here is impractical).
struct RunConfig {
  std::string preset = "desk-scale";
  ModelConfig model;
  PreprocessConfig preprocess;
  TrainConfig train;
  LossConfig loss;
  OptimConfig optim;
  CohortConfig cohort;
  uint64_t seed = 0;
  void validate() const;
};

RunConfig default_run_config(const std::string& preset = "desk-scale");

// Flat sectioned key=value text or a JSON object, interchangeable. Unknown
// sections or keys are rejected.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin);

// TPRS_SEED overrides the configured seed when set.
void apply_env_seed(RunConfig& rc);

// machine-parseable key=value tail for log lines
std::string run_config_summary(const RunConfig& rc);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json_text(const std::string& text);

}  // namespace tprs
