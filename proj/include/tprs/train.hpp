#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "tprs/data.hpp"
#include "tprs/loss.hpp"
#include "tprs/metrics.hpp"
#include "tprs/model.hpp"
#include "tprs/optim.hpp"
#include "tprs/preprocess.hpp"
#include "tprs/synth.hpp"

namespace tprs {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  int early_stop_patience = 5;
  double lr_reduce_factor = 0.5;
  int lr_reduce_patience = 3;
  std::array<double, 3> split = {0.70, 0.10, 0.20};  // train/val/test
  uint64_t seed = 0;
  bool augment = true;
  // Optional global multiplier on the base learning rate (the source lists a
  // separate 0.1 decay factor without defining its interaction with the
  // plateau rule; it stays off unless configured).
  double lr_global_multiplier = 1.0;
  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double lr = 0;        // rate used during this epoch
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::string stop_reason;  // "early_stop" | "max_epochs"
  double best_val_loss = 0;
  int best_epoch = 0;  // 1-based
};

// Plateau LR schedule + early stopping, driven by one validation loss per
// epoch. "Fails to improve" means no new best value; the LR counter resets on
// both improvement and reduction, the stop counter only on improvement.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, int lr_patience, int stop_patience);
  struct Decision {
    double lr;      // rate for the next epoch
    bool improved;
    bool reduced;
    bool stop;
  };
  Decision observe(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_, factor_, best_;
  int lr_patience_, stop_patience_;
  int lr_stale_ = 0, stop_stale_ = 0;
  bool seen_any_ = false;
};

// Largest-remainder per-class allocation: every class lands within one sample
// of its proportional share in each split. Classes with fewer than 3 members
// are rejected with advice to augment synthetically.
std::array<std::vector<int>, 3> stratified_split(
    const std::vector<int>& labels, const std::array<double, 3>& fractions,
    uint64_t seed);

// k stratified folds (round-robin per shuffled class). k must not exceed the
// smallest class count.
std::vector<std::vector<int>> stratified_kfold(const std::vector<int>& labels,
                                               int k, uint64_t seed);

struct TrainResult {
  TrainHistory history;
};

// Algorithm-1 loop: per batch CNN/ViT/GNN forward, cross-attention fusion,
// dual heads, focal+MSE loss, Adam step; per epoch validation with plateau LR
// halving and early stopping; the best-validation parameters are restored
// into the model on return.
TrainResult train(Model& model, const std::vector<PatientRecord>& records,
                  const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const OptimConfig& ocfg);

// Deterministic single-pass predictions for a set of records.
std::vector<PredictionRow> predict_rows(const Model& model,
                                        const std::vector<PatientRecord>& records,
                                        const std::vector<int>& idx);

struct CvFold {
  MetricsReport report;
  TrainHistory history;
};
struct CvResult {
  std::vector<CvFold> folds;
  std::map<std::string, std::pair<double, double>> aggregate;  // mean, std
};
CvResult cross_validate(const ModelConfig& mcfg,
                        const std::vector<PatientRecord>& records, int k,
                        const TrainConfig& tcfg, const LossConfig& lcfg,
                        const OptimConfig& ocfg);

struct AblateResult {
  AblationVariant variant = AblationVariant::kFull;
  int64_t param_count = 0;
  int fusion_in_width = 0;
  MetricsReport report;
  TrainHistory history;
};
// Rebuilds the architecture for the variant (branches removed, fusion width
// rebuilt), trains, and evaluates on the held-out split.
AblateResult ablate(const ModelConfig& base,
                    const std::vector<PatientRecord>& records,
                    AblationVariant variant, const TrainConfig& tcfg,
                    const LossConfig& lcfg, const OptimConfig& ocfg);

std::string history_csv(const TrainHistory& h);

}  // namespace tprs
