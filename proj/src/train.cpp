#include "tprs/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"

namespace tprs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// inputs are rebuilt per epoch for augmented records, cached otherwise
struct SampleCache {
  ModelInput base;
  const PatientRecord* rec;
};

std::vector<double> snapshot(std::vector<Tensor*>& params) {
  std::vector<double> flat;
  for (Tensor* t : params)
    flat.insert(flat.end(), t->data().begin(), t->data().end());
  return flat;
}

void restore(std::vector<Tensor*>& params, const std::vector<double>& flat) {
  size_t off = 0;
  for (Tensor* t : params) {
    std::copy(flat.begin() + off, flat.begin() + off + t->data().size(),
              t->data().begin());
    off += t->data().size();
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || early_stop_patience < 1 ||
      lr_reduce_patience < 1) {
    throw std::invalid_argument("train config: counts must be positive");
  }
  if (!(lr_reduce_factor > 0 && lr_reduce_factor <= 1)) {
    throw std::invalid_argument("train config: lr factor must be in (0,1]");
  }
  const double s = split[0] + split[1] + split[2];
  if (std::fabs(s - 1.0) > 1e-9) {
    throw std::invalid_argument("train config: split fractions must sum to 1");
  }
  if (lr_global_multiplier <= 0) {
    throw std::invalid_argument("train config: lr multiplier must be positive");
  }
}

PlateauScheduler::PlateauScheduler(double lr0, double factor, int lr_patience,
                                   int stop_patience)
    : lr_(lr0),
      factor_(factor),
      best_(0.0),
      lr_patience_(lr_patience),
      stop_patience_(stop_patience) {}

PlateauScheduler::Decision PlateauScheduler::observe(double val_loss) {
  Decision d{lr_, false, false, false};
  if (!seen_any_ || val_loss < best_) {
    seen_any_ = true;
    best_ = val_loss;
    lr_stale_ = 0;
    stop_stale_ = 0;
    d.improved = true;
    d.lr = lr_;
    return d;
  }
  ++lr_stale_;
  ++stop_stale_;
  if (stop_stale_ >= stop_patience_) {
    d.stop = true;
  }
  if (lr_stale_ >= lr_patience_) {
    lr_ *= factor_;
    lr_stale_ = 0;
    d.reduced = true;
  }
  d.lr = lr_;
  return d;
}

std::array<std::vector<int>, 3> stratified_split(
    const std::vector<int>& labels, const std::array<double, 3>& fractions,
    uint64_t seed) {
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(fsum - 1.0) > 1e-9) {
    throw std::invalid_argument("stratified_split: fractions must sum to 1");
  }
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int>(i));

  Rng root(seed);
  std::array<std::vector<int>, 3> out;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 3) {
      throw std::invalid_argument(
          "stratified_split: class " + std::to_string(cls) + " has only " +
          std::to_string(idx.size()) +
          " members; augment the cohort (synthetic rebalancing) before splitting");
    }
    Rng rng = root.split(static_cast<uint64_t>(cls));
    for (size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int>(i) - 1))]);
    }
    // largest-remainder allocation across the three splits
    const double n = static_cast<double>(idx.size());
    std::array<int, 3> take{};
    std::array<double, 3> frac{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double target = fractions[static_cast<size_t>(s)] * n;
      take[static_cast<size_t>(s)] = static_cast<int>(std::floor(target));
      frac[static_cast<size_t>(s)] = target - take[static_cast<size_t>(s)];
      assigned += take[static_cast<size_t>(s)];
    }
    int leftover = static_cast<int>(idx.size()) - assigned;
    while (leftover > 0) {
      int bests = 0;
      for (int s = 1; s < 3; ++s) {
        if (frac[static_cast<size_t>(s)] > frac[static_cast<size_t>(bests)]) bests = s;
      }
      take[static_cast<size_t>(bests)] += 1;
      frac[static_cast<size_t>(bests)] = -1;
      --leftover;
    }
    size_t off = 0;
    for (int s = 0; s < 3; ++s) {
      for (int t = 0; t < take[static_cast<size_t>(s)]; ++t)
        out[static_cast<size_t>(s)].push_back(idx[off++]);
    }
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

std::vector<std::vector<int>> stratified_kfold(const std::vector<int>& labels,
                                               int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int>(i));

  Rng root(seed);
  std::vector<std::vector<int>> folds(static_cast<size_t>(k));
  for (auto& [cls, idx] : by_class) {
    if (static_cast<int>(idx.size()) < k) {
      throw std::invalid_argument("stratified_kfold: class " +
                                  std::to_string(cls) + " has fewer than k=" +
                                  std::to_string(k) + " members");
    }
    Rng rng = root.split(static_cast<uint64_t>(cls));
    for (size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int>(i) - 1))]);
    }
    for (size_t i = 0; i < idx.size(); ++i) {
      folds[i % static_cast<size_t>(k)].push_back(idx[i]);
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

TrainResult train(Model& model, const std::vector<PatientRecord>& records,
                  const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const OptimConfig& ocfg) {
  tcfg.validate();
  lcfg.validate();
  ocfg.validate();
  if (train_idx.empty() || val_idx.empty()) {
    throw std::invalid_argument("train: empty train or validation split");
  }

  const ModelConfig& mcfg = model.config();
  const bool augment_on =
      tcfg.augment && mcfg.variant != AblationVariant::kNoAugmentation;
  PreprocessConfig pcfg;
  pcfg.target_size = mcfg.image_size;

  // graphs and metadata never change; images may be re-augmented per epoch
  std::map<int, SampleCache> cache;
  for (int i : train_idx) cache[i] = {make_input(records[static_cast<size_t>(i)], mcfg),
                                      &records[static_cast<size_t>(i)]};
  for (int i : val_idx) cache[i] = {make_input(records[static_cast<size_t>(i)], mcfg),
                                    &records[static_cast<size_t>(i)]};

  auto params = model.parameters();
  AdamState state;
  Rng root(tcfg.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");
  Rng augment_rng = root.split("augment");

  PlateauScheduler sched(ocfg.learning_rate * tcfg.lr_global_multiplier,
                         tcfg.lr_reduce_factor, tcfg.lr_reduce_patience,
                         tcfg.early_stop_patience);

  TrainResult result;
  result.history.stop_reason = "max_epochs";
  std::vector<double> best_params = snapshot(params);
  double lr_now = sched.lr();

  std::vector<int> order(train_idx);
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = Clock::now();

    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(
                    0, static_cast<int>(i) - 1))]);
    }

    double train_loss_sum = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tcfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
      std::vector<SamplePrediction> preds;
      preds.reserve(end - start);
      for (size_t b = start; b < end; ++b) {
        const int idx = order[b];
        SampleCache& sc = cache[idx];
        ModelInput in = sc.base;
        if (augment_on) {
          Rng arng = augment_rng.split(static_cast<uint64_t>(epoch))
                         .split(static_cast<uint64_t>(idx));
          FundusImage img = *sc.rec->image;
          if (img.width != mcfg.image_size) img = resize(img, mcfg.image_size);
          in.image = image_to_tensor(augment(img, arng, pcfg));
        }
        auto out = model.forward(in, true, &dropout_rng);
        SamplePrediction sp;
        sp.probs = out.class_probs;
        sp.risk = out.risk;
        sp.label = sc.rec->grade;
        sp.risk_target = sc.rec->risk;
        sp.has_risk = sc.rec->has_risk;
        preds.push_back(std::move(sp));
      }
      Tensor loss = total_loss(preds, lcfg);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train: non-finite loss in epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batches));
      }
      zero_grads(params);
      loss.backward();
      adam_step(params, state, ocfg, lr_now);
      train_loss_sum += lv;
      ++batches;
    }

    // validation pass, dropout off
    double val_loss = 0;
    int correct = 0;
    {
      std::vector<SamplePrediction> preds;
      preds.reserve(val_idx.size());
      for (int idx : val_idx) {
        SampleCache& sc = cache[idx];
        auto out = model.forward(sc.base, false, nullptr);
        int argmax = 0;
        for (int c = 1; c < mcfg.num_classes; ++c) {
          if (out.class_probs(c) > out.class_probs(argmax)) argmax = c;
        }
        if (argmax == sc.rec->grade) ++correct;
        SamplePrediction sp;
        sp.probs = out.class_probs;
        sp.risk = out.risk;
        sp.label = sc.rec->grade;
        sp.risk_target = sc.rec->risk;
        sp.has_risk = sc.rec->has_risk;
        preds.push_back(std::move(sp));
      }
      val_loss = total_loss(preds, lcfg).item();
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = train_loss_sum / std::max(1, batches);
    es.val_loss = val_loss;
    es.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_idx.size());
    es.lr = lr_now;
    es.seconds = seconds_since(t0);
    result.history.epochs.push_back(es);

    auto decision = sched.observe(val_loss);
    if (decision.improved) {
      best_params = snapshot(params);
      result.history.best_val_loss = val_loss;
      result.history.best_epoch = epoch;
    }
    if (decision.stop) {
      result.history.stop_reason = "early_stop";
      break;
    }
    lr_now = decision.lr;
  }

  restore(params, best_params);
  return result;
}

std::vector<PredictionRow> predict_rows(const Model& model,
                                        const std::vector<PatientRecord>& records,
                                        const std::vector<int>& idx) {
  std::vector<PredictionRow> rows;
  rows.reserve(idx.size());
  for (int i : idx) {
    const PatientRecord& rec = records[static_cast<size_t>(i)];
    ModelInput in = make_input(rec, model.config());
    McPrediction p = model.predict_deterministic(in);
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

namespace {

void accumulate_metric(std::map<std::string, std::vector<double>>& acc,
                       const MetricsReport& r) {
  acc["accuracy"].push_back(r.accuracy);
  acc["qwk"].push_back(r.qwk);
  acc["sensitivity"].push_back(r.sensitivity);
  acc["specificity"].push_back(r.specificity);
  acc["f1"].push_back(r.f1);
  acc["mcc"].push_back(r.mcc);
  acc["cohen_kappa"].push_back(r.cohen_kappa);
  acc["auc_roc"].push_back(r.auc_roc);
  acc["pr_auc"].push_back(r.pr_auc);
  acc["brier"].push_back(r.brier);
  if (r.has_c_index) acc["c_index"].push_back(r.c_index);
}

}  // namespace

CvResult cross_validate(const ModelConfig& mcfg,
                        const std::vector<PatientRecord>& records, int k,
                        const TrainConfig& tcfg, const LossConfig& lcfg,
                        const OptimConfig& ocfg) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.grade);
  const auto folds = stratified_kfold(labels, k, tcfg.seed);

  CvResult cv;
  std::map<std::string, std::vector<double>> acc;
  Rng seed_family(tcfg.seed);
  for (int f = 0; f < k; ++f) {
    std::vector<int> rest;
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      rest.insert(rest.end(), folds[static_cast<size_t>(g)].begin(),
                  folds[static_cast<size_t>(g)].end());
    }
    // inner split of the training portion for early stopping
    std::vector<int> rest_labels;
    rest_labels.reserve(rest.size());
    for (int i : rest) rest_labels.push_back(records[static_cast<size_t>(i)].grade);
    auto inner = stratified_split(rest_labels, {0.875, 0.125, 0.0},
                                  seed_family.split("inner").split(
                                      static_cast<uint64_t>(f)).next_u64());
    std::vector<int> train_idx, val_idx;
    for (int i : inner[0]) train_idx.push_back(rest[static_cast<size_t>(i)]);
    for (int i : inner[1]) val_idx.push_back(rest[static_cast<size_t>(i)]);

    Model model(mcfg, seed_family.split("init").split(static_cast<uint64_t>(f))
                    .next_u64());
    TrainConfig fold_cfg = tcfg;
    fold_cfg.seed = seed_family.split("train").split(static_cast<uint64_t>(f))
                        .next_u64();
    CvFold fold;
    fold.history = train(model, records, train_idx, val_idx, fold_cfg, lcfg,
                         ocfg).history;
    fold.report = compute_report(
        predict_rows(model, records, folds[static_cast<size_t>(f)]),
        mcfg.num_classes);
    accumulate_metric(acc, fold.report);
    cv.folds.push_back(std::move(fold));
  }

  for (auto& [name, values] : acc) {
    double mu = 0;
    for (double v : values) mu += v;
    mu /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mu) * (v - mu);
    const double sd =
        values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1))
                          : 0.0;
    cv.aggregate[name] = {mu, sd};
  }
  return cv;
}

AblateResult ablate(const ModelConfig& base,
                    const std::vector<PatientRecord>& records,
                    AblationVariant variant, const TrainConfig& tcfg,
                    const LossConfig& lcfg, const OptimConfig& ocfg) {
  ModelConfig mcfg = base;
  mcfg.variant = variant;

  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.grade);
  auto splits = stratified_split(labels, tcfg.split, tcfg.seed);

  Model model(mcfg, Rng(tcfg.seed).split("ablate-init").next_u64());
  AblateResult out;
  out.variant = variant;
  out.param_count = mcfg.param_count();
  out.fusion_in_width = mcfg.fusion_in_width();
  out.history =
      train(model, records, splits[0], splits[1], tcfg, lcfg, ocfg).history;
  out.report =
      compute_report(predict_rows(model, records, splits[2]), mcfg.num_classes);
  return out;
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_acc,lr\n";
  for (const auto& e : h.epochs) {
    os << e.epoch << "," << format_double(e.train_loss) << ","
       << format_double(e.val_loss) << "," << format_double(e.val_accuracy)
       << "," << format_double(e.lr) << "\n";
  }
  return os.str();
}

}  // namespace tprs
