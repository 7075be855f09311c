#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "tprs/gradcheck.hpp"
#include "tprs/ops.hpp"
#include "tprs/train.hpp"

using namespace tprs;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.image_size = 16;
  c.cnn_channels = {8, 16};
  c.cnn_grid = 4;
  c.vit_patch = 4;
  c.vit_dim = 16;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.gcn_hidden = 8;
  c.gcn_layers = 2;
  c.fusion_width = 32;
  c.cross_heads = 2;
  return c;
}

std::vector<PatientRecord> small_cohort(int n, uint64_t seed) {
  CohortConfig cc;
  cc.n = n;
  cc.seed = seed;
  cc.image_size = 16;
  cc.class_priors = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0};
  cc.visits = 3;
  return gen_cohort(cc);
}

}  // namespace

TEST_CASE("focal loss values") {
  LossConfig cfg;

  SUBCASE("perfect confidence costs nothing") {
    Tensor probs = Tensor::from_data({5}, {0, 0, 1, 0, 0});
    CHECK(focal_loss(probs, 2, cfg).item() == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("gamma 0 with unit alpha reduces to cross-entropy") {
    LossConfig ce;
    ce.alpha = {1, 1, 1, 1, 1};
    ce.gamma = 0.0;
    Tensor probs = Tensor::from_data({5}, {0.1, 0.4, 0.2, 0.2, 0.1});
    CHECK(focal_loss(probs, 1, ce).item() ==
          doctest::Approx(-std::log(0.4)).epsilon(1e-12));
  }

  SUBCASE("hand fixture 0.25 * (1-0.9)^2 * -ln(0.9)") {
    Tensor probs = Tensor::from_data({5}, {0.02, 0.9, 0.02, 0.03, 0.03});
    const double got = focal_loss(probs, 1, cfg).item();
    CHECK(std::fabs(got - 0.25 * 0.01 * (-std::log(0.9))) < 1e-9);
    CHECK(std::fabs(got - 2.634e-4) < 1e-6);
  }

  SUBCASE("zero probability is clamped, loss stays finite and non-negative") {
    Tensor probs = Tensor::from_data({5}, {1.0, 0.0, 0.0, 0.0, 0.0});
    const double got = focal_loss(probs, 1, cfg).item();
    CHECK(std::isfinite(got));
    CHECK(got >= 0.0);
  }

  SUBCASE("monotonically decreasing in the true-class probability") {
    double prev = 1e18;
    for (double p : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95, 0.999}) {
      Tensor probs = Tensor::from_data({5}, {1 - p, p, 0, 0, 0});
      const double v = focal_loss(probs, 1, cfg).item();
      CHECK(v >= 0.0);
      CHECK(v < prev);
      prev = v;
    }
  }

  SUBCASE("gradient flows through the focal term") {
    Rng rng(3);
    Tensor logits = init_normal({5}, 1.0, rng).detach();
    auto f = [&](const Tensor& t) { return focal_loss(softmax(t), 3, cfg); };
    CHECK(grad_check(f, logits) < 1e-6);
  }

  SUBCASE("bad class index rejected") {
    Tensor probs = Tensor::from_data({5}, {0.2, 0.2, 0.2, 0.2, 0.2});
    CHECK_THROWS_AS(focal_loss(probs, 7, cfg), std::invalid_argument);
  }
}

TEST_CASE("total loss composition") {
  LossConfig cfg;

  SUBCASE("perfect predictions vanish") {
    SamplePrediction s;
    s.probs = Tensor::from_data({5}, {0, 0, 0, 1, 0});
    s.risk = Tensor::scalar(0.6);
    s.label = 3;
    s.risk_target = 0.6;
    s.has_risk = true;
    CHECK(total_loss({s}, cfg).item() == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("risk equality leaves only the focal mean") {
    std::vector<SamplePrediction> batch(2);
    batch[0].probs = Tensor::from_data({5}, {0.7, 0.1, 0.1, 0.05, 0.05});
    batch[0].risk = Tensor::scalar(0.3);
    batch[0].label = 0;
    batch[0].risk_target = 0.3;
    batch[0].has_risk = true;
    batch[1].probs = Tensor::from_data({5}, {0.2, 0.5, 0.1, 0.1, 0.1});
    batch[1].risk = Tensor::scalar(0.8);
    batch[1].label = 1;
    batch[1].risk_target = 0.8;
    batch[1].has_risk = true;
    const double focal_mean =
        (focal_loss(batch[0].probs, 0, cfg).item() +
         focal_loss(batch[1].probs, 1, cfg).item()) /
        2.0;
    CHECK(total_loss(batch, cfg).item() == doctest::Approx(focal_mean).epsilon(1e-12));
  }

  SUBCASE("hand sum: focal 0.1 plus half of squared error 0.04") {
    LossConfig ce;
    ce.alpha = {1, 1, 1, 1, 1};
    ce.gamma = 0.0;
    const double p = std::exp(-0.1);  // focal becomes exactly 0.1
    SamplePrediction s;
    s.probs = Tensor::from_data({5}, {p, 1 - p, 0, 0, 0});
    s.risk = Tensor::scalar(0.5);
    s.label = 0;
    s.risk_target = 0.7;  // (r - r_hat)^2 = 0.04
    s.has_risk = true;
    CHECK(total_loss({s}, ce).item() == doctest::Approx(0.12).epsilon(1e-12));
  }

  SUBCASE("size mismatch and empty batch rejected") {
    CHECK_THROWS_AS(total_loss({}, cfg), std::invalid_argument);
  }
}

TEST_CASE("plateau scheduler drives the documented LR sequence") {
  PlateauScheduler s(0.001, 0.5, 3, 5);

  // improving epochs keep the rate
  auto d = s.observe(1.0);
  CHECK(d.improved);
  CHECK(d.lr == doctest::Approx(0.001));
  d = s.observe(0.9);
  CHECK(d.improved);

  // three stagnant epochs halve the rate
  d = s.observe(0.95);
  CHECK_FALSE(d.improved);
  CHECK(d.lr == doctest::Approx(0.001));
  d = s.observe(0.95);
  CHECK(d.lr == doctest::Approx(0.001));
  d = s.observe(0.95);
  CHECK(d.reduced);
  CHECK(d.lr == doctest::Approx(0.0005));

  // an improvement resets both counters
  d = s.observe(0.5);
  CHECK(d.improved);

  // three more stagnant epochs reach 0.00025
  s.observe(0.6);
  s.observe(0.6);
  d = s.observe(0.6);
  CHECK(d.reduced);
  CHECK(d.lr == doctest::Approx(0.00025));

  // early stop after exactly five consecutive non-improving epochs
  PlateauScheduler t(0.001, 0.5, 3, 5);
  t.observe(1.0);
  for (int i = 0; i < 4; ++i) {
    auto dec = t.observe(2.0);
    CHECK_FALSE(dec.stop);
  }
  auto dec = t.observe(2.0);
  CHECK(dec.stop);
}

TEST_CASE("stratified split proportions and determinism") {
  SUBCASE("100 samples split 50/30/20") {
    std::vector<int> labels;
    for (int i = 0; i < 50; ++i) labels.push_back(0);
    for (int i = 0; i < 30; ++i) labels.push_back(1);
    for (int i = 0; i < 20; ++i) labels.push_back(2);
    auto s = stratified_split(labels, {0.7, 0.1, 0.2}, 42);

    auto count = [&](const std::vector<int>& idx, int cls) {
      int c = 0;
      for (int i : idx) c += labels[static_cast<size_t>(i)] == cls;
      return c;
    };
    CHECK(std::abs(count(s[0], 0) - 35) <= 1);
    CHECK(std::abs(count(s[0], 1) - 21) <= 1);
    CHECK(std::abs(count(s[0], 2) - 14) <= 1);
    CHECK(s[0].size() + s[1].size() + s[2].size() == 100);

    // disjoint and exhaustive
    std::set<int> seen;
    for (const auto& part : s)
      for (int i : part) CHECK(seen.insert(i).second);
    CHECK(seen.size() == 100);

    auto again = stratified_split(labels, {0.7, 0.1, 0.2}, 42);
    CHECK(again[0] == s[0]);
    CHECK(again[1] == s[1]);
    CHECK(again[2] == s[2]);

    auto other = stratified_split(labels, {0.7, 0.1, 0.2}, 43);
    CHECK(other[0] != s[0]);
  }

  SUBCASE("single-class dataset still splits 70/10/20") {
    std::vector<int> labels(10, 3);
    auto s = stratified_split(labels, {0.7, 0.1, 0.2}, 1);
    CHECK(s[0].size() == 7);
    CHECK(s[1].size() == 1);
    CHECK(s[2].size() == 2);
  }

  SUBCASE("a class below three members is rejected with advice") {
    std::vector<int> labels = {0, 0, 0, 1, 1};
    CHECK_THROWS_WITH_AS(stratified_split(labels, {0.7, 0.1, 0.2}, 1),
                         doctest::Contains("synthetic"), std::invalid_argument);
  }
}

TEST_CASE("stratified k-fold") {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 2 ? (i % 3 == 0 ? 1 : 0) : 2);
  auto folds = stratified_kfold(labels, 5, 7);
  CHECK(folds.size() == 5);
  size_t total = 0;
  for (const auto& f : folds) {
    total += f.size();
    CHECK(std::abs(static_cast<int>(f.size()) - 20) <= 2);
  }
  CHECK(total == 100);

  // proportionality within one sample per class
  for (int cls : {0, 1, 2}) {
    int n_cls = 0;
    for (int l : labels) n_cls += l == cls;
    for (const auto& f : folds) {
      int in_fold = 0;
      for (int i : f) in_fold += labels[static_cast<size_t>(i)] == cls;
      CHECK(std::fabs(in_fold - n_cls / 5.0) <= 1.0);
    }
  }

  auto again = stratified_kfold(labels, 5, 7);
  for (int f = 0; f < 5; ++f) CHECK(again[f] == folds[f]);

  std::vector<int> sparse = {0, 0, 0, 0, 1, 1};
  CHECK_THROWS_AS(stratified_kfold(sparse, 5, 1), std::invalid_argument);
}

TEST_CASE("training loop learns a small separable cohort") {
  auto records = small_cohort(60, 99);
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.grade);
  auto splits = stratified_split(labels, {0.7, 0.15, 0.15}, 5);

  ModelConfig mcfg = small_config();
  Model model(mcfg, 11);
  TrainConfig tcfg;
  tcfg.epochs = 12;
  tcfg.batch_size = 16;
  tcfg.seed = 5;
  LossConfig lcfg;
  OptimConfig ocfg;

  auto result = train(model, records, splits[0], splits[1], tcfg, lcfg, ocfg);
  REQUIRE_FALSE(result.history.epochs.empty());
  CHECK(result.history.epochs.size() <= 12);

  // learning rates never increase and reductions are exact halvings
  for (size_t i = 1; i < result.history.epochs.size(); ++i) {
    const double prev = result.history.epochs[i - 1].lr;
    const double cur = result.history.epochs[i].lr;
    CHECK(cur <= prev + 1e-15);
    if (cur < prev) CHECK(cur == doctest::Approx(prev * 0.5));
  }

  // the loop actually learns: training loss drops from the first epoch
  CHECK(result.history.epochs.back().train_loss <
        result.history.epochs.front().train_loss);

  auto rows = predict_rows(model, records, splits[0]);
  int correct = 0;
  for (const auto& r : rows) correct += r.pred_grade == r.true_grade;
  CHECK(static_cast<double>(correct) / rows.size() > 0.5);
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto records = small_cohort(36, 123);
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.grade);
  auto splits = stratified_split(labels, {0.7, 0.15, 0.15}, 9);

  ModelConfig mcfg = small_config();
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 8;
  tcfg.seed = 77;
  LossConfig lcfg;
  OptimConfig ocfg;

  Model a(mcfg, 13), b(mcfg, 13);
  auto ra = train(a, records, splits[0], splits[1], tcfg, lcfg, ocfg);
  auto rb = train(b, records, splits[0], splits[1], tcfg, lcfg, ocfg);
  REQUIRE(ra.history.epochs.size() == rb.history.epochs.size());
  for (size_t i = 0; i < ra.history.epochs.size(); ++i) {
    CHECK(ra.history.epochs[i].train_loss == rb.history.epochs[i].train_loss);
    CHECK(ra.history.epochs[i].val_loss == rb.history.epochs[i].val_loss);
  }
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data() == pb[i]->data());
}

TEST_CASE("one step with zero learning rate leaves parameters unchanged") {
  Tensor p = Tensor::from_data({3}, {0.5, -0.25, 1.5}, true);
  Tensor loss = sum(mul(p, p));
  loss.backward();
  std::vector<Tensor*> params{&p};
  AdamState st;
  OptimConfig ocfg;
  adam_step(params, st, ocfg, 0.0);
  CHECK(p(0) == 0.5);
  CHECK(p(1) == -0.25);
  CHECK(p(2) == 1.5);
}

TEST_CASE("cross validation aggregates per-fold metrics") {
  auto records = small_cohort(50, 321);
  ModelConfig mcfg = small_config();
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 16;
  tcfg.seed = 2;
  LossConfig lcfg;
  OptimConfig ocfg;

  auto cv = cross_validate(mcfg, records, 3, tcfg, lcfg, ocfg);
  CHECK(cv.folds.size() == 3);
  REQUIRE(cv.aggregate.count("accuracy") == 1);
  auto [mu, sd] = cv.aggregate.at("accuracy");
  CHECK(mu >= 0.0);
  CHECK(mu <= 1.0);
  CHECK(sd >= 0.0);

  // identical seeds give identical fold assignment
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.grade);
  auto f1 = stratified_kfold(labels, 3, tcfg.seed);
  auto f2 = stratified_kfold(labels, 3, tcfg.seed);
  for (int i = 0; i < 3; ++i) CHECK(f1[i] == f2[i]);
}

TEST_CASE("ablation harness rebuilds variants") {
  auto records = small_cohort(45, 555);
  ModelConfig mcfg = small_config();
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 16;
  tcfg.seed = 3;
  tcfg.split = {0.6, 0.2, 0.2};
  LossConfig lcfg;
  OptimConfig ocfg;

  auto full = ablate(mcfg, records, AblationVariant::kFull, tcfg, lcfg, ocfg);
  auto no_gnn = ablate(mcfg, records, AblationVariant::kNoGnn, tcfg, lcfg, ocfg);
  auto no_vit = ablate(mcfg, records, AblationVariant::kNoVit, tcfg, lcfg, ocfg);

  CHECK(full.fusion_in_width - no_gnn.fusion_in_width == 64);
  CHECK(no_vit.param_count < full.param_count);
  CHECK(full.report.n > 0);
  CHECK(no_gnn.report.n == full.report.n);
  CHECK(full.history.epochs.size() == 1);
}

TEST_CASE("history csv shape") {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.6, 0.7, 0.001, 0.2});
  h.epochs.push_back({2, 0.4, 0.55, 0.75, 0.001, 0.2});
  const std::string csv = history_csv(h);
  CHECK(csv.find("epoch,train_loss,val_loss,val_acc,lr\n") == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
  CHECK(csv.find("\n2,") != std::string::npos);
}
