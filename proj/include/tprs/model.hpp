#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tprs/backbones.hpp"
#include "tprs/graph.hpp"
#include "tprs/image.hpp"
#include "tprs/ops.hpp"

namespace tprs {

enum class AblationVariant { kFull, kNoVit, kNoGnn, kNoAugmentation, kNoBayesian };

std::string variant_name(AblationVariant v);
AblationVariant variant_from_name(const std::string& name);

// Every architecture dimension in one place. Desk scale trains in minutes on
// a CPU; paper scale exists for symbolic shape checks and is not meant to be
// trained here.
struct ModelConfig {
  int image_size = 32;
  int image_channels = 3;
  std::vector<int> cnn_channels = {16, 24, 32};
  int cnn_grid = 4;
  int vit_patch = 8;
  int vit_dim = 32;
  int vit_depth = 2;
  int vit_heads = 4;
  double vit_mlp_ratio = 4.0;
  int gcn_hidden = 16;
  int gcn_layers = 3;
  int gnn_out = 64;
  int meta_dim = 2;
  int fusion_width = 512;
  int num_classes = 5;
  int cross_heads = 4;
  double dropout_rate = 0.3;
  double time_scale = 60.0;  // months used to normalize visit times
  int mc_samples = 50;
  AblationVariant variant = AblationVariant::kFull;

  static ModelConfig desk_scale();
  static ModelConfig paper_scale();

  CnnConfig cnn() const;
  VitConfig vit() const;
  void validate() const;
  bool has_vit() const { return variant != AblationVariant::kNoVit; }
  bool has_gnn() const { return variant != AblationVariant::kNoGnn; }
  bool bayesian() const { return variant != AblationVariant::kNoBayesian; }
  int fusion_in_width() const;
  int64_t param_count() const;  // closed form, works at paper scale

  std::string canonical_string() const;
  uint64_t hash() const;
};

// One subject as the model consumes it.
struct ModelInput {
  Tensor image;                    // [S,S,C], values in [0,1]
  TemporalGraph graph;
  std::vector<double> meta;        // min-max normalized, width meta_dim
};

enum class RiskTier { kLow, kMedium, kHigh };
std::string tier_name(RiskTier t);

// Per-patient MC stream, shared by the training pipeline and the predict
// command so both paths draw identical dropout masks for the same subject.
Rng mc_rng_for(uint64_t master_seed, const std::string& patient_id);

// low: r < 0.3, medium: 0.3 <= r <= 0.7, high: r > 0.7
RiskTier stratify_risk(double r);

struct McPrediction {
  std::vector<double> class_probs;  // mean over samples, sums to 1
  std::vector<double> class_sigma;  // per-class spread, for reporting
  int grade = 0;                    // argmax of mean probs
  double risk = 0.0;                // mean risk score in [0,1]
  double sigma = 0.0;               // population std of the risk samples
  double ci_lo = 0.0, ci_hi = 0.0;  // mean +/- 1.96 sigma / sqrt(K)
  RiskTier tier = RiskTier::kLow;
  int samples = 0;
  bool bayesian = true;             // false = single deterministic pass
};

// Reduce per-pass class probabilities and risk samples to an McPrediction:
// means over K passes, population std of the risk samples, and the interval
// mean +/- 1.96 sigma / sqrt(K).
McPrediction reduce_mc_samples(
    const std::vector<std::vector<double>>& prob_samples,
    const std::vector<double>& risk_samples);

// Channel-max |gradient| heat map, min-max normalized to [0,1].
FundusImage saliency_from_gradient(const std::vector<double>& grad, int size,
                                   int channels);

// [G,G,C] feature map -> [G*G, C]; row g*G+h is spatial cell (g,h)
Tensor flatten_cnn(const Tensor& f_cnn);

// Keys/values are the CNN rows projected C_cnn -> D (the equation feeds
// 2560-wide keys to 768-wide queries, so this projection is the minimal
// repair); queries are the ViT tokens. No residual around the block.
Tensor cross_attend(const Tensor& f_vit, const Tensor& f_cnn_flat,
                    const Tensor& kv_w, const Tensor& kv_b, int heads,
                    const AttentionParams& attn);

// concat then linear projection to the configured fusion width
Tensor fuse(const std::vector<Tensor>& parts, const Tensor& w, const Tensor& b);

class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  struct Output {
    Tensor class_logits;
    Tensor class_probs;
    Tensor risk_logit;
    Tensor risk;  // scalar in [0,1]
  };

  // One forward pass. When dropout_on, a fresh mask at the configured rate is
  // drawn on the fused vector (rng must then be non-null).
  Output forward(const ModelInput& in, bool dropout_on, Rng* rng) const;

  // Mean/spread over k stochastic passes (dropout kept active).
  McPrediction mc_predict(const ModelInput& in, int k, Rng& rng) const;
  // Single pass without dropout; used by the no_bayesian variant.
  McPrediction predict_deterministic(const ModelInput& in) const;

  // |d target / d pixel|, channel-max, min-max normalized to [0,1].
  // target_class in 0..C-1 selects a class logit; -1 selects the risk head.
  FundusImage saliency(const ModelInput& in, int target_class) const;

  std::vector<Tensor*> parameters();
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  int64_t actual_param_count();

 private:
  ModelConfig cfg_;
  CnnParams cnn_;
  VitParams vit_;           // unused for no_vit
  GcnParams gcn_;           // unused for no_gnn
  Tensor kv_w_, kv_b_;      // C_cnn -> D projection
  AttentionParams cross_;   // unused for no_vit
  Tensor fuse_w_, fuse_b_;
  Tensor cls_w_, cls_b_;
  Tensor risk_w_, risk_b_;

  Tensor fused_features(const ModelInput& in) const;
};

}  // namespace tprs
