#include "tprs/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tprs {

std::string variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kNoVit: return "no_vit";
    case AblationVariant::kNoGnn: return "no_gnn";
    case AblationVariant::kNoAugmentation: return "no_augmentation";
    case AblationVariant::kNoBayesian: return "no_bayesian";
  }
  throw std::logic_error("unknown variant");
}

AblationVariant variant_from_name(const std::string& name) {
  if (name == "full") return AblationVariant::kFull;
  if (name == "no_vit") return AblationVariant::kNoVit;
  if (name == "no_gnn") return AblationVariant::kNoGnn;
  if (name == "no_augmentation") return AblationVariant::kNoAugmentation;
  if (name == "no_bayesian") return AblationVariant::kNoBayesian;
  throw std::invalid_argument("unknown ablation variant: " + name);
}

ModelConfig ModelConfig::desk_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.image_size = 224;
  c.cnn_channels = {64, 128, 256, 512, 2560};  // five stride-2 stages: 224 -> 7
  c.cnn_grid = 7;
  c.vit_patch = 16;  // (224/16)^2 = 196 patches
  c.vit_dim = 768;
  c.vit_depth = 12;
  c.vit_heads = 12;
  c.gcn_hidden = 64;
  c.fusion_width = 512;
  c.cross_heads = 8;
  return c;
}

CnnConfig ModelConfig::cnn() const {
  CnnConfig c;
  c.input_size = image_size;
  c.input_channels = image_channels;
  c.stage_channels = cnn_channels;
  c.output_grid = cnn_grid;
  return c;
}

VitConfig ModelConfig::vit() const {
  VitConfig v;
  v.image_size = image_size;
  v.image_channels = image_channels;
  v.patch_size = vit_patch;
  v.embed_dim = vit_dim;
  v.depth = vit_depth;
  v.heads = vit_heads;
  v.mlp_ratio = vit_mlp_ratio;
  return v;
}

void ModelConfig::validate() const {
  cnn().validate();
  vit().validate();
  if (gcn_hidden <= 0 || gcn_layers <= 0 || gnn_out <= 0 || meta_dim < 0 ||
      fusion_width <= 0 || num_classes < 2 || mc_samples < 1) {
    throw std::invalid_argument("model config: bad dimensions");
  }
  if (vit_dim % cross_heads != 0) {
    throw std::invalid_argument("model config: vit_dim not divisible by cross_heads");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("model config: dropout rate must be in [0,1)");
  }
  if (time_scale <= 0) {
    throw std::invalid_argument("model config: time scale must be positive");
  }
}

int ModelConfig::fusion_in_width() const {
  int w = vit_dim + meta_dim;  // no_vit pools the projected CNN rows, also D wide
  if (has_gnn()) w += gnn_out;
  return w;
}

int64_t ModelConfig::param_count() const {
  validate();
  int64_t total = cnn_param_count(cnn());
  const int64_t d = vit_dim, c = cnn_channels.back();
  total += c * d + d;  // kv projection
  if (has_vit()) {
    total += vit_param_count(vit());
    total += 4 * (d * d + d);  // cross-attention projections
  }
  if (has_gnn()) {
    total += gcn_param_count(TemporalGraph::feature_dim(), gcn_hidden,
                             gcn_layers, gnn_out);
  }
  const int64_t fw = fusion_width, fin = fusion_in_width();
  total += fin * fw + fw;                 // fusion projection
  total += fw * num_classes + num_classes;  // classifier head
  total += fw + 1;                          // risk head
  return total;
}

std::string ModelConfig::canonical_string() const {
  std::ostringstream os;
  os << "image_size=" << image_size << ";image_channels=" << image_channels
     << ";cnn_channels=";
  for (size_t i = 0; i < cnn_channels.size(); ++i)
    os << (i ? "," : "") << cnn_channels[i];
  os << ";cnn_grid=" << cnn_grid << ";vit_patch=" << vit_patch
     << ";vit_dim=" << vit_dim << ";vit_depth=" << vit_depth
     << ";vit_heads=" << vit_heads << ";vit_mlp_ratio=" << vit_mlp_ratio
     << ";gcn_hidden=" << gcn_hidden << ";gcn_layers=" << gcn_layers
     << ";gnn_out=" << gnn_out << ";meta_dim=" << meta_dim
     << ";fusion_width=" << fusion_width << ";num_classes=" << num_classes
     << ";cross_heads=" << cross_heads << ";dropout=" << dropout_rate
     << ";time_scale=" << time_scale << ";mc_samples=" << mc_samples
     << ";variant=" << variant_name(variant);
  return os.str();
}

uint64_t ModelConfig::hash() const { return fnv1a64(canonical_string()); }

std::string tier_name(RiskTier t) {
  switch (t) {
    case RiskTier::kLow: return "low";
    case RiskTier::kMedium: return "medium";
    case RiskTier::kHigh: return "high";
  }
  throw std::logic_error("unknown tier");
}

Rng mc_rng_for(uint64_t master_seed, const std::string& patient_id) {
  return Rng(master_seed).split("mc").split(patient_id);
}

RiskTier stratify_risk(double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument("stratify_risk: r must be in [0,1]");
  }
  if (r < 0.3) return RiskTier::kLow;
  if (r <= 0.7) return RiskTier::kMedium;
  return RiskTier::kHigh;
}

Tensor flatten_cnn(const Tensor& f_cnn) {
  if (f_cnn.rank() != 3) {
    throw std::invalid_argument("flatten_cnn: [G,G,C] feature map expected");
  }
  const int g = f_cnn.dim(0), c = f_cnn.dim(2);
  if (f_cnn.dim(1) != g) {
    throw std::invalid_argument("flatten_cnn: non-square grid");
  }
  return reshape(f_cnn, {g * g, c});
}

Tensor cross_attend(const Tensor& f_vit, const Tensor& f_cnn_flat,
                    const Tensor& kv_w, const Tensor& kv_b, int heads,
                    const AttentionParams& attn) {
  Tensor kv = linear(f_cnn_flat, kv_w, kv_b);
  return multi_head_attention(f_vit, kv, kv, heads, attn);
}

Tensor fuse(const std::vector<Tensor>& parts, const Tensor& w, const Tensor& b) {
  return linear(concat_vec(parts), w, b);
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng root(seed);
  Rng cnn_rng = root.split("cnn");
  Rng vit_rng = root.split("vit");
  Rng gcn_rng = root.split("gcn");
  Rng fus_rng = root.split("fusion");

  cnn_ = CnnParams::init(cfg_.cnn(), cnn_rng);
  if (cfg_.has_vit()) {
    vit_ = VitParams::init(cfg_.vit(), vit_rng);
    cross_ = AttentionParams::init(cfg_.vit_dim, fus_rng);
  }
  if (cfg_.has_gnn()) {
    gcn_ = GcnParams::init(TemporalGraph::feature_dim(), cfg_.gcn_hidden,
                           cfg_.gcn_layers, cfg_.gnn_out, gcn_rng);
  }
  const int c = cfg_.cnn_channels.back();
  kv_w_ = init_uniform_fanin({c, cfg_.vit_dim}, c, fus_rng);
  kv_b_ = Tensor::zeros({cfg_.vit_dim}, true);
  const int fin = cfg_.fusion_in_width();
  fuse_w_ = init_uniform_fanin({fin, cfg_.fusion_width}, fin, fus_rng);
  fuse_b_ = Tensor::zeros({cfg_.fusion_width}, true);
  cls_w_ = init_uniform_fanin({cfg_.fusion_width, cfg_.num_classes},
                              cfg_.fusion_width, fus_rng);
  cls_b_ = Tensor::zeros({cfg_.num_classes}, true);
  risk_w_ = init_uniform_fanin({cfg_.fusion_width, 1}, cfg_.fusion_width, fus_rng);
  risk_b_ = Tensor::zeros({1}, true);
}

Tensor Model::fused_features(const ModelInput& in) const {
  if (static_cast<int>(in.meta.size()) != cfg_.meta_dim) {
    throw std::invalid_argument("model: metadata width mismatch");
  }
  Tensor f_cnn = cnn_extract(in.image, cfg_.cnn(), cnn_);
  Tensor cnn_flat = flatten_cnn(f_cnn);

  Tensor a0;
  if (cfg_.has_vit()) {
    Tensor tokens = patch_embed(in.image, cfg_.vit(), vit_.embed);
    Tensor f_vit = transformer_encode(tokens, cfg_.vit(), vit_);
    Tensor across =
        cross_attend(f_vit, cnn_flat, kv_w_, kv_b_, cfg_.cross_heads, cross_);
    a0 = row(across, 0);
  } else {
    // ablation: mean-pooled projected CNN features stand in for A_cross[0]
    a0 = mean_rows(linear(cnn_flat, kv_w_, kv_b_));
  }

  std::vector<Tensor> parts{a0};
  if (cfg_.has_gnn()) {
    parts.push_back(readout(gcn_forward(in.graph, gcn_), gcn_));
  }
  parts.push_back(Tensor::from_data({cfg_.meta_dim}, in.meta));
  return fuse(parts, fuse_w_, fuse_b_);
}

Model::Output Model::forward(const ModelInput& in, bool dropout_on,
                             Rng* rng) const {
  Tensor fused = fused_features(in);
  if (dropout_on) {
    if (rng == nullptr) {
      throw std::invalid_argument("model: dropout_on requires an rng");
    }
    fused = dropout(fused, cfg_.dropout_rate, DropoutMode::kTrain, *rng);
  }
  Output out;
  out.class_logits = linear(fused, cls_w_, cls_b_);
  out.class_probs = softmax(out.class_logits);
  out.risk_logit = linear(fused, risk_w_, risk_b_);
  out.risk = sigmoid(out.risk_logit);
  return out;
}

McPrediction reduce_mc_samples(
    const std::vector<std::vector<double>>& prob_samples,
    const std::vector<double>& risk_samples) {
  const int k = static_cast<int>(risk_samples.size());
  if (k < 2 || prob_samples.size() != risk_samples.size()) {
    throw std::invalid_argument("reduce_mc_samples: at least 2 aligned samples");
  }
  const int c = static_cast<int>(prob_samples.front().size());

  McPrediction p;
  p.samples = k;
  p.class_probs.assign(static_cast<size_t>(c), 0.0);
  p.class_sigma.assign(static_cast<size_t>(c), 0.0);
  for (const auto& ps : prob_samples) {
    for (int j = 0; j < c; ++j) p.class_probs[static_cast<size_t>(j)] += ps[j];
  }
  for (double& v : p.class_probs) v /= k;
  for (int j = 0; j < c; ++j) {
    bool constant = true;
    for (const auto& ps : prob_samples) constant &= ps[j] == prob_samples[0][j];
    if (constant) {  // spread of identical samples is exactly zero
      p.class_probs[static_cast<size_t>(j)] = prob_samples[0][j];
      continue;
    }
    double acc = 0.0;
    for (const auto& ps : prob_samples) {
      const double d = ps[j] - p.class_probs[static_cast<size_t>(j)];
      acc += d * d;
    }
    p.class_sigma[static_cast<size_t>(j)] = std::sqrt(acc / k);
  }

  bool risk_constant = true;
  for (double r : risk_samples) risk_constant &= r == risk_samples[0];
  double mean_r, var_r = 0.0;
  if (risk_constant) {
    mean_r = risk_samples[0];
  } else {
    mean_r = 0.0;
    for (double r : risk_samples) mean_r += r;
    mean_r /= k;
    for (double r : risk_samples) var_r += (r - mean_r) * (r - mean_r);
  }
  p.risk = mean_r;
  p.sigma = std::sqrt(var_r / k);  // population spread, per the CI formula
  const double half = 1.96 * p.sigma / std::sqrt(static_cast<double>(k));
  p.ci_lo = mean_r - half;
  p.ci_hi = mean_r + half;
  p.grade = static_cast<int>(std::max_element(p.class_probs.begin(),
                                              p.class_probs.end()) -
                             p.class_probs.begin());
  p.tier = stratify_risk(std::clamp(p.risk, 0.0, 1.0));
  p.bayesian = true;
  return p;
}

McPrediction Model::mc_predict(const ModelInput& in, int k, Rng& rng) const {
  if (k < 2) {
    throw std::invalid_argument("mc_predict: at least 2 samples required");
  }
  std::vector<std::vector<double>> prob_samples;
  std::vector<double> risk_samples;
  prob_samples.reserve(static_cast<size_t>(k));
  risk_samples.reserve(static_cast<size_t>(k));
  for (int s = 0; s < k; ++s) {
    Output o = forward(in, true, &rng);
    prob_samples.push_back(o.class_probs.data());
    risk_samples.push_back(o.risk.item());
  }
  return reduce_mc_samples(prob_samples, risk_samples);
}

McPrediction Model::predict_deterministic(const ModelInput& in) const {
  Output o = forward(in, false, nullptr);
  McPrediction p;
  p.samples = 1;
  p.bayesian = false;
  p.class_probs = o.class_probs.data();
  p.class_sigma.assign(p.class_probs.size(), 0.0);
  p.risk = o.risk.item();
  p.sigma = 0.0;
  p.ci_lo = p.ci_hi = p.risk;
  p.grade = static_cast<int>(std::max_element(p.class_probs.begin(),
                                              p.class_probs.end()) -
                             p.class_probs.begin());
  p.tier = stratify_risk(std::clamp(p.risk, 0.0, 1.0));
  return p;
}

FundusImage saliency_from_gradient(const std::vector<double>& grad, int size,
                                   int channels) {
  FundusImage map = FundusImage::create(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double m = 0.0;
      for (int c = 0; c < channels; ++c)
        m = std::max(m, std::fabs(grad[(static_cast<size_t>(y) * size + x) *
                                           channels +
                                       c]));
      map.at(y, x) = m;
    }
  const auto [mn_it, mx_it] =
      std::minmax_element(map.pixels.begin(), map.pixels.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx > mn) {
    for (double& v : map.pixels) v = (v - mn) / (mx - mn);
  } else {
    for (double& v : map.pixels) v = 0.0;
  }
  return map;
}

FundusImage Model::saliency(const ModelInput& in, int target_class) const {
  ModelInput work = in;
  work.image = in.image.detach();
  work.image.set_requires_grad(true);
  Output o = forward(work, false, nullptr);
  Tensor target = target_class < 0 ? o.risk_logit
                                   : pick(o.class_logits, target_class);
  target.backward();
  return saliency_from_gradient(work.image.grad(), cfg_.image_size,
                                cfg_.image_channels);
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < cnn_.weights.size(); ++i) {
    out.emplace_back("cnn.w" + std::to_string(i), &cnn_.weights[i]);
    out.emplace_back("cnn.b" + std::to_string(i), &cnn_.biases[i]);
  }
  if (cfg_.has_vit()) {
    out.emplace_back("vit.proj_w", &vit_.embed.proj_w);
    out.emplace_back("vit.proj_b", &vit_.embed.proj_b);
    out.emplace_back("vit.pos", &vit_.embed.pos_table);
    out.emplace_back("vit.cls", &vit_.embed.cls_token);
    for (size_t i = 0; i < vit_.blocks.size(); ++i) {
      auto& b = vit_.blocks[i];
      const std::string p = "vit.block" + std::to_string(i) + ".";
      out.emplace_back(p + "ln1_g", &b.ln1_g);
      out.emplace_back(p + "ln1_b", &b.ln1_b);
      out.emplace_back(p + "wq", &b.attn.wq);
      out.emplace_back(p + "bq", &b.attn.bq);
      out.emplace_back(p + "wk", &b.attn.wk);
      out.emplace_back(p + "bk", &b.attn.bk);
      out.emplace_back(p + "wv", &b.attn.wv);
      out.emplace_back(p + "bv", &b.attn.bv);
      out.emplace_back(p + "wo", &b.attn.wo);
      out.emplace_back(p + "bo", &b.attn.bo);
      out.emplace_back(p + "ln2_g", &b.ln2_g);
      out.emplace_back(p + "ln2_b", &b.ln2_b);
      out.emplace_back(p + "mlp_w1", &b.mlp_w1);
      out.emplace_back(p + "mlp_b1", &b.mlp_b1);
      out.emplace_back(p + "mlp_w2", &b.mlp_w2);
      out.emplace_back(p + "mlp_b2", &b.mlp_b2);
    }
    out.emplace_back("cross.wq", &cross_.wq);
    out.emplace_back("cross.bq", &cross_.bq);
    out.emplace_back("cross.wk", &cross_.wk);
    out.emplace_back("cross.bk", &cross_.bk);
    out.emplace_back("cross.wv", &cross_.wv);
    out.emplace_back("cross.bv", &cross_.bv);
    out.emplace_back("cross.wo", &cross_.wo);
    out.emplace_back("cross.bo", &cross_.bo);
  }
  if (cfg_.has_gnn()) {
    for (size_t i = 0; i < gcn_.layer_weights.size(); ++i) {
      out.emplace_back("gcn.w" + std::to_string(i), &gcn_.layer_weights[i]);
    }
    out.emplace_back("gcn.readout_w", &gcn_.readout_w);
    out.emplace_back("gcn.readout_b", &gcn_.readout_b);
  }
  out.emplace_back("kv.w", &kv_w_);
  out.emplace_back("kv.b", &kv_b_);
  out.emplace_back("fuse.w", &fuse_w_);
  out.emplace_back("fuse.b", &fuse_b_);
  out.emplace_back("head.cls_w", &cls_w_);
  out.emplace_back("head.cls_b", &cls_b_);
  out.emplace_back("head.risk_w", &risk_w_);
  out.emplace_back("head.risk_b", &risk_b_);
  return out;
}

int64_t Model::actual_param_count() {
  int64_t total = 0;
  for (Tensor* t : parameters()) total += t->numel();
  return total;
}

}  // namespace tprs
