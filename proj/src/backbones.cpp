#include "tprs/backbones.hpp"

#include <stdexcept>

namespace tprs {

namespace {

int conv_out(int in) { return (in + 2 - 3) / 2 + 1; }  // k=3, pad=1, stride=2

}  // namespace

void CnnConfig::validate() const {
  if (input_size < 2 || input_channels <= 0 || stage_channels.empty() ||
      output_grid <= 0) {
    throw std::invalid_argument("cnn config: bad dimensions");
  }
  for (int c : stage_channels) {
    if (c <= 0) throw std::invalid_argument("cnn config: channel widths must be positive");
  }
  int s = input_size;
  for (size_t i = 0; i < stage_channels.size(); ++i) s = conv_out(s);
  if (s != output_grid) {
    throw std::invalid_argument(
        "cnn config: stride schedule reaches " + std::to_string(s) +
        ", expected output grid " + std::to_string(output_grid));
  }
}

void VitConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("vit config: image size must be divisible by patch size");
  }
  if (embed_dim <= 0 || depth < 0 || heads <= 0 || mlp_ratio <= 0) {
    throw std::invalid_argument("vit config: bad dimensions");
  }
  if (embed_dim % heads != 0) {
    throw std::invalid_argument("vit config: embed dim not divisible by heads");
  }
}

CnnParams CnnParams::init(const CnnConfig& cfg, Rng& rng) {
  cfg.validate();
  CnnParams p;
  int ci = cfg.input_channels;
  for (int co : cfg.stage_channels) {
    p.weights.push_back(init_uniform_fanin({3, 3, ci, co}, 9 * ci, rng));
    p.biases.push_back(Tensor::zeros({co}, true));
    ci = co;
  }
  return p;
}

std::vector<Tensor*> CnnParams::params() {
  std::vector<Tensor*> out;
  for (size_t i = 0; i < weights.size(); ++i) {
    out.push_back(&weights[i]);
    out.push_back(&biases[i]);
  }
  return out;
}

PatchEmbedding PatchEmbedding::init(const VitConfig& cfg, Rng& rng) {
  cfg.validate();
  const int pd = cfg.patch_size * cfg.patch_size * cfg.image_channels;
  PatchEmbedding e;
  e.proj_w = init_uniform_fanin({pd, cfg.embed_dim}, pd, rng);
  e.proj_b = Tensor::zeros({cfg.embed_dim}, true);
  e.pos_table = init_normal({cfg.tokens(), cfg.embed_dim}, 0.02, rng);
  e.cls_token = init_normal({1, cfg.embed_dim}, 0.02, rng);
  return e;
}

std::vector<Tensor*> PatchEmbedding::params() {
  return {&proj_w, &proj_b, &pos_table, &cls_token};
}

EncoderBlockParams EncoderBlockParams::init(const VitConfig& cfg, Rng& rng) {
  const int d = cfg.embed_dim, m = cfg.mlp_dim();
  EncoderBlockParams b;
  b.ln1_g = Tensor::full({d}, 1.0, true);
  b.ln1_b = Tensor::zeros({d}, true);
  b.attn = AttentionParams::init(d, rng);
  b.ln2_g = Tensor::full({d}, 1.0, true);
  b.ln2_b = Tensor::zeros({d}, true);
  b.mlp_w1 = init_uniform_fanin({d, m}, d, rng);
  b.mlp_b1 = Tensor::zeros({m}, true);
  b.mlp_w2 = init_uniform_fanin({m, d}, m, rng);
  b.mlp_b2 = Tensor::zeros({d}, true);
  return b;
}

std::vector<Tensor*> EncoderBlockParams::params() {
  std::vector<Tensor*> out{&ln1_g, &ln1_b};
  for (Tensor* t : attn.params()) out.push_back(t);
  out.insert(out.end(), {&ln2_g, &ln2_b, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2});
  return out;
}

VitParams VitParams::init(const VitConfig& cfg, Rng& rng) {
  VitParams p;
  p.embed = PatchEmbedding::init(cfg, rng);
  for (int i = 0; i < cfg.depth; ++i) {
    p.blocks.push_back(EncoderBlockParams::init(cfg, rng));
  }
  return p;
}

std::vector<Tensor*> VitParams::params() {
  std::vector<Tensor*> out = embed.params();
  for (auto& b : blocks) {
    for (Tensor* t : b.params()) out.push_back(t);
  }
  return out;
}

Tensor cnn_extract(const Tensor& img, const CnnConfig& cfg, const CnnParams& p) {
  if (img.rank() != 3 || img.dim(0) != cfg.input_size ||
      img.dim(1) != cfg.input_size || img.dim(2) != cfg.input_channels) {
    throw std::invalid_argument("cnn_extract: image shape " +
                                shape_str(img.shape()) + " does not match config");
  }
  Tensor x = img;
  for (size_t i = 0; i < p.weights.size(); ++i) {
    x = relu(conv2d(x, p.weights[i], p.biases[i], 2, 1));
  }
  return x;
}

Tensor patch_embed(const Tensor& img, const VitConfig& cfg,
                   const PatchEmbedding& emb) {
  if (img.rank() != 3 || img.dim(0) != cfg.image_size ||
      img.dim(1) != cfg.image_size || img.dim(2) != cfg.image_channels) {
    throw std::invalid_argument("patch_embed: image shape mismatch");
  }
  Tensor patches = im2patches(img, cfg.patch_size);        // [N, p*p*C]
  Tensor projected = linear(patches, emb.proj_w, emb.proj_b);  // [N, D]
  Tensor tokens = concat_rows({emb.cls_token, projected});     // [N+1, D]
  return add(tokens, emb.pos_table);
}

Tensor transformer_encode(const Tensor& tokens, const VitConfig& cfg,
                          const VitParams& p) {
  if (tokens.rank() != 2 || tokens.dim(1) != cfg.embed_dim) {
    throw std::invalid_argument("transformer_encode: token width mismatch");
  }
  Tensor x = tokens;
  for (const auto& blk : p.blocks) {
    Tensor n1 = layer_norm(x, blk.ln1_g, blk.ln1_b);
    x = add(x, multi_head_attention(n1, n1, n1, cfg.heads, blk.attn));
    Tensor n2 = layer_norm(x, blk.ln2_g, blk.ln2_b);
    Tensor h = linear(gelu(linear(n2, blk.mlp_w1, blk.mlp_b1)), blk.mlp_w2,
                      blk.mlp_b2);
    x = add(x, h);
  }
  return x;
}

Shape cnn_output_shape(const CnnConfig& cfg) {
  cfg.validate();
  return {cfg.output_grid, cfg.output_grid, cfg.output_channels()};
}

Shape vit_output_shape(const VitConfig& cfg) {
  cfg.validate();
  return {cfg.tokens(), cfg.embed_dim};
}

int64_t cnn_param_count(const CnnConfig& cfg) {
  cfg.validate();
  int64_t total = 0;
  int64_t ci = cfg.input_channels;
  for (int co : cfg.stage_channels) {
    total += 9 * ci * co + co;
    ci = co;
  }
  return total;
}

int64_t vit_param_count(const VitConfig& cfg) {
  cfg.validate();
  const int64_t d = cfg.embed_dim, m = cfg.mlp_dim();
  const int64_t pd = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size *
                     cfg.image_channels;
  int64_t total = pd * d + d;                        // patch projection
  total += static_cast<int64_t>(cfg.tokens()) * d;   // positional table
  total += d;                                        // class token
  const int64_t per_block = 2 * d                    // ln1
                            + 4 * (d * d + d)        // attention projections
                            + 2 * d                  // ln2
                            + d * m + m + m * d + d; // mlp
  return total + cfg.depth * per_block;
}

}  // namespace tprs
