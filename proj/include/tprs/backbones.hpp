#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tprs/ops.hpp"
#include "tprs/rng.hpp"
#include "tprs/tensor.hpp"

namespace tprs {

// Plain conv/ReLU/stride-2 pyramid: each stage is a 3x3 conv with padding 1
// and stride 2, so each stage halves the spatial size. The schedule must land
// exactly on output_grid.
struct CnnConfig {
  int input_size = 32;
  int input_channels = 3;
  std::vector<int> stage_channels = {16, 24, 32};  // last entry is C_cnn
  int output_grid = 4;                             // G
  void validate() const;
  int output_channels() const { return stage_channels.back(); }
};

struct VitConfig {
  int image_size = 32;
  int image_channels = 3;
  int patch_size = 8;
  int embed_dim = 32;   // D
  int depth = 2;
  int heads = 4;
  double mlp_ratio = 4.0;
  void validate() const;
  int num_patches() const {
    const int g = image_size / patch_size;
    return g * g;
  }
  int tokens() const { return num_patches() + 1; }  // +1 class token
  int mlp_dim() const { return static_cast<int>(mlp_ratio * embed_dim); }
};

struct CnnParams {
  std::vector<Tensor> weights;  // per stage [3,3,ci,co]
  std::vector<Tensor> biases;   // per stage [co]
  static CnnParams init(const CnnConfig& cfg, Rng& rng);
  std::vector<Tensor*> params();
};

// Learned patch projection, positional table (N+1 rows) and class token.
struct PatchEmbedding {
  Tensor proj_w;     // [patch*patch*C, D]
  Tensor proj_b;     // [D]
  Tensor pos_table;  // [N+1, D]
  Tensor cls_token;  // [1, D]
  static PatchEmbedding init(const VitConfig& cfg, Rng& rng);
  std::vector<Tensor*> params();
};

struct EncoderBlockParams {
  Tensor ln1_g, ln1_b;
  AttentionParams attn;
  Tensor ln2_g, ln2_b;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  static EncoderBlockParams init(const VitConfig& cfg, Rng& rng);
  std::vector<Tensor*> params();
};

struct VitParams {
  PatchEmbedding embed;
  std::vector<EncoderBlockParams> blocks;
  static VitParams init(const VitConfig& cfg, Rng& rng);
  std::vector<Tensor*> params();
};

// img [S,S,3] -> feature map [G,G,C_cnn]
Tensor cnn_extract(const Tensor& img, const CnnConfig& cfg, const CnnParams& p);

// img [S,S,3] -> tokens [(N+1),D]; row 0 is class token + pos row 0
Tensor patch_embed(const Tensor& img, const VitConfig& cfg,
                   const PatchEmbedding& emb);

// depth x (pre-norm self-attention + MLP, both residual); depth 0 = identity
Tensor transformer_encode(const Tensor& tokens, const VitConfig& cfg,
                          const VitParams& p);

// Symbolic shape inference: no parameters are allocated, so these work at
// paper scale too.
Shape cnn_output_shape(const CnnConfig& cfg);
Shape vit_output_shape(const VitConfig& cfg);

// Exact learnable-scalar counts per component, computed from the configs.
int64_t cnn_param_count(const CnnConfig& cfg);
int64_t vit_param_count(const VitConfig& cfg);

}  // namespace tprs
