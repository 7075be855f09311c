#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "tprs/backbones.hpp"
#include "tprs/gradcheck.hpp"
#include "tprs/model.hpp"

using namespace tprs;

namespace {

CnnConfig desk_cnn() {
  CnnConfig c;
  c.input_size = 32;
  c.stage_channels = {16, 24, 32};
  c.output_grid = 4;
  return c;
}

VitConfig tiny_vit() {
  VitConfig v;
  v.image_size = 8;
  v.patch_size = 4;
  v.embed_dim = 8;
  v.depth = 1;
  v.heads = 2;
  return v;
}

}  // namespace

TEST_CASE("paper-scale shape contract is symbolic") {
  ModelConfig paper = ModelConfig::paper_scale();
  CHECK(cnn_output_shape(paper.cnn()) == Shape{7, 7, 2560});
  CHECK(vit_output_shape(paper.vit()) == Shape{197, 768});
  CHECK(paper.vit().num_patches() == 196);
  CHECK(paper.vit().tokens() == 197);
  CHECK(paper.fusion_in_width() == 768 + 64 + paper.meta_dim);
}

TEST_CASE("cnn stride schedule validation") {
  CnnConfig bad = desk_cnn();
  bad.output_grid = 5;  // 32 -> 16 -> 8 -> 4, never 5
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CnnConfig two = desk_cnn();
  two.stage_channels = {8, 16};
  two.output_grid = 8;
  CHECK_NOTHROW(two.validate());
}

TEST_CASE("cnn_extract desk shapes and annihilator") {
  CnnConfig cfg = desk_cnn();
  Rng rng(1);
  CnnParams p = CnnParams::init(cfg, rng);
  Tensor img = init_normal({32, 32, 3}, 0.5, rng).detach();
  Tensor out = cnn_extract(img, cfg, p);
  CHECK(out.shape() == Shape{4, 4, 32});

  for (auto& w : p.weights)
    for (double& v : w.data()) v = 0.0;
  for (auto& b : p.biases)
    for (double& v : b.data()) v = 0.0;
  Tensor zero = cnn_extract(img, cfg, p);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("patch_embed token layout") {
  VitConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  cfg.heads = 4;
  Rng rng(2);
  PatchEmbedding emb = PatchEmbedding::init(cfg, rng);
  CHECK(cfg.tokens() == 17);  // (32/8)^2 + 1

  Tensor img = Tensor::zeros({32, 32, 3});
  // zero image and zero class token: token i must equal pos row i exactly
  for (double& v : emb.cls_token.data()) v = 0.0;
  for (double& v : emb.proj_b.data()) v = 0.0;
  Tensor tokens = patch_embed(img, cfg, emb);
  CHECK(tokens.shape() == Shape{17, 16});
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 16; ++j)
      CHECK(tokens(i, j) == emb.pos_table(i, j));

  VitConfig bad = cfg;
  bad.patch_size = 7;
  CHECK_THROWS_AS(PatchEmbedding::init(bad, rng), std::invalid_argument);
}

TEST_CASE("transformer_encode depth zero is the identity") {
  VitConfig cfg = tiny_vit();
  cfg.depth = 0;
  Rng rng(3);
  VitParams p = VitParams::init(cfg, rng);
  Tensor tokens = init_normal({cfg.tokens(), cfg.embed_dim}, 1.0, rng);
  Tensor out = transformer_encode(tokens, cfg, p);
  CHECK(out.data() == tokens.data());
}

TEST_CASE("transformer_encode patch-token permutation equivariance") {
  VitConfig cfg = tiny_vit();
  cfg.depth = 2;
  Rng rng(4);
  VitParams p = VitParams::init(cfg, rng);
  const int t = cfg.tokens(), d = cfg.embed_dim;
  Tensor tokens = init_normal({t, d}, 1.0, rng).detach();

  // permute patch rows 1..N (class token fixed), run both, compare
  std::vector<int> perm(t);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[1], perm[3]);
  std::swap(perm[2], perm[4]);

  Tensor permuted = Tensor::zeros({t, d});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) permuted(i, j) = tokens(perm[i], j);

  Tensor out = transformer_encode(tokens, cfg, p);
  Tensor out_p = transformer_encode(permuted, cfg, p);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(out_p(i, j) == doctest::Approx(out(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("param_count formulas match allocated parameters") {
  // hand example: linear I=2, O=3 with bias = 9 learnable scalars
  CHECK(2 * 3 + 3 == 9);

  VitConfig cfg = tiny_vit();
  Rng rng(5);
  VitParams p = VitParams::init(cfg, rng);
  int64_t actual = 0;
  for (Tensor* t : p.params()) actual += t->numel();
  CHECK(actual == vit_param_count(cfg));

  // hand tally for the tiny config: patch 4x4x3=48 -> 8
  const int64_t embed = 48 * 8 + 8 + 5 * 8 + 8;
  const int64_t block = 2 * 8 + 4 * (64 + 8) + 2 * 8 + 8 * 32 + 32 + 32 * 8 + 8;
  CHECK(vit_param_count(cfg) == embed + block);

  VitConfig shallower = cfg;
  shallower.depth = 0;
  CHECK(vit_param_count(shallower) < vit_param_count(cfg));

  CnnConfig cc = desk_cnn();
  CnnParams cp = CnnParams::init(cc, rng);
  int64_t cactual = 0;
  for (Tensor* t : cp.params()) cactual += t->numel();
  CHECK(cactual == cnn_param_count(cc));
}

TEST_CASE("backbone gradients pass the finite-difference check") {
  CnnConfig cc;
  cc.input_size = 8;
  cc.stage_channels = {4, 6};
  cc.output_grid = 2;
  Rng rng(6);
  CnnParams cp = CnnParams::init(cc, rng);
  Tensor img = init_normal({8, 8, 3}, 0.5, rng).detach();
  auto cnn_loss = [&]() {
    Tensor f = cnn_extract(img, cc, cp);
    return mean(mul(f, f));
  };
  auto cps = cp.params();
  CHECK(grad_check_params(cnn_loss, cps) < 1e-5);

  VitConfig vc = tiny_vit();
  VitParams vp = VitParams::init(vc, rng);
  Tensor vimg = init_normal({8, 8, 3}, 0.5, rng).detach();
  auto vit_loss = [&]() {
    Tensor tokens = patch_embed(vimg, vc, vp.embed);
    Tensor f = transformer_encode(tokens, vc, vp);
    return mean(mul(f, f));
  };
  auto vps = vp.params();
  CHECK(grad_check_params(vit_loss, vps) < 1e-5);
}
