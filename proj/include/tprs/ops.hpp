#pragma once

#include <vector>

#include "tprs/rng.hpp"
#include "tprs/tensor.hpp"

namespace tprs {

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor pow_const(const Tensor& a, double p);
Tensor clamp_min(const Tensor& a, double c);

// Softmax along `axis` (default last). Max-subtraction keeps it overflow-safe;
// rows sum to 1 and the map is shift-invariant.
Tensor softmax(const Tensor& a, int axis = -1);

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [N,M] -> [M]

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x:[N,I] or [I], w:[I,O], b:[O] -> x.w + b
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- structure -------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape s);
Tensor row(const Tensor& a, int i);                       // [N,M] -> [M]
Tensor slice_cols(const Tensor& a, int c0, int len);      // [N,M] -> [N,len]
Tensor concat_vec(const std::vector<Tensor>& parts);      // 1-d concat
Tensor concat_rows(const std::vector<Tensor>& parts);     // stack [Ni,M]
Tensor concat_cols(const std::vector<Tensor>& parts);     // join  [N,Mi]
Tensor pick(const Tensor& a, int flat_index);             // -> scalar
// [S,S,C] image -> [(S/p)^2, p*p*C] flattened patches, row-major patch order
Tensor im2patches(const Tensor& img, int patch);

// ---- nn primitives ---------------------------------------------------------
enum class DropoutMode { kTrain, kEval };

// Inverted dropout: eval mode is the exact identity, train/MC mode zeroes
// each element with probability `rate` and scales survivors by 1/(1-rate).
Tensor dropout(const Tensor& a, double rate, DropoutMode mode, Rng& rng);

// Per-row layer norm with learned gamma/beta of width M.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// x:[H,W,Ci], w:[Kh,Kw,Ci,Co], b:[Co]; zero padding
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  static AttentionParams init(int dim, Rng& rng);
  std::vector<Tensor*> params();
};

// Scaled dot-product attention per head (scale 1/sqrt(dim/heads)), heads
// concatenated and output-projected. q:[Nq,Dm], k,v:[Nk,Dm] -> [Nq,Dm].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const AttentionParams& p);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Fan-in-scaled uniform init for weight matrices; zero for biases.
Tensor init_uniform_fanin(Shape shape, int fan_in, Rng& rng);
Tensor init_normal(Shape shape, double sigma, Rng& rng);

}  // namespace tprs
