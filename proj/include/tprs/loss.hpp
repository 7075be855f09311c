#pragma once

#include <array>
#include <vector>

#include "tprs/tensor.hpp"

namespace tprs {

struct LossConfig {
  std::array<double, 5> alpha = {0.2, 0.25, 0.2, 0.2, 0.15};
  double gamma = 2.0;
  double lambda_mse = 0.5;
  void validate() const;
};

// -alpha_c (1 - p_c)^gamma ln(p_c) for the true class, p clamped at 1e-12.
// The printed focal term lacks the conventional leading minus and would be
// negative as written; the standard signed form is used here.
Tensor focal_loss(const Tensor& probs, int true_class, const LossConfig& cfg);

struct SamplePrediction {
  Tensor probs;        // [C]
  Tensor risk;         // scalar
  int label = 0;
  double risk_target = 0;
  bool has_risk = false;
};

// mean focal over the batch + lambda_mse * mean squared risk error over the
// samples that carry a risk label. L2 regularization lives in the optimizer.
Tensor total_loss(const std::vector<SamplePrediction>& batch,
                  const LossConfig& cfg);

}  // namespace tprs
