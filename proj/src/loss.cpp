#include "tprs/loss.hpp"

#include <stdexcept>

#include "tprs/ops.hpp"

namespace tprs {

void LossConfig::validate() const {
  for (double a : alpha) {
    if (!(a > 0)) throw std::invalid_argument("focal alpha entries must be positive");
  }
  if (gamma < 0) throw std::invalid_argument("focal gamma must be >= 0");
  if (lambda_mse < 0) throw std::invalid_argument("lambda_mse must be >= 0");
}

Tensor focal_loss(const Tensor& probs, int true_class, const LossConfig& cfg) {
  cfg.validate();
  if (true_class < 0 ||
      true_class >= static_cast<int>(cfg.alpha.size()) ||
      true_class >= probs.numel()) {
    throw std::invalid_argument("focal_loss: true class out of range");
  }
  Tensor p = clamp_min(pick(probs, true_class), 1e-12);
  Tensor focus = pow_const(neg(add_scalar(p, -1.0)), cfg.gamma);  // (1-p)^gamma
  return scale(mul(focus, tprs::log(p)),
               -cfg.alpha[static_cast<size_t>(true_class)]);
}

Tensor total_loss(const std::vector<SamplePrediction>& batch,
                  const LossConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");

  std::vector<Tensor> focal_terms;
  std::vector<Tensor> mse_terms;
  focal_terms.reserve(batch.size());
  for (const auto& s : batch) {
    focal_terms.push_back(focal_loss(s.probs, s.label, cfg));
    if (s.has_risk) {
      Tensor d = add_scalar(s.risk, -s.risk_target);
      mse_terms.push_back(mul(d, d));
    }
  }
  Tensor loss = scale(sum(concat_vec(focal_terms)),
                      1.0 / static_cast<double>(focal_terms.size()));
  if (!mse_terms.empty() && cfg.lambda_mse > 0) {
    Tensor mse = scale(sum(concat_vec(mse_terms)),
                       1.0 / static_cast<double>(mse_terms.size()));
    loss = add(loss, scale(mse, cfg.lambda_mse));
  }
  return loss;
}

}  // namespace tprs
