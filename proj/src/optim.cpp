#include "tprs/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tprs {

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in (0,1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

void adam_step(std::vector<Tensor*>& params, AdamState& state,
               const OptimConfig& cfg, double lr_override) {
  cfg.validate();
  // a non-negative override replaces the configured rate; zero is a valid
  // scheduler state and must leave parameters untouched
  const double lr = lr_override >= 0.0 ? lr_override : cfg.learning_rate;

  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->data().size(), 0.0);
      state.v[i].assign(params[i]->data().size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state/parameter count mismatch");
  }

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i];
    auto& theta = t.data();
    if (state.m[i].size() != theta.size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch at param " +
                                  std::to_string(i));
    }
    const bool has_grad = t.has_grad();
    const std::vector<double>* g = has_grad ? &t.grad() : nullptr;
    for (size_t j = 0; j < theta.size(); ++j) {
      const double gj = has_grad ? (*g)[j] : 0.0;
      if (!std::isfinite(gj)) {
        throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                 std::to_string(i) + " element " +
                                 std::to_string(j));
      }
      double& m = state.m[i][j];
      double& v = state.v[i][j];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gj;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      theta[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.epsilon) +
                        cfg.weight_decay * theta[j]);
    }
  }
}

void zero_grads(std::vector<Tensor*>& params) {
  for (Tensor* t : params) t->zero_grad();
}

}  // namespace tprs
