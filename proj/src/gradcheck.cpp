#include "tprs/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace tprs {

namespace {

// Central differences resolve ~1e-10 absolute at 64-bit, so gradients below
// the 1e-4 floor are compared at that scale rather than relatively.
double rel_err(double a, double n) {
  const double denom = std::max({std::fabs(a), std::fabs(n), 1e-4});
  return std::fabs(a - n) / denom;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps) {
  if (eps < 1e-7 || eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps out of [1e-7, 1e-3]");
  }
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor out = f(x);
  if (out.numel() != 1) {
    throw std::logic_error("grad_check: function output must be scalar");
  }
  out.backward();
  const std::vector<double> analytic = x.grad();

  double worst = 0.0;
  for (size_t i = 0; i < x.data().size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + eps;
    const double fp = f(x).item();
    x.data()[i] = orig - eps;
    const double fm = f(x).item();
    x.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

double grad_check_params(const std::function<Tensor()>& loss,
                         const std::vector<Tensor*>& params, double eps) {
  for (Tensor* p : params) p->zero_grad();
  Tensor out = loss();
  if (out.numel() != 1) {
    throw std::logic_error("grad_check_params: loss must be scalar");
  }
  out.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) {
    analytic.push_back(p->has_grad() ? p->grad()
                                     : std::vector<double>(p->data().size(), 0.0));
  }

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& theta = params[pi]->data();
    for (size_t j = 0; j < theta.size(); ++j) {
      const double orig = theta[j];
      theta[j] = orig + eps;
      const double fp = loss().item();
      theta[j] = orig - eps;
      const double fm = loss().item();
      theta[j] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, rel_err(analytic[pi][j], numeric));
    }
  }
  return worst;
}

}  // namespace tprs
