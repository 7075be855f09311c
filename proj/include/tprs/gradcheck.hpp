#pragma once

#include <functional>
#include <vector>

#include "tprs/tensor.hpp"

namespace tprs {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences, element by element. Returns the maximum
// relative error max |a-n| / max(|a|,|n|,1e-4). The function is re-evaluated
// with perturbed copies of x, so it must be deterministic.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = 1e-5);

// Same check over a set of shared parameter tensors: `loss` must rebuild the
// graph from the current parameter values on every call.
double grad_check_params(const std::function<Tensor()>& loss,
                         const std::vector<Tensor*>& params, double eps = 1e-5);

}  // namespace tprs
