#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gdsr/tensor.hpp"

namespace gdsr {

/// A named trainable tensor together with its adaptive-moment state.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
  typename Tensor<S>::Array m;  // first moment
  typename Tensor<S>::Array v;  // second moment
  int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<S> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
    m = Tensor<S>::Array::Zero(tensor.size());
    v = Tensor<S>::Array::Zero(tensor.size());
  }
};

template <typename S>
void zero_grads(const std::vector<Parameter<S>*>& params) {
  for (auto* p : params) p->tensor.zero_grad();
}

/// One Adam update with bias correction. Requires every parameter's
/// gradient to be populated (backward must have run).
template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, S lr, S beta1 = S(0.9),
               S beta2 = S(0.999), S eps = S(1e-8)) {
  for (auto* p : params) {
    if (!p->tensor.has_grad())
      throw NumericError("adam_step: parameter '" + p->name +
                         "' has no gradient; run backward first");
  }
  for (auto* p : params) {
    const auto& g = p->tensor.grad();
    p->step += 1;
    p->m = beta1 * p->m + (S{1} - beta1) * g;
    p->v = beta2 * p->v + (S{1} - beta2) * g.square();
    const S c1 = S{1} - static_cast<S>(std::pow(static_cast<double>(beta1), p->step));
    const S c2 = S{1} - static_cast<S>(std::pow(static_cast<double>(beta2), p->step));
    p->tensor.values() -= lr * (p->m / c1) / ((p->v / c2).sqrt() + eps);
  }
}

}  // namespace gdsr
