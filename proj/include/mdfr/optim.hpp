#pragma once

#include "mdfr/layers.hpp"

namespace mdfr::nn {

// First-order adaptive-moment gradient descent over one ParamStore.
// Moment decays default to (0.5, 0.999), the usual choice for adversarial
// training loops.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore& params, double lr, double beta1 = 0.5, double beta2 = 0.999,
                double eps = 1e-8);

  void step();       // consumes accumulated gradients
  void zero_grads();

  double lr() const { return lr_; }

 private:
  ParamStore& params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Rescale gradients so their concatenated global norm is at most max_norm.
// Returns the pre-clip norm so callers can log when clipping engaged.
double clip_global_grad_norm(ParamStore& params, double max_norm);

} // namespace mdfr::nn
