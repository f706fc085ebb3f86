#pragma once

#include <cmath>
#include <functional>

#include "mdfr/autograd.hpp"
#include "mdfr/common.hpp"

namespace mdfr::testing {

inline nn::Tensor random_tensor(int n, int c, int h, int w, RandomStream& rng, double lo = -1.0,
                                double hi = 1.0) {
  nn::Tensor t(n, c, h, w);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences against the autograd gradient on a set of
// randomly chosen coordinates of `leaf`. `build` must rebuild the scalar
// graph from the (possibly perturbed) leaf values.
struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

inline GradCheckResult grad_check(const nn::VarPtr& leaf,
                                  const std::function<nn::VarPtr()>& build, int coords,
                                  RandomStream& rng, double h = 1e-6) {
  leaf->requires_grad = true;
  auto root = build();
  leaf->ensure_grad();
  leaf->zero_grad();
  nn::backward(root);
  nn::Tensor analytic = leaf->grad;

  GradCheckResult result;
  for (int k = 0; k < coords; ++k) {
    const std::size_t i = rng.next_u64() % leaf->value.numel();
    const double saved = leaf->value[i];
    leaf->value[i] = saved + h;
    const double up = build()->value.item();
    leaf->value[i] = saved - h;
    const double down = build()->value.item();
    leaf->value[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    result.max_abs_err = std::max(result.max_abs_err, abs_err);
    result.max_rel_err = std::max(result.max_rel_err, abs_err / denom);
  }
  return result;
}

} // namespace mdfr::testing
