#include "mdfr/optim.hpp"

#include <cmath>

namespace mdfr::nn {

AdamOptimizer::AdamOptimizer(ParamStore& params, double lr, double beta1, double beta2,
                             double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw InvalidArgumentError("AdamOptimizer: learning rate must be positive");
  for (const auto& [name, var] : params_.entries()) {
    const auto& t = var->value;
    m_.emplace_back(t.n(), t.c(), t.h(), t.w());
    v_.emplace_back(t.n(), t.c(), t.h(), t.w());
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  std::size_t idx = 0;
  for (auto& [name, var] : params_.entries()) {
    var->ensure_grad();
    Tensor& m = m_[idx];
    Tensor& v = v_[idx];
    ++idx;
    double* pm = m.data();
    double* pv = v.data();
    double* pw = var->value.data();
    const double* pg = var->grad.data();
    for (std::size_t i = 0; i < var->value.numel(); ++i) {
      pm[i] = beta1_ * pm[i] + (1.0 - beta1_) * pg[i];
      pv[i] = beta2_ * pv[i] + (1.0 - beta2_) * pg[i] * pg[i];
      const double mhat = pm[i] / bc1;
      const double vhat = pv[i] / bc2;
      pw[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void AdamOptimizer::zero_grads() { params_.zero_grads(); }

double clip_global_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, var] : params.entries()) {
    if (var->grad.empty()) continue;
    const double* g = var->grad.data();
    for (std::size_t i = 0; i < var->grad.numel(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, var] : params.entries()) {
      if (var->grad.empty()) continue;
      double* g = var->grad.data();
      for (std::size_t i = 0; i < var->grad.numel(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

} // namespace mdfr::nn
