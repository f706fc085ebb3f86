#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mdfr/tensor.hpp"

namespace mdfr::nn {

class Variable;
using VarPtr = std::shared_ptr<Variable>;

// Node of a dynamically built computation graph. Forward ops allocate the
// value eagerly; gradients are accumulated during the reverse sweep.
class Variable {
 public:
  Tensor value;
  Tensor grad; // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<VarPtr> parents;
  std::function<void(Variable&)> backward_op; // scatter self.grad into parents

  static VarPtr leaf(Tensor v, bool requires_grad = false) {
    auto var = std::make_shared<Variable>();
    var->value = std::move(v);
    var->requires_grad = requires_grad;
    return var;
  }

  void ensure_grad() {
    if (grad.empty()) grad = Tensor(value.n(), value.c(), value.h(), value.w());
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

// Reverse sweep from `root`, seeding its gradient with ones.
void backward(const VarPtr& root);

// ---- graph-building operations -------------------------------------------

VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr mul(const VarPtr& a, const VarPtr& b);           // elementwise
VarPtr affine(const VarPtr& a, double k, double c);     // k*a + c
VarPtr scale_by(const VarPtr& x, const VarPtr& s);      // s is a scalar variable
VarPtr vsum(const VarPtr& x);                           // -> scalar
VarPtr vmean(const VarPtr& x);                          // -> scalar
VarPtr vlog(const VarPtr& x);
VarPtr vpow(const VarPtr& x, double p);
VarPtr sigmoid(const VarPtr& x);
VarPtr leaky_relu(const VarPtr& x, double slope);
VarPtr clamp(const VarPtr& x, double lo, double hi);    // zero gradient outside
VarPtr concat_channels(const std::vector<VarPtr>& xs);
VarPtr slice_channels(const VarPtr& x, int c0, int c1); // [c0, c1)
VarPtr upsample_nearest(const VarPtr& x, int factor);
VarPtr maxpool2(const VarPtr& x);                       // 2x2, stride 2
VarPtr global_avg_pool(const VarPtr& x);                // -> (N,C,1,1)
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int pad);
VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& b); // x:(N,C,1,1)
VarPtr l2_normalize_rows(const VarPtr& x);              // per sample over (C,H,W)
VarPtr flatten_spatial(const VarPtr& x);                // (N,C,H,W) -> (N,C*H*W,1,1)
VarPtr detach(const VarPtr& x);
// Mean cross entropy of logits (N,K,1,1) against integer labels.
VarPtr cross_entropy_logits(const VarPtr& logits, const std::vector<int>& labels);

} // namespace mdfr::nn
