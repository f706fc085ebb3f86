#include "mdfr/losses.hpp"

#include <cmath>

namespace mdfr::losses {

using nn::VarPtr;

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda4, lambda5})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgumentError("loss weights must be finite and non-negative");
}

namespace {

// Per-sample squared norm of the difference, averaged over the batch.
// Embeddings are (N,D,1,1); the inner reduction is the exact vector norm.
VarPtr mean_row_sqnorm(const VarPtr& d) {
  const int n = d->value.n();
  VarPtr sq = nn::mul(d, d);
  VarPtr total = nn::vsum(sq);
  return nn::affine(total, 1.0 / std::max(1, n), 0.0);
}

} // namespace

VarPtr loss_id(const VarPtr& emb_x, const VarPtr& emb_y) {
  if (!emb_x->value.same_shape(emb_y->value))
    throw ShapeError("loss_id: embedding shape mismatch");
  VarPtr nx = nn::l2_normalize_rows(emb_x);
  VarPtr ny = nn::l2_normalize_rows(emb_y);
  return mean_row_sqnorm(nn::sub(nx, ny));
}

VarPtr loss_pixel(const VarPtr& a, const VarPtr& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError("loss_pixel: shape mismatch");
  VarPtr d = nn::sub(a, b);
  return nn::vmean(nn::mul(d, d));
}

VarPtr loss_frn(const VarPtr& target, const VarPtr& output, const VarPtr& emb_target,
                const VarPtr& emb_output, const LossWeights& w) {
  VarPtr pix = loss_pixel(target, output);
  VarPtr id = loss_id(emb_target, emb_output);
  return nn::add(pix, nn::affine(id, w.lambda1, 0.0));
}

VarPtr loss_adv_d(const VarPtr& score_real, const VarPtr& score_fake) {
  if (score_real->value.numel() != score_fake->value.numel())
    throw ShapeError("loss_adv_d: score count mismatch");
  VarPtr real_term = nn::vmean(nn::vlog(score_real));
  VarPtr fake_term = nn::vmean(nn::vlog(nn::affine(score_fake, -1.0, 1.0)));
  return nn::add(real_term, fake_term);
}

VarPtr loss_adv_g(const VarPtr& score_fake, bool non_saturating) {
  if (non_saturating)
    return nn::affine(nn::vmean(nn::vlog(score_fake)), -1.0, 0.0);
  return nn::vmean(nn::vlog(nn::affine(score_fake, -1.0, 1.0)));
}

VarPtr loss_ffn(const VarPtr& target, const VarPtr& output, const VarPtr& emb_target,
                const VarPtr& emb_output, const VarPtr& pcd_score_fake,
                const VarPtr& icd_score_fake, const LossWeights& w, bool non_saturating) {
  VarPtr pix = loss_pixel(target, output);
  VarPtr id = loss_id(emb_target, emb_output);
  VarPtr adv = nn::add(loss_adv_g(pcd_score_fake, non_saturating),
                       loss_adv_g(icd_score_fake, non_saturating));
  return nn::add(nn::add(pix, nn::affine(id, w.lambda2, 0.0)), nn::affine(adv, w.lambda3, 0.0));
}

VarPtr loss_fa(const VarPtr& feats_teacher, const VarPtr& feats_student) {
  if (!feats_teacher->value.same_shape(feats_student->value))
    throw ShapeError("loss_fa: feature shape mismatch");
  return loss_pixel(feats_teacher, feats_student);
}

VarPtr loss_ti(const VarPtr& teacher_output, const VarPtr& student_output,
               const VarPtr& emb_teacher, const VarPtr& emb_student, const VarPtr& fa,
               const LossWeights& w) {
  VarPtr pix = loss_pixel(teacher_output, student_output);
  VarPtr id = loss_id(emb_teacher, emb_student);
  return nn::add(nn::add(pix, nn::affine(id, w.lambda4, 0.0)), nn::affine(fa, w.lambda5, 0.0));
}

double loss_id_value(const nn::Tensor& emb_x, const nn::Tensor& emb_y) {
  return loss_id(nn::Variable::leaf(emb_x), nn::Variable::leaf(emb_y))->value.item();
}

double loss_pixel_value(const nn::Tensor& a, const nn::Tensor& b) {
  return loss_pixel(nn::Variable::leaf(a), nn::Variable::leaf(b))->value.item();
}

} // namespace mdfr::losses
