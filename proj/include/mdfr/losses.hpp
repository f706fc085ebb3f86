#pragma once

#include "mdfr/autograd.hpp"

namespace mdfr::losses {

// Weighting constants of the full objective suite. Defaults follow the
// implementation constants in the harness config.
struct LossWeights {
  double lambda1 = 1e4; // identity term, restoration phase
  double lambda2 = 1e4; // identity term, frontalization phase
  double lambda3 = 1e4; // adversarial terms, frontalization phase
  double lambda4 = 0.1; // identity term, task-integrated phase
  double lambda5 = 1.0; // feature alignment term

  void validate() const;
};

// Squared distance of unit-normalised embeddings, averaged over the batch.
// Equals 2 - 2*cos(x, y) per sample; range [0, 4].
nn::VarPtr loss_id(const nn::VarPtr& emb_x, const nn::VarPtr& emb_y);

// Mean over all entries of the squared difference. Used for both the
// restoration and frontalization pixel objectives and feature alignment.
nn::VarPtr loss_pixel(const nn::VarPtr& a, const nn::VarPtr& b);

// Restoration objective: pixel term plus weighted identity term.
nn::VarPtr loss_frn(const nn::VarPtr& target, const nn::VarPtr& output,
                    const nn::VarPtr& emb_target, const nn::VarPtr& emb_output,
                    const LossWeights& w);

// Conditional adversarial objective of one discriminator:
// log(s_real) + log(1 - s_fake). The discriminator maximises this, so its
// training step descends the negation.
nn::VarPtr loss_adv_d(const nn::VarPtr& score_real, const nn::VarPtr& score_fake);

// Generator-side adversarial term. The literal min-max form log(1 - s_fake)
// by default; the non-saturating variant -log(s_fake) is available for
// stability-sensitive runs.
nn::VarPtr loss_adv_g(const nn::VarPtr& score_fake, bool non_saturating = false);

// Frontalization objective: pixel + weighted identity + weighted
// generator-side adversarial terms from both conditioned discriminators.
nn::VarPtr loss_ffn(const nn::VarPtr& target, const nn::VarPtr& output,
                    const nn::VarPtr& emb_target, const nn::VarPtr& emb_output,
                    const nn::VarPtr& pcd_score_fake, const nn::VarPtr& icd_score_fake,
                    const LossWeights& w, bool non_saturating = false);

// Feature alignment: mean squared discrepancy between teacher and student
// last-block feature maps.
nn::VarPtr loss_fa(const nn::VarPtr& feats_teacher, const nn::VarPtr& feats_student);

// Task-integrated objective: pixel + weighted identity against the teacher
// output, plus weighted feature alignment.
nn::VarPtr loss_ti(const nn::VarPtr& teacher_output, const nn::VarPtr& student_output,
                   const nn::VarPtr& emb_teacher, const nn::VarPtr& emb_student,
                   const nn::VarPtr& fa, const LossWeights& w);

// Convenience wrappers over plain tensors for evaluation and tests.
double loss_id_value(const nn::Tensor& emb_x, const nn::Tensor& emb_y);
double loss_pixel_value(const nn::Tensor& a, const nn::Tensor& b);

} // namespace mdfr::losses
