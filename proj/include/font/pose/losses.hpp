#pragma once

// Training losses for the pose sequence model: a structural-similarity
// reconstruction loss over pose trajectories, the analytic Gaussian KL,
// and the non-saturating adversarial pair.

#include "font/core/autodiff.hpp"
#include "font/pose/cvae.hpp"

namespace font::pose {

using ad::Var;

// 1 - SSIM between two {T, D} trajectories. Mean, variance, and covariance
// are taken per channel over the time axis, the per-channel similarities
// are averaged, and the result lies in [0, 2]. Identical inputs score
// exactly 0 and the loss is symmetric in its arguments.
Var ssim_loss(const Var& pred, const Var& gt, double c1 = 1e-4, double c2 = 9e-4);

// KL(N(mu, diag(exp(log_var))) || N(0, I)) =
//   0.5 * sum(exp(log_var) + mu^2 - 1 - log_var).
Var kl_loss(const LatentDist& dist);

struct AdversarialLosses {
  Var d_loss;  // log D(real) + log(1 - D(fake)); the discriminator MAXIMIZES
               // this, so its training step minimizes the negation.
  Var g_loss;  // -log D(fake), the non-saturating generator objective
  Var d_real;  // D(real), detached from the generator
  Var d_fake;  // D(fake)
};

// Scores real and fake delta clips with the model's discriminator. The fake
// clip is detached inside d_loss so discriminator updates never reach the
// generator; g_loss keeps the full graph. Probabilities are clamped at 1e-6
// away from {0, 1} before the logs.
AdversarialLosses discriminator_loss(const PoseCvaeModel& model, const Var& real_deltas,
                                     const Var& fake_deltas);

// lambda_recon * recon + lambda_kl * kl + lambda_adv * g_adv.
Var total_pose_loss(const Var& recon, const Var& kl, const Var& g_adv,
                    double lambda_recon, double lambda_kl, double lambda_adv);

}  // namespace font::pose
