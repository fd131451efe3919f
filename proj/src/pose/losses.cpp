#include "font/pose/losses.hpp"

#include <string>
#include <vector>

#include "font/core/errors.hpp"

namespace font::pose {

Var ssim_loss(const Var& pred, const Var& gt, double c1, double c2) {
  if (pred.shape().size() != 2 || gt.shape() != pred.shape())
    throw ShapeError("ssim_loss expects two {T, D} trajectories of equal shape");
  const int T = pred.shape()[0];
  const int D = pred.shape()[1];
  if (T < 1) throw EmptyInputError("ssim_loss: empty trajectories");

  Var pt = ad::transpose2d(pred);  // {D, T}
  Var gtt = ad::transpose2d(gt);
  Var acc;
  for (int d = 0; d < D; ++d) {
    Var p = ad::reshape(ad::slice0(pt, d, 1), {T});
    Var g = ad::reshape(ad::slice0(gtt, d, 1), {T});
    Var mp = ad::mean(p);
    Var mg = ad::mean(g);
    Var dp = ad::sub(p, mp);
    Var dg = ad::sub(g, mg);
    Var vp = ad::mean(ad::mul(dp, dp));
    Var vg = ad::mean(ad::mul(dg, dg));
    Var cov = ad::mean(ad::mul(dp, dg));
    Var num = ad::mul(ad::add_scalar(ad::mul_scalar(ad::mul(mp, mg), 2.0), c1),
                      ad::add_scalar(ad::mul_scalar(cov, 2.0), c2));
    Var den = ad::mul(ad::add_scalar(ad::add(ad::mul(mp, mp), ad::mul(mg, mg)), c1),
                      ad::add_scalar(ad::add(vp, vg), c2));
    Var s = ad::div(num, den);
    acc = d == 0 ? s : ad::add(acc, s);
  }
  return ad::add_scalar(ad::neg(ad::mul_scalar(acc, 1.0 / D)), 1.0);
}

Var kl_loss(const LatentDist& dist) {
  if (dist.mu.shape() != dist.log_var.shape())
    throw ShapeError("kl_loss: mean and log-variance shapes differ");
  Var inner = ad::sub(ad::add(ad::exp_op(dist.log_var), ad::mul(dist.mu, dist.mu)),
                      ad::add_scalar(dist.log_var, 1.0));
  return ad::mul_scalar(ad::sum(inner), 0.5);
}

AdversarialLosses discriminator_loss(const PoseCvaeModel& model, const Var& real_deltas,
                                     const Var& fake_deltas) {
  constexpr double kEps = 1e-6;
  Var d_real = model.discriminate(real_deltas);
  Var d_fake_det = model.discriminate(ad::detach(fake_deltas));
  Var d_fake = model.discriminate(fake_deltas);
  Var d_loss = ad::add(ad::log_op(ad::clamp_min(d_real, kEps)),
                       ad::log_op(ad::clamp_min(ad::add_scalar(ad::neg(d_fake_det), 1.0), kEps)));
  Var g_loss = ad::neg(ad::log_op(ad::clamp_min(d_fake, kEps)));
  return {d_loss, g_loss, d_real, d_fake};
}

Var total_pose_loss(const Var& recon, const Var& kl, const Var& g_adv, double lambda_recon,
                    double lambda_kl, double lambda_adv) {
  if (recon.numel() != 1 || kl.numel() != 1 || g_adv.numel() != 1)
    throw ShapeError("total_pose_loss expects scalar components");
  return ad::add(ad::add(ad::mul_scalar(recon, lambda_recon), ad::mul_scalar(kl, lambda_kl)),
                 ad::mul_scalar(g_adv, lambda_adv));
}

}  // namespace font::pose
