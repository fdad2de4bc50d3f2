#include "scom/turbo_cs.hpp"

#include <cmath>

namespace scom {

namespace {

constexpr double kClampVariance = 1e8;
constexpr double kVarianceFloor = 1e-15;

}  // namespace

GaussianMessage lmmse_step(const CVec& r_hat, const GaussianMessage& prior,
                           const CompressionOperator& op, double sigma_w) {
  if (prior.variance <= 0.0)
    throw InvalidArgument("lmmse: prior variance must be positive");
  if (sigma_w < 0.0) throw InvalidArgument("lmmse: negative noise variance");
  if (r_hat.size() != op.compressed_len())
    throw InvalidArgument("lmmse: observation length mismatch");

  const double v = prior.variance;
  const double gain = v / (v + sigma_w);
  GaussianMessage post;
  post.mean = prior.mean + gain * op.adjoint(r_hat - op.compress(prior.mean));
  post.variance = v - op.kappa() * v * gain;
  return post;
}

GaussianMessage extrinsic(const GaussianMessage& post,
                          const GaussianMessage& pri, bool* clamped) {
  if (clamped) *clamped = false;
  const double vq = std::max(post.variance, kVarianceFloor);
  const double vp = pri.variance;
  GaussianMessage ext;
  if (vq >= vp) {
    // Non-contracting step: keep the iteration alive with a flat message.
    if (clamped) *clamped = true;
    ext.variance = kClampVariance;
    ext.mean = post.mean;
    return ext;
  }
  ext.variance = 1.0 / (1.0 / vq - 1.0 / vp);
  ext.mean = ext.variance * (post.mean / vq - pri.mean / vp);
  return ext;
}

DenoiseResult bg_denoise(const CVec& observed, double noise_var,
                         const PriorParams& prior) {
  prior.validate();
  const double v = std::max(noise_var, kVarianceFloor);
  const double sg = prior.nonzero_variance;
  const double lam = prior.sparsity;

  // log((1-lam)/lam) + log((sg+v)/v) - |y|^2 sg / (v (sg+v)); responsibility
  // is 1/(1+exp(.)), stable at both extremes.
  const double log_base =
      std::log1p(-std::min(lam, 1.0 - 1e-300)) - std::log(lam) + std::log((sg + v) / v);
  const double quad = sg / (v * (sg + v));
  const double shrink = sg / (sg + v);
  const double slab_var = sg * v / (sg + v);

  const Eigen::Index n = observed.size();
  DenoiseResult res;
  res.mean.resize(n);
  res.responsibility.resize(n);
  double var_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y2 = std::norm(observed[i]);
    const double pi = 1.0 / (1.0 + std::exp(log_base - quad * y2));
    const cxd slab_mean = shrink * observed[i];
    res.mean[i] = pi * slab_mean;
    res.responsibility[i] = pi;
    var_sum += pi * slab_var + pi * (1.0 - pi) * std::norm(slab_mean);
  }
  res.variance = var_sum / static_cast<double>(n);
  return res;
}

PriorParams em_update_prior(const CVec& observed, double noise_var,
                            const PriorParams& prior) {
  prior.validate();
  const DenoiseResult den = bg_denoise(observed, noise_var, prior);
  const double v = std::max(noise_var, kVarianceFloor);
  const double sg = prior.nonzero_variance;
  const double shrink = sg / (sg + v);
  const double slab_var = sg * v / (sg + v);

  double resp_sum = 0.0;
  double second_moment = 0.0;
  for (Eigen::Index i = 0; i < observed.size(); ++i) {
    const double pi = den.responsibility[i];
    resp_sum += pi;
    second_moment += pi * (std::norm(shrink * observed[i]) + slab_var);
  }
  PriorParams next;
  next.sparsity = std::clamp(resp_sum / static_cast<double>(observed.size()),
                             1e-6, 1.0);
  next.nonzero_variance =
      resp_sum > 0.0 ? std::max(second_moment / resp_sum, kVarianceFloor)
                     : prior.nonzero_variance;
  return next;
}

TurboResult run_turbo_cs(const CVec& r_hat, const CompressionOperator& op,
                         double sigma_w, const PriorParams& prior,
                         const TurboOptions& options) {
  prior.validate();
  if (r_hat.size() != op.compressed_len())
    throw InvalidArgument("turbo: observation length mismatch");

  TurboResult res;
  res.prior = prior;

  GaussianMessage msg_a;  // a-priori input of the LMMSE stage
  msg_a.mean = CVec::Zero(op.half_dim());
  msg_a.variance = 1.0;

  CVec prev_ext_a = msg_a.mean;
  CVec prev_ext_b = msg_a.mean;
  int rising = 0;

  for (int it = 0; it < options.max_iter; ++it) {
    bool clamped = false;

    const GaussianMessage post_a = lmmse_step(r_hat, msg_a, op, sigma_w);
    GaussianMessage msg_b = extrinsic(post_a, msg_a, &clamped);
    res.clamped |= clamped;
    if (options.damping > 0.0 && it > 0)
      msg_b.mean = (1.0 - options.damping) * msg_b.mean + options.damping * prev_ext_a;
    prev_ext_a = msg_b.mean;

    if (options.em_prior)
      res.prior = em_update_prior(msg_b.mean, msg_b.variance, res.prior);

    const DenoiseResult den = bg_denoise(msg_b.mean, msg_b.variance, res.prior);
    res.estimate = den.mean;
    res.final_variance = den.variance;
    res.iterations = it + 1;
    res.variance_trace.emplace_back(msg_a.variance, den.variance);

    GaussianMessage post_b{den.mean, den.variance};
    GaussianMessage next_a = extrinsic(post_b, msg_b, &clamped);
    res.clamped |= clamped;
    if (options.damping > 0.0 && it > 0)
      next_a.mean = (1.0 - options.damping) * next_a.mean + options.damping * prev_ext_b;
    prev_ext_b = next_a.mean;

    if (den.variance <= 1e-14) break;  // recovery already at the noise floor

    const double dv = std::abs(next_a.variance - msg_a.variance);
    rising = next_a.variance > msg_a.variance ? rising + 1 : 0;
    if (rising >= 5) {
      res.diverged = true;
      break;
    }
    msg_a = next_a;
    if (dv < options.tol) break;
  }
  return res;
}

}  // namespace scom
