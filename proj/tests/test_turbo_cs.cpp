#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scom/state_evolution.hpp"
#include "scom/turbo_cs.hpp"

using namespace scom;

TEST_CASE("lmmse posterior variance plug-ins") {
  const CompressionOperator full(3, 16, 1.0);
  const CompressionOperator half(3, 16, 0.5);
  Rng rng(1);
  const GaussianMessage prior{CVec::Zero(16), 1.0};

  GaussianMessage post =
      lmmse_step(rng.cnormal_vector(16), prior, full, 1.0);
  CHECK(post.variance == doctest::Approx(0.5));

  post = lmmse_step(rng.cnormal_vector(8), prior, half, 1.0);
  CHECK(post.variance == doctest::Approx(0.75));

  CHECK_THROWS_AS(
      lmmse_step(CVec::Zero(16), GaussianMessage{CVec::Zero(16), 0.0}, full, 1.0),
      InvalidArgument);
}

TEST_CASE("noiseless unitary lmmse inverts exactly") {
  const CompressionOperator op(9, 32, 1.0);
  Rng rng(2);
  const CVec g = rng.cnormal_vector(32);
  const GaussianMessage post =
      lmmse_step(op.compress(g), GaussianMessage{CVec::Zero(32), 1.0}, op, 0.0);
  CHECK(post.variance == doctest::Approx(0.0));
  CHECK((post.mean - g).norm() < 1e-12);
}

TEST_CASE("lmmse contracts the variance whenever kappa > 0") {
  const CompressionOperator op(5, 16, 0.25);
  Rng rng(3);
  for (double v : {0.01, 0.5, 1.0, 10.0}) {
    for (double sw : {0.0, 1e-3, 1.0}) {
      const GaussianMessage post = lmmse_step(
          rng.cnormal_vector(4), GaussianMessage{CVec::Zero(16), v}, op, sw);
      CHECK(post.variance < v);
      CHECK(post.variance > 0.0);
    }
  }
}

TEST_CASE("extrinsic harmonic identities") {
  Rng rng(4);
  const CVec mean = rng.cnormal_vector(8);
  GaussianMessage ext =
      extrinsic(GaussianMessage{mean, 0.5}, GaussianMessage{CVec::Zero(8), 1.0});
  CHECK(ext.variance == doctest::Approx(1.0));

  // Identical means stay fixed under the extrinsic map.
  ext = extrinsic(GaussianMessage{mean, 0.5}, GaussianMessage{mean, 1.0});
  CHECK((ext.mean - mean).norm() < 1e-12);

  // Random case against a direct evaluation of the formulas.
  const CVec post_mean = rng.cnormal_vector(8);
  const CVec pri_mean = rng.cnormal_vector(8);
  const double vq = 0.3, vp = 0.9;
  ext = extrinsic(GaussianMessage{post_mean, vq}, GaussianMessage{pri_mean, vp});
  const double v_expected = 1.0 / (1.0 / vq - 1.0 / vp);
  CHECK(ext.variance == doctest::Approx(v_expected).epsilon(1e-12));
  const CVec m_expected = v_expected * (post_mean / vq - pri_mean / vp);
  CHECK((ext.mean - m_expected).norm() < 1e-12);
}

TEST_CASE("non-contracting extrinsic steps are clamped and flagged") {
  Rng rng(5);
  const CVec mean = rng.cnormal_vector(4);
  bool clamped = false;
  const GaussianMessage ext = extrinsic(GaussianMessage{mean, 1.0},
                                        GaussianMessage{CVec::Zero(4), 0.5},
                                        &clamped);
  CHECK(clamped);
  CHECK(ext.variance == doctest::Approx(1e8));
  CHECK((ext.mean - mean).norm() == 0.0);
}

TEST_CASE("denoiser reduces to Gaussian shrinkage at sparsity 1") {
  Rng rng(6);
  const double sg = 2.0, v = 0.5;
  const CVec y = rng.cnormal_vector(64, sg + v);
  const DenoiseResult res = bg_denoise(y, v, PriorParams{1.0, sg});
  CHECK((res.mean - (sg / (sg + v)) * y).norm() < 1e-12);
  CHECK(res.variance == doctest::Approx(sg * v / (sg + v)));
}

TEST_CASE("denoiser collapses to zero as sparsity vanishes") {
  Rng rng(7);
  const CVec y = rng.cnormal_vector(32, 1.0);
  const DenoiseResult res = bg_denoise(y, 0.5, PriorParams{1e-12, 1.0});
  CHECK(res.mean.norm() < 1e-6);
  CHECK(res.variance < 1e-6);
}

TEST_CASE("posterior mean matches the slab-sampled oracle") {
  // Importance sampling over the slab only; the spike term is kept exact.
  const double lambda = 0.1, sg = 10.0, v = 0.5;
  Rng rng(8);
  const int draws = 1000000;
  std::vector<cxd> slab(draws);
  for (auto& g : slab) g = rng.cnormal(sg);

  CVec grid(7);
  grid << cxd(0.0, 0.0), cxd(0.5, 0.0), cxd(1.0, 0.5), cxd(-2.0, 1.0),
      cxd(3.0, 0.0), cxd(0.0, -4.0), cxd(5.0, 2.0);

  CVec mc(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const cxd y = grid[i];
    cxd numerator = 0.0;
    double slab_mass = 0.0;
    for (const cxd& g : slab) {
      const double w = std::exp(-std::norm(y - g) / v);
      numerator += g * w;
      slab_mass += w;
    }
    const double spike_mass = std::exp(-std::norm(y) / v);
    mc[i] = lambda * numerator /
            (lambda * slab_mass + (1.0 - lambda) * spike_mass * draws);
  }

  const DenoiseResult res = bg_denoise(grid, v, PriorParams{lambda, sg});
  CHECK((res.mean - mc).norm() / mc.norm() < 0.01);
}

TEST_CASE("denoiser beats identity and the best linear shrinker") {
  const double lambda = 0.1, sg = 10.0, v = 0.5;
  const int n = 10000;
  Rng rng(9);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, n, lambda, sg);
  CVec y = g;
  for (int i = 0; i < n; ++i) y[i] += rng.cnormal(v);

  const DenoiseResult res = bg_denoise(y, v, PriorParams{lambda, sg});
  const double mse_bg = (res.mean - g).squaredNorm() / n;
  const double mse_id = (y - g).squaredNorm() / n;
  const double tau = lambda * sg;  // signal second moment
  const double mse_lin = (tau / (tau + v) * y - g).squaredNorm() / n;
  CHECK(mse_bg <= mse_id);
  CHECK(mse_bg <= mse_lin);
}

TEST_CASE("EM refinement is self-consistent at the true prior") {
  const double lambda = 0.1, sg = 5.0, v = 0.5;
  const int n = 10000;
  Rng rng(10);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, n, lambda, sg);
  CVec y = g;
  for (int i = 0; i < n; ++i) y[i] += rng.cnormal(v);

  const PriorParams updated = em_update_prior(y, v, PriorParams{lambda, sg});
  CHECK(updated.sparsity == doctest::Approx(lambda).epsilon(0.05));
  CHECK(updated.nonzero_variance == doctest::Approx(sg).epsilon(0.05));
}

TEST_CASE("EM keeps a pure Gaussian prior pure") {
  Rng rng(11);
  const CVec y = rng.cnormal_vector(256, 2.0);
  const PriorParams updated = em_update_prior(y, 0.5, PriorParams{1.0, 1.5});
  CHECK(updated.sparsity == doctest::Approx(1.0));
}

TEST_CASE("EM lowers sparsity on an all-zero observation") {
  const PriorParams updated =
      em_update_prior(CVec::Zero(128), 1e-4, PriorParams{0.3, 1.0});
  CHECK(updated.sparsity < 0.3);
}

TEST_CASE("full recovery in the noiseless unitary case") {
  const CompressionOperator op(12, 64, 1.0);
  Rng rng(12);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, 64, 0.2, 5.0);
  const TurboResult res =
      run_turbo_cs(op.compress(g), op, 0.0, PriorParams{0.2, 5.0});
  CHECK(res.iterations == 1);
  CHECK((res.estimate - g).norm() < 1e-6 * g.norm());
}

TEST_CASE("zero observation yields the zero estimate") {
  const CompressionOperator op(13, 32, 0.5);
  const TurboResult res = run_turbo_cs(CVec::Zero(op.compressed_len()), op,
                                       1e-3, PriorParams{0.2, 5.0});
  CHECK(res.estimate.norm() == 0.0);
}

TEST_CASE("recovery tracks the variance recursion within 20 percent") {
  const int half = 4096;
  const double lambda = 0.05, sg = 20.0, kappa = 0.5, sigma_w = 1e-3;
  const CompressionOperator op(14, half, kappa);
  Rng rng(14);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, half, lambda, sg);
  CVec r_hat = op.compress(g);
  for (int i = 0; i < r_hat.size(); ++i) r_hat[i] += rng.cnormal(sigma_w);

  const PriorParams prior{lambda, sg};
  GaussianMessage msg_a{CVec::Zero(half), 1.0};
  double v_pred = 1.0;
  for (int it = 0; it < 6; ++it) {
    const GaussianMessage post_a = lmmse_step(r_hat, msg_a, op, sigma_w);
    const GaussianMessage msg_b = extrinsic(post_a, msg_a);
    const DenoiseResult den = bg_denoise(msg_b.mean, msg_b.variance, prior);

    const double z = 1.0 / ((v_pred + sigma_w) / kappa - v_pred);
    const double pred_mse = mmse_scalar(z, prior);
    const double emp_mse = (den.mean - g).squaredNorm() / half;
    CHECK(emp_mse == doctest::Approx(pred_mse).epsilon(0.20));
    v_pred = 1.0 / (1.0 / pred_mse - z);

    msg_a = extrinsic(GaussianMessage{den.mean, den.variance}, msg_b);
    if (den.variance < 1e-10) break;
  }
}

TEST_CASE("extrinsic errors decorrelate from the prior error") {
  const int half = 4096;
  const double lambda = 0.05, sg = 20.0, sigma_w = 1e-3;
  const CompressionOperator op(15, half, 0.5);
  Rng rng(15);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, half, lambda, sg);
  CVec r_hat = op.compress(g);
  for (int i = 0; i < r_hat.size(); ++i) r_hat[i] += rng.cnormal(sigma_w);

  const GaussianMessage prior_msg{CVec::Zero(half), 1.0};
  const GaussianMessage post = lmmse_step(r_hat, prior_msg, op, sigma_w);
  const GaussianMessage ext = extrinsic(post, prior_msg);

  const CVec err_ext = ext.mean - g;
  const CVec err_pri = prior_msg.mean - g;
  const double corr = std::abs(err_ext.dot(err_pri)) /
                      (err_ext.norm() * err_pri.norm());
  CHECK(corr < 0.05);
}

TEST_CASE("flags stay clear on regular and degenerate runs") {
  // Both stages contract by construction (v_post < v_pri is asserted above),
  // so sustained variance growth cannot be reached from valid inputs and the
  // divergence flag only guards floating-point corners; the clamp mechanism
  // itself is covered by the direct extrinsic test. Converging runs must not
  // raise either flag.
  const CompressionOperator op(16, 64, 1.0);
  Rng rng(16);
  const CVec g = oracle::draw_bernoulli_gaussian(rng, 64, 0.2, 5.0);
  const TurboResult res =
      run_turbo_cs(op.compress(g), op, 0.0, PriorParams{0.2, 5.0});
  CHECK(!res.diverged);
  CHECK((res.estimate - g).norm() < 1e-6 * g.norm());

  const CompressionOperator op2(17, 256, 0.5);
  const CVec g2 = oracle::draw_bernoulli_gaussian(rng, 256, 0.1, 10.0);
  CVec r_hat = op2.compress(g2);
  for (int i = 0; i < r_hat.size(); ++i) r_hat[i] += rng.cnormal(1e-3);
  const TurboResult res2 = run_turbo_cs(r_hat, op2, 1e-3, PriorParams{0.1, 10.0});
  CHECK(!res2.diverged);
  CHECK(!res2.clamped);
}
