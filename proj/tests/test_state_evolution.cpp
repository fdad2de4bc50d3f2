#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scom/state_evolution.hpp"

using namespace scom;

TEST_CASE("scalar mmse closed form for the Gaussian prior") {
  CHECK(mmse_scalar(1.0, PriorParams{1.0, 1.0}) == doctest::Approx(0.5));
  CHECK(mmse_scalar(4.0, PriorParams{1.0, 2.0}) ==
        doctest::Approx(2.0 / (1.0 + 2.0 * 4.0)));
  CHECK(mmse_scalar(1e12, PriorParams{1.0, 1.0}) < 1e-11);
  CHECK_THROWS_AS(mmse_scalar(0.0, PriorParams{1.0, 1.0}), InvalidArgument);
}

TEST_CASE("scalar mmse matches Monte Carlo") {
  const double lambda = 0.1, sg = 10.0, z = 1.0;
  const PriorParams prior{lambda, sg};
  const double v = 1.0 / z;
  const double shrink = sg / (sg + v);
  const double log_base =
      std::log((1.0 - lambda) / lambda) + std::log((sg + v) / v);
  const double quad = sg / (v * (sg + v));

  Rng rng(1);
  const long draws = 10000000;
  double acc = 0.0;
  for (long i = 0; i < draws; ++i) {
    const cxd g = rng.uniform() < lambda ? rng.cnormal(sg) : cxd(0, 0);
    const cxd y = g + rng.cnormal(v);
    const double pi = 1.0 / (1.0 + std::exp(log_base - quad * std::norm(y)));
    acc += std::norm(g - pi * shrink * y);
  }
  const double mc = acc / draws;
  CHECK(mmse_scalar(z, prior) == doctest::Approx(mc).epsilon(0.005));
}

TEST_CASE("scalar mmse is decreasing in z and bounded") {
  const PriorParams prior{0.2, 5.0};
  double previous = 1e300;
  for (double z : {0.01, 0.1, 1.0, 10.0, 100.0, 1e4}) {
    const double value = mmse_scalar(z, prior);
    CHECK(value < previous);
    CHECK(value <= prior.sparsity * prior.nonzero_variance + 1e-12);
    CHECK(value <= 1.0 / z + 1e-12);
    previous = value;
  }
}

TEST_CASE("fixed point vanishes in the exact-recovery limit") {
  CHECK(se_fixed_point(1.0, 0.0, PriorParams{0.1, 10.0}) == 0.0);
}

TEST_CASE("fixed point for the full-measurement Gaussian prior") {
  // With kappa = 1 the linear stage's extrinsic noise is exactly sigma_w and
  // the Gaussian-prior recursion settles at v = sigma_g in one step.
  for (double sw : {0.01, 0.3, 2.0}) {
    CHECK(se_fixed_point(1.0, sw, PriorParams{1.0, 2.5}) ==
          doctest::Approx(2.5).epsilon(1e-8));
  }
}

TEST_CASE("fixed point directions over parameter grids") {
  const PriorParams prior{0.1, 10.0};
  for (double kappa : {0.3, 0.5, 0.8, 1.0}) {
    double previous = 0.0;
    for (double sw : {1e-4, 1e-3, 1e-2, 1e-1}) {
      const double v = se_fixed_point(kappa, sw, prior);
      CHECK(v >= previous - 1e-14);
      previous = v;
    }
  }
  for (double sw : {1e-4, 1e-3, 1e-2}) {
    double previous = 1e300;
    for (double kappa : {0.3, 0.5, 0.8, 1.0}) {
      const double v = se_fixed_point(kappa, sw, prior);
      CHECK(v <= previous + 1e-14);
      previous = v;
    }
  }
}

TEST_CASE("variance sequence from v = 1 is non-increasing for unit-power priors") {
  for (double lambda : {0.05, 0.2, 1.0}) {
    const PriorParams prior{lambda, 1.0 / lambda};
    for (double kappa : {0.4, 0.7, 1.0}) {
      for (double sw : {1e-4, 1e-2}) {
        const SeTrace trace = se_recursion(kappa, sw, prior);
        CHECK(!trace.diverged);
        double previous = 1.0;
        for (const auto& [v, z] : trace.points) {
          CHECK(v <= previous * (1.0 + 1e-12));
          previous = v;
        }
      }
    }
  }
}

TEST_CASE("sparsification bound arithmetic") {
  AnalysisParams params;
  params.devices = 1;
  params.sparsity = 0.5;
  params.grad_bound_const = 1.0;
  params.grad_bound_slope = 0.0;
  CHECK(sparsification_bound(params, 123.0) == doctest::Approx(4.0));

  params.sparsity = 0.0;
  CHECK(sparsification_bound(params, 1.0) == 0.0);

  params.sparsity = 1.0;
  CHECK_THROWS_AS(sparsification_bound(params, 1.0), InvalidArgument);
}

TEST_CASE("sparsified trajectories respect the bound with measured constants") {
  // Simulated error-feedback trajectory; chi constants chosen as the exact
  // worst case over the trajectory, so the bound must dominate everywhere.
  Rng rng(2);
  const int half = 128;
  const double lambda = 0.25;
  const int devices = 4;
  std::vector<DeviceCodecState> states;
  for (int m = 0; m < devices; ++m) states.emplace_back(half);

  std::vector<CVec> gradients(devices);
  std::vector<double> sp_err_sq, grad_sq;
  for (int round = 0; round < 15; ++round) {
    CVec mean_grad = CVec::Zero(half);
    CVec mean_sparse = CVec::Zero(half);
    double worst = 0.0;
    for (int m = 0; m < devices; ++m) {
      gradients[m] = rng.cnormal_vector(half);
      worst = std::max(worst, gradients[m].squaredNorm());
      mean_grad += gradients[m] / devices;
      mean_sparse += accumulate_sparsify(gradients[m], states[m], lambda) /
                     double(devices);
    }
    sp_err_sq.push_back((mean_grad - mean_sparse).squaredNorm());
    grad_sq.push_back(worst);
  }
  AnalysisParams params;
  params.devices = devices;
  params.sparsity = lambda;
  params.grad_bound_const = *std::max_element(grad_sq.begin(), grad_sq.end());
  params.grad_bound_slope = 0.0;
  for (double err : sp_err_sq)
    CHECK(err <= sparsification_bound(params, 0.0));
}

TEST_CASE("convergence constants") {
  AnalysisParams params;
  params.smoothness = 2.0;
  params.strong_convexity = 1.0;
  params.sparsity = 0.0;
  params.grad_bound_slope = 7.0;
  params.grad_bound_const = 3.0;
  params.devices = 5;
  params.grad_scale = 1.5;

  ConvergenceConstants cc = convergence_constants(params, 0.0);
  CHECK(cc.psi == doctest::Approx(0.5));  // 1 - mu/omega at lambda = 0
  CHECK(cc.c == doctest::Approx(0.0));

  params.strong_convexity = params.smoothness;
  cc = convergence_constants(params, 0.0);
  CHECK(cc.psi == doctest::Approx(0.0));

  // C is linear and increasing in the fixed point.
  params.sparsity = 0.1;
  const double c0 = convergence_constants(params, 0.1).c;
  const double c1 = convergence_constants(params, 0.2).c;
  CHECK(c1 > c0);
  CHECK(c1 - c0 == doctest::Approx(0.1 * params.grad_scale / params.smoothness));
}

TEST_CASE("contraction factor grows with sparsity ratio and device count") {
  AnalysisParams params;
  params.smoothness = 2.0;
  params.strong_convexity = 0.5;
  params.grad_bound_slope = 0.3;
  params.devices = 4;

  params.sparsity = 0.05;
  const double psi_small = convergence_constants(params, 0.0).psi;
  params.sparsity = 0.2;
  const double psi_large = convergence_constants(params, 0.0).psi;
  CHECK(psi_large > psi_small);

  params.devices = 16;
  CHECK(convergence_constants(params, 0.0).psi > psi_large);
}

TEST_CASE("bound trajectory") {
  const std::vector<double> zero_c(4, 0.0);
  const auto geometric = bound_trajectory(0.5, 8.0, zero_c);
  for (size_t t = 0; t < geometric.size(); ++t)
    CHECK(geometric[t] == doctest::Approx(8.0 * std::pow(0.5, double(t))));

  const std::vector<double> cs = {0.3, 0.4, 0.5};
  const auto flat = bound_trajectory(0.0, 8.0, cs);
  CHECK(flat[1] == doctest::Approx(0.3));
  CHECK(flat[2] == doctest::Approx(0.4));
  CHECK(flat[3] == doctest::Approx(0.5));

  // Direct-summation oracle for constant C.
  const std::vector<double> const_c(3, 0.3);
  const auto bound = bound_trajectory(0.5, 2.0, const_c);
  for (size_t t = 0; t < bound.size(); ++t) {
    double direct = 2.0 * std::pow(0.5, double(t));
    for (size_t tau = 0; tau < t; ++tau)
      direct += std::pow(0.5, double(t - 1 - tau)) * 0.3;
    CHECK(bound[t] == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("stream scan follows the aggregation-error step") {
  // Synthetic aggregation MSE: cheap while the antennas can separate the
  // streams, two orders worse above that; the scan must pick the knee.
  AnalysisParams params;
  params.smoothness = 1.0;
  params.strong_convexity = 0.5;
  params.grad_bound_const = 1.0;
  params.grad_bound_slope = 0.0;
  params.devices = 4;
  params.sparsity = 0.05;
  params.grad_scale = 1.0;
  const PriorParams prior{0.05, 20.0};

  auto sigma_w_of = [](int ns) { return ns <= 2 ? 1e-4 : 1e-1; };
  const StreamScan scan =
      scan_streams(256, 2, 4, 8192, prior, params, sigma_w_of);
  CHECK(scan.best_streams == 2);
  CHECK(scan.rows.size() == 6);
  CHECK(scan.rows[1].kappa == doctest::Approx(2.0 * 256 / 4096.0));

  // Single-antenna system: anything past one stream exceeds the channel
  // rank. The channel-use budget is chosen so one stream already lands in the
  // recoverable compression regime.
  auto rank_one = [](int ns) { return ns <= 1 ? 1e-4 : 0.5; };
  const StreamScan single =
      scan_streams(2048, 1, 1, 8192, prior, params, rank_one);
  CHECK(single.best_streams == 1);
}
