#include "scom/state_evolution.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace scom {

namespace {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Laguerre rule via Golub-Welsch on the Jacobi matrix of the Laguerre
// recurrence (diagonal 2i+1, off-diagonal i).
Quadrature gauss_laguerre(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    jacobi(i, i) = 2.0 * i + 1.0;
    if (i + 1 < n) {
      jacobi(i, i + 1) = i + 1.0;
      jacobi(i + 1, i) = i + 1.0;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    q.nodes[i] = solver.eigenvalues()[i];
    const double v0 = solver.eigenvectors()(0, i);
    q.weights[i] = v0 * v0;  // total measure of e^{-x} dx is 1
  }
  return q;
}

const Quadrature& cached_rule(int n) {
  static std::mutex mutex;
  static std::map<int, Quadrature> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_laguerre(n)).first;
  return it->second;
}

// Posterior variance of a BG entry given |y|^2 = u under noise variance v.
double bg_posterior_var(double u, double v, double lambda, double sigma_g) {
  const double shrink = sigma_g / (sigma_g + v);
  const double slab_var = sigma_g * v / (sigma_g + v);
  const double log_base = std::log1p(-std::min(lambda, 1.0 - 1e-300)) -
                          std::log(lambda) + std::log((sigma_g + v) / v);
  const double quad = sigma_g / (v * (sigma_g + v));
  const double pi = 1.0 / (1.0 + std::exp(log_base - quad * u));
  return pi * slab_var + pi * (1.0 - pi) * shrink * shrink * u;
}

}  // namespace

double mmse_scalar(double z, const PriorParams& prior, int nodes) {
  prior.validate();
  if (z <= 0.0) throw InvalidArgument("mmse: z must be positive");
  if (!std::isfinite(z)) return 0.0;
  const double v = 1.0 / z;
  const double lambda = prior.sparsity;
  const double sigma_g = prior.nonzero_variance;
  if (lambda >= 1.0) return sigma_g * v / (sigma_g + v);  // pure Gaussian

  // |y|^2 is exponential under each mixture branch; integrate both branches
  // with a Gauss-Laguerre rule.
  const Quadrature& q = cached_rule(nodes);
  const double tau_slab = sigma_g + v;
  const double tau_spike = v;
  double acc = 0.0;
  for (size_t i = 0; i < q.nodes.size(); ++i) {
    const double x = q.nodes[i];
    acc += q.weights[i] *
           (lambda * bg_posterior_var(tau_slab * x, v, lambda, sigma_g) +
            (1.0 - lambda) * bg_posterior_var(tau_spike * x, v, lambda, sigma_g));
  }
  return acc;
}

SeTrace se_recursion(double kappa, double sigma_w, const PriorParams& prior,
                     double tol, int max_iter) {
  prior.validate();
  if (kappa <= 0.0 || kappa > 1.0)
    throw InvalidArgument("se: kappa must lie in (0, 1]");
  if (sigma_w < 0.0) throw InvalidArgument("se: negative sigma_w");

  const double v_cap = 1e12;
  SeTrace trace;
  double v = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const double denom = (v + sigma_w) / kappa - v;
    double v_next;
    double z;
    if (denom <= 1e-300) {
      // Noiseless full-measurement limit: the linear stage is exact.
      z = std::numeric_limits<double>::infinity();
      v_next = 0.0;
    } else {
      z = 1.0 / denom;
      const double m = mmse_scalar(z, prior);
      const double inv = 1.0 / m - z;
      v_next = inv <= 1.0 / v_cap ? v_cap : 1.0 / inv;
    }
    trace.points.emplace_back(v_next, z);
    trace.iterations = it + 1;
    if (v_next >= v_cap) {
      trace.diverged = true;
      trace.fixed_point = v_next;
      return trace;
    }
    const double dv = std::abs(v_next - v);
    v = v_next;
    if (dv < tol || v == 0.0) break;
  }
  trace.fixed_point = v;
  return trace;
}

double se_fixed_point(double kappa, double sigma_w, const PriorParams& prior,
                      double tol) {
  const SeTrace trace = se_recursion(kappa, sigma_w, prior, tol);
  if (trace.diverged)
    throw NumericalError("se: variance recursion diverged");
  return trace.fixed_point;
}

double sparsification_bound(const AnalysisParams& params, double grad_norm_sq) {
  params.validate();
  if (params.sparsity >= 1.0)
    throw InvalidArgument("sparsification bound undefined at lambda = 1");
  if (grad_norm_sq < 0.0) throw InvalidArgument("negative gradient norm");
  const double lam = params.sparsity;
  const double ratio = lam / (1.0 - lam);
  return 4.0 * params.devices * ratio * ratio *
         (params.grad_bound_const + params.grad_bound_slope * grad_norm_sq);
}

ConvergenceConstants convergence_constants(const AnalysisParams& params,
                                           double v_star) {
  params.validate();
  if (params.sparsity >= 1.0)
    throw InvalidArgument("convergence constants undefined at lambda = 1");
  if (v_star < 0.0) throw InvalidArgument("negative fixed point");
  const double lam = params.sparsity;
  const double ratio = lam / (1.0 - lam);
  const double sp_factor = 4.0 * params.devices * ratio * ratio;
  ConvergenceConstants out;
  out.psi = 1.0 - params.strong_convexity / params.smoothness +
            2.0 * params.strong_convexity * params.grad_bound_slope /
                params.smoothness * sp_factor;
  out.c = (params.grad_bound_const * sp_factor +
           params.grad_scale * v_star) /
          params.smoothness;
  return out;
}

std::vector<double> bound_trajectory(double psi, double initial_gap,
                                     const std::vector<double>& c_seq) {
  std::vector<double> bound(c_seq.size() + 1);
  bound[0] = initial_gap;
  for (size_t t = 0; t < c_seq.size(); ++t)
    bound[t + 1] = psi * bound[t] + c_seq[t];
  return bound;
}

StreamScan scan_streams(int channel_uses, int n_tx, int n_rx, int model_dim,
                        const PriorParams& prior, const AnalysisParams& params,
                        const std::function<double(int)>& sigma_w_of) {
  if (channel_uses <= 0 || n_tx <= 0 || n_rx <= 0)
    throw InvalidArgument("scan: dimensions must be positive");
  if (model_dim <= 0 || model_dim % 2 != 0)
    throw InvalidArgument("scan: model_dim must be positive and even");

  StreamScan scan;
  double best_c = std::numeric_limits<double>::infinity();
  for (int ns = 1; ns <= n_tx + n_rx; ++ns) {
    StreamScanRow row;
    row.streams = ns;
    row.kappa = std::min(
        1.0, static_cast<double>(ns) * channel_uses / (model_dim / 2));
    row.sigma_w = sigma_w_of(ns);
    const SeTrace trace = se_recursion(row.kappa, row.sigma_w, prior);
    row.v_star = trace.fixed_point;
    row.diverged = trace.diverged;
    row.c = convergence_constants(params, row.v_star).c;
    if (!row.diverged && row.c < best_c) {
      best_c = row.c;
      scan.best_streams = ns;
    }
    scan.rows.push_back(row);
  }
  return scan;
}

}  // namespace scom
