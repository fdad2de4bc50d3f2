#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "scom/turbo_cs.hpp"
#include "scom/types.hpp"

namespace scom {

/// Loss-landscape and gradient-bound constants used by the convergence
/// analysis; measured on the concrete task rather than assumed.
struct AnalysisParams {
  double smoothness = 1.0;        // omega
  double strong_convexity = 1.0;  // mu
  double grad_bound_const = 0.0;  // chi_1
  double grad_bound_slope = 0.0;  // chi_2
  int devices = 1;                // M
  double sparsity = 0.5;          // lambda
  double grad_scale = 1.0;        // mean of the per-device sigma_m

  void validate() const {
    if (smoothness <= 0.0 || strong_convexity <= 0.0)
      throw InvalidArgument("analysis: curvature constants must be positive");
    if (strong_convexity > smoothness)
      throw InvalidArgument("analysis: mu must not exceed omega");
    if (grad_bound_const < 0.0 || grad_bound_slope < 0.0 || grad_scale < 0.0)
      throw InvalidArgument("analysis: negative bound constant");
    if (devices < 1) throw InvalidArgument("analysis: need at least one device");
  }
};

/// Scalar MMSE of a Bernoulli-Gaussian entry observed in circular Gaussian
/// noise of variance 1/z, via radial Gauss-Laguerre quadrature.
double mmse_scalar(double z, const PriorParams& prior, int nodes = 96);

struct SeTrace {
  std::vector<std::pair<double, double>> points;  // (v, z) per iteration
  double fixed_point = 0.0;                       // v*
  int iterations = 0;
  bool diverged = false;
};

/// Runs the variance recursion z = ((1/kappa)(v+sigma_w) - v)^-1,
/// v = (1/mmse(z) - z)^-1 from v = 1 until |dv| < tol.
SeTrace se_recursion(double kappa, double sigma_w, const PriorParams& prior,
                     double tol = 1e-12, int max_iter = 10000);

/// Fixed point v* of the recursion; throws NumericalError on divergence.
double se_fixed_point(double kappa, double sigma_w, const PriorParams& prior,
                      double tol = 1e-12);

/// Sparsification MSE bound 4 M lambda^2/(1-lambda)^2 (chi1 + chi2 |grad|^2).
double sparsification_bound(const AnalysisParams& params, double grad_norm_sq);

struct ConvergenceConstants {
  double psi = 0.0;  // per-round contraction factor
  double c = 0.0;    // per-round additive error
};

/// Psi = 1 - mu/omega + (2 mu chi2/omega) 4 M lambda^2/(1-lambda)^2 and
/// C = (chi1 4 M lambda^2/(1-lambda)^2 + grad_scale * v_star) / omega.
ConvergenceConstants convergence_constants(const AnalysisParams& params,
                                           double v_star);

/// Loss-gap envelope: b[0] = initial_gap, b[t+1] = psi b[t] + c_seq[t].
std::vector<double> bound_trajectory(double psi, double initial_gap,
                                     const std::vector<double>& c_seq);

struct StreamScanRow {
  int streams = 0;
  double kappa = 0.0;
  double sigma_w = 0.0;
  double v_star = 0.0;
  double c = 0.0;
  bool diverged = false;
};

struct StreamScan {
  std::vector<StreamScanRow> rows;
  int best_streams = 0;  // argmin of c over converged rows
};

/// Sweeps the stream count at fixed channel uses: kappa = N_S K / (D/2)
/// capped at 1; sigma_w_of evaluates the optimized aggregation MSE per N_S.
StreamScan scan_streams(int channel_uses, int n_tx, int n_rx, int model_dim,
                        const PriorParams& prior, const AnalysisParams& params,
                        const std::function<double(int)>& sigma_w_of);

}  // namespace scom
