#pragma once

#include <utility>
#include <vector>

#include "scom/sparse_coding.hpp"
#include "scom/types.hpp"

namespace scom {

/// Bernoulli-Gaussian prior on the aggregated normalized gradient: an entry
/// is zero with probability 1 - sparsity, else CN(0, nonzero_variance).
struct PriorParams {
  double sparsity = 1.0;         // lambda'
  double nonzero_variance = 1.0; // sigma_g

  void validate() const {
    if (sparsity <= 0.0 || sparsity > 1.0)
      throw InvalidArgument("prior: sparsity must lie in (0, 1]");
    if (nonzero_variance <= 0.0)
      throw InvalidArgument("prior: nonzero variance must be positive");
  }
};

/// Mean/variance pair passed between the two modules.
struct GaussianMessage {
  CVec mean;
  double variance = 1.0;
};

/// Linear MMSE stage for a row-orthonormal sensing map: posterior mean
/// g + v/(v+sigma_w) A^H (r - A g) and variance v - kappa v^2/(v+sigma_w).
GaussianMessage lmmse_step(const CVec& r_hat, const GaussianMessage& prior,
                           const CompressionOperator& op, double sigma_w);

/// Removes the incoming prior from a posterior message. A non-contracting
/// step (v_post >= v_pri) is clamped to variance 1e8 with mean passthrough;
/// `clamped`, when given, reports that this happened.
GaussianMessage extrinsic(const GaussianMessage& post,
                          const GaussianMessage& pri, bool* clamped = nullptr);

struct DenoiseResult {
  CVec mean;
  double variance = 0.0;     // averaged posterior variance
  RVec responsibility;       // per-entry nonzero posterior probability
};

/// Entrywise MMSE denoiser for the Bernoulli-Gaussian prior under circular
/// Gaussian noise of variance `noise_var`.
DenoiseResult bg_denoise(const CVec& observed, double noise_var,
                         const PriorParams& prior);

/// One EM refinement of (sparsity, nonzero variance) from a noisy
/// observation of the signal. Collapsed sparsity is clamped to 1e-6.
PriorParams em_update_prior(const CVec& observed, double noise_var,
                            const PriorParams& prior);

struct TurboOptions {
  int max_iter = 50;
  double tol = 1e-6;       // stop when |v_A change| drops below this
  bool em_prior = false;   // refine the prior each iteration
  double damping = 0.0;    // on extrinsic means; 0 disables
};

struct TurboResult {
  CVec estimate;                   // final denoiser posterior mean
  int iterations = 0;
  bool diverged = false;           // variance grew 5 iterations in a row
  bool clamped = false;            // some extrinsic step was non-contracting
  double final_variance = 0.0;     // last denoiser posterior variance
  PriorParams prior;               // prior after optional EM refinement
  // (v_A_pri, v_B_post) per iteration.
  std::vector<std::pair<double, double>> variance_trace;
};

/// Full recovery loop alternating the LMMSE stage and the BG denoiser with
/// extrinsic message exchange, starting from mean 0 / variance 1.
TurboResult run_turbo_cs(const CVec& r_hat, const CompressionOperator& op,
                         double sigma_w, const PriorParams& prior,
                         const TurboOptions& options = {});

}  // namespace scom
