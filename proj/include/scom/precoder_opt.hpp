#pragma once

#include <vector>

#include "scom/types.hpp"

namespace scom {

/// Spatial correlation of the devices' stream frames, normalized so the
/// diagonal is 1, together with the aggregation weights q_m.
struct CorrelationModel {
  RMat rho;                    // M x M, symmetric PSD, unit diagonal
  std::vector<double> weights; // q_m, summing to 1

  static CorrelationModel uniform(int devices, double off_diagonal = 0.0);
  /// Builds a valid model from raw measured correlations: symmetrizes, clips
  /// into [0, 1], and shrinks toward identity if that clipping broke
  /// positive semidefiniteness.
  static CorrelationModel from_measured(const RMat& raw,
                                        std::vector<double> weights);
  void validate() const;
};

/// Cross-term convention for the per-device quadratic subproblem. `rederived`
/// reproduces the full objective exactly when expanded along one device;
/// `legacy` keeps a doubled interference-compensation term for comparison.
enum class CrossTermForm { rederived, legacy };

struct OptimizerConfig {
  int max_outer = 50;
  double outer_tol = 1e-8;     // stop on absolute objective change
  double admm_penalty = 1e-4;  // gamma
  double admm_tol = 1e-4;      // epsilon on ||P - Z||_F
  int max_inner = 20000;
  CrossTermForm cross_term = CrossTermForm::rederived;
};

/// Consensus-ADMM iterate carried across solves as a warm start.
struct AdmmState {
  CMat z;       // feasible consensus variable
  CMat v;       // scaled dual
  double zeta = 0.0;
};

struct PrecoderSolution {
  CMat post_processor;            // F, N_S x N_R
  std::vector<CMat> precoders;    // P_m, N_T x N_S
  double objective_value = 0.0;
  int outer_iterations = 0;
  std::vector<double> objective_trace;
  double max_primal_residual = 0.0;  // worst final ||P - Z||_F over devices
};

/// Analytic per-entry aggregation MSE E||R_hat - R||_F^2 / (N_S K) under the
/// unit-variance correlated-frame model.
double objective(const CMat& post_processor, const std::vector<CMat>& precoders,
                 const std::vector<CMat>& channels, const CorrelationModel& corr,
                 double noise_power);

/// Closed-form minimizer of the objective over F for fixed precoders.
CMat update_post_processor(const std::vector<CMat>& precoders,
                           const std::vector<CMat>& channels,
                           const CorrelationModel& corr, double noise_power);

struct DeviceQuadratics {
  CMat b;  // N_T x N_T, Hermitian PSD
  CMat c;  // N_S x N_T
};

/// Quadratic form of the objective along device m's precoder:
/// tr(P^H B P) - 2 Re tr(C P) + terms independent of P.
DeviceQuadratics build_quadratics(int device, const CMat& post_processor,
                                  const std::vector<CMat>& precoders,
                                  const std::vector<CMat>& channels,
                                  const CorrelationModel& corr,
                                  CrossTermForm form = CrossTermForm::rederived);

struct AdmmReport {
  CMat precoder;              // feasible iterate (the projected variable)
  int iterations = 0;
  double primal_residual = 0.0;
  bool converged = false;
};

/// Consensus-ADMM solve of min tr(P^H B P) - 2 Re tr(C P) s.t. ||P||_F^2 <= P0.
/// `state`, when given, warm-starts the consensus and dual variables and is
/// updated with the final iterate.
AdmmReport admm_precoder(const CMat& b, const CMat& c, double power_budget,
                         double penalty, double tol, int max_inner,
                         AdmmState* state = nullptr);

/// Alternating optimization: closed-form F step, then per-device ADMM solves,
/// until the objective stalls or max_outer is reached.
PrecoderSolution ao_admm(const std::vector<CMat>& channels,
                         const CorrelationModel& corr, double noise_power,
                         double power_budget, int n_streams,
                         const OptimizerConfig& config = {});

/// Channel-inversion baseline: each device right-inverts the first N_S
/// receive dimensions with a common scale so that F H_m P_m = q_m I exactly.
PrecoderSolution zero_forcing(const std::vector<CMat>& channels,
                              const CorrelationModel& corr, double noise_power,
                              double power_budget, int n_streams);

}  // namespace scom
