#pragma once

#include <memory>
#include <string>
#include <vector>

#include "scom/fl/config.hpp"
#include "scom/fl/task.hpp"
#include "scom/sparse_coding.hpp"
#include "scom/state_evolution.hpp"

namespace scom::fl {

struct RoundMetrics {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double grad_norm_sq = 0.0;
  double sigma_bar = 0.0;
  double sigma_w_analytic = 0.0;
  double sigma_w_empirical = 0.0;
  int turbo_iterations = 0;
  double turbo_final_v = 0.0;
  double err_sp_sq = 0.0;
  double err_com_sq = 0.0;
  double opt_objective = 0.0;
  int opt_outer_iters = 0;
  double prior_sparsity = 0.0;
  double prior_variance = 0.0;
  double wall_clock_s = 0.0;  // reported on the console, not in the CSV
};

/// Fixed, versioned metrics schema; floats are written at 17 digits.
std::string metrics_csv_header();
std::string metrics_csv_row(const RoundMetrics& m);

/// One training run. Owns the task, codec state and correlation estimate;
/// rounds are strictly sequential, device pipelines run in parallel.
class Trainer {
 public:
  explicit Trainer(const SimConfig& config);

  /// Executes one round (channel, optimizer, codec, recovery, model update).
  RoundMetrics run_round();

  const RVec& model() const { return model_; }
  int round() const { return round_; }
  const SyntheticTask& task() const { return task_; }
  double learning_rate() const { return learning_rate_; }
  const std::vector<DeviceCodecState>& codec_states() const { return codec_states_; }

 private:
  SimConfig config_;
  SyntheticTask task_;
  int padded_dim_;
  CompressionOperator compressor_;
  RVec flips_;
  std::vector<DeviceCodecState> codec_states_;
  std::vector<DevicePosition> positions_;
  CorrelationModel rho_estimate_;
  bool have_measured_rho_ = false;
  PrecoderSolution cached_precoders_;
  bool have_precoders_ = false;
  double learning_rate_;
  RVec model_;
  int round_ = 0;
};

struct TrainingResult {
  std::vector<RoundMetrics> metrics;  // row 0 is the initial evaluation
  std::vector<RVec> trajectory;       // theta at rounds 0..T
  RVec final_model;
};

TrainingResult run_training(const SimConfig& config);

/// Gradient-bound constants measured along a trajectory: a least-squares fit
/// of max-sample gradient norms against the global gradient norm, tightened
/// so the bound holds at every sampled point. Falls back to a flat bound when
/// the fitted slope would break the contraction condition.
AnalysisParams measure_analysis_params(const SyntheticTask& task,
                                       const std::vector<RVec>& trajectory,
                                       double sparsity, double sigma_bar);

struct BoundCheck {
  double psi = 0.0;
  std::vector<double> bound;      // Theorem envelope, rounds 0..T
  std::vector<double> gap;        // measured F(theta_t) - F(theta*)
  AnalysisParams params;
};

/// Builds the loss-gap envelope from per-round recovery fixed points and
/// compares it to the measured gap of the same run.
BoundCheck check_convergence_bound(const SyntheticTask& task,
                                   const TrainingResult& result,
                                   const SimConfig& config);

}  // namespace scom::fl
