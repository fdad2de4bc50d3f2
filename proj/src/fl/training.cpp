#include "scom/fl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "scom/channel.hpp"
#include "scom/parallel.hpp"
#include "scom/turbo_cs.hpp"

namespace scom::fl {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Correlation of the actual frames; silent devices get an identity row.
RMat frame_correlation(const std::vector<CMat>& frames) {
  const int m_count = static_cast<int>(frames.size());
  RMat rho = RMat::Identity(m_count, m_count);
  std::vector<double> norms(m_count);
  for (int m = 0; m < m_count; ++m) norms[m] = frames[m].norm();
  for (int a = 0; a < m_count; ++a) {
    if (norms[a] == 0.0) continue;
    for (int b = a + 1; b < m_count; ++b) {
      if (norms[b] == 0.0) continue;
      const double inner =
          (frames[b].adjoint() * frames[a]).trace().real() / (norms[a] * norms[b]);
      rho(a, b) = inner;
      rho(b, a) = inner;
    }
  }
  return rho;
}

}  // namespace

std::string metrics_csv_header() {
  return "round,train_loss,test_accuracy,grad_norm_sq,sigma_bar,"
         "sigma_w_analytic,sigma_w_empirical,turbo_iterations,turbo_final_v,"
         "err_sp_sq,err_com_sq,opt_objective,opt_outer_iters,"
         "prior_sparsity,prior_variance";
}

std::string metrics_csv_row(const RoundMetrics& m) {
  std::ostringstream out;
  out << m.round << ',' << fmt17(m.train_loss) << ',' << fmt17(m.test_accuracy)
      << ',' << fmt17(m.grad_norm_sq) << ',' << fmt17(m.sigma_bar) << ','
      << fmt17(m.sigma_w_analytic) << ',' << fmt17(m.sigma_w_empirical) << ','
      << m.turbo_iterations << ',' << fmt17(m.turbo_final_v) << ','
      << fmt17(m.err_sp_sq) << ',' << fmt17(m.err_com_sq) << ','
      << fmt17(m.opt_objective) << ',' << m.opt_outer_iters << ','
      << fmt17(m.prior_sparsity) << ',' << fmt17(m.prior_variance);
  return out.str();
}

Trainer::Trainer(const SimConfig& config)
    : config_((config.validate(), config)),
      task_(config.data_seed(), config.task),
      padded_dim_(CodecConfig::padded_dim(config.task.model_dim())),
      compressor_(config.codec_seed(), padded_dim_ / 2, config.compression),
      flips_(flip_vector(config.codec_seed(), padded_dim_ / 2)),
      positions_(sample_geometry(config.geometry_seed(), config.task.devices,
                                 config.geometry)),
      rho_estimate_(CorrelationModel::uniform(config.task.devices, config.rho0)),
      learning_rate_(config.learning_rate > 0.0 ? config.learning_rate
                                                : 1.0 / task_.smoothness()),
      model_(RVec::Zero(config.task.model_dim())) {
  codec_states_.reserve(config.task.devices);
  for (int m = 0; m < config.task.devices; ++m)
    codec_states_.emplace_back(padded_dim_ / 2);
}

RoundMetrics Trainer::run_round() {
  const auto start = std::chrono::steady_clock::now();
  const int m_count = task_.devices();
  const int half = padded_dim_ / 2;
  const int c_len = compressor_.compressed_len();
  const int n_streams = config_.streams;
  const int k_uses = (c_len + n_streams - 1) / n_streams;

  // Local gradients (devices run in parallel, reduction order is fixed).
  std::vector<RVec> gradients(m_count);
  parallel_for(m_count, [&](int m) {
    Rng rng(derive_seed(config_.batch_seed(),
                        static_cast<std::uint64_t>(round_) * m_count + m));
    gradients[m] =
        task_.device_gradient(m, model_, config_.batch, &rng);
  });
  RVec global_grad = RVec::Zero(model_.size());
  for (int m = 0; m < m_count; ++m)
    global_grad += task_.weights()[m] * gradients[m];

  RoundMetrics metrics;
  metrics.grad_norm_sq = global_grad.squaredNorm();

  if (config_.aggregation == Aggregation::ideal) {
    model_ -= learning_rate_ * global_grad;
  } else {
    // Device codec pipeline.
    std::vector<CVec> normalized(m_count);
    std::vector<CMat> frames(m_count);
    std::vector<double> scales(m_count, 0.0);
    std::vector<RVec> sparsified(m_count);
    std::vector<char> active(m_count, 0);
    parallel_for(m_count, [&](int m) {
      RVec padded = gradients[m];
      if (padded.size() < padded_dim_) {
        padded.conservativeResize(padded_dim_);
        padded[padded_dim_ - 1] = 0.0;
      }
      const CVec complexified = complexify(padded);
      const CVec sparse =
          accumulate_sparsify(complexified, codec_states_[m], config_.sparsity);
      sparsified[m] = decomplexify(sparse);
      if (sparse.squaredNorm() == 0.0) {
        frames[m] = CMat::Zero(n_streams, k_uses);  // degenerate round: skip
        normalized[m] = CVec::Zero(half);
        return;
      }
      const NormalizeResult norm = normalize(sparse, flips_);
      normalized[m] = norm.normalized;
      scales[m] = norm.scale;
      codec_states_[m].last_scale = norm.scale;
      frames[m] = reshape_streams(compressor_.compress(norm.normalized),
                                  n_streams, k_uses);
      active[m] = 1;
    });

    double sigma_bar = 0.0;
    for (int m = 0; m < m_count; ++m) sigma_bar += scales[m];
    sigma_bar /= m_count;
    metrics.sigma_bar = sigma_bar;

    // Channel realization for this round.
    ChannelRealization channels = sample_channels(
        derive_seed(config_.channel_seed(), round_), positions_, config_.n_rx,
        config_.n_tx, config_.geometry);
    if (config_.deep_fade_device >= 0)
      channels.h[config_.deep_fade_device] *= config_.deep_fade_gain;

    // Correlation model used by the transceiver design: running estimate in
    // measured mode, the configured constant otherwise.
    CorrelationModel design_rho = config_.rho_mode == RhoMode::measured
                                      ? rho_estimate_
                                      : CorrelationModel::uniform(m_count, config_.rho0);
    design_rho.weights = task_.weights();

    const bool refresh = !have_precoders_ || (round_ % config_.optimize_every == 0);
    if (refresh) {
      cached_precoders_ =
          config_.aggregation == Aggregation::zero_forcing
              ? zero_forcing(channels.h, design_rho, config_.geometry.noise_power_w,
                             config_.geometry.power_budget_w, n_streams)
              : ao_admm(channels.h, design_rho, config_.geometry.noise_power_w,
                        config_.geometry.power_budget_w, n_streams,
                        config_.optimizer);
      have_precoders_ = true;
    }
    const PrecoderSolution& sol = cached_precoders_;
    metrics.opt_objective = sol.objective_value;
    metrics.opt_outer_iters = sol.outer_iterations;

    // Over-the-air superposition and post-processing.
    const CMat y =
        transmit(channels, sol.precoders, frames, config_.geometry.noise_power_w,
                 derive_seed(config_.noise_seed(), round_),
                 config_.geometry.power_budget_w);
    const CMat r_hat_mat = post_process(sol.post_processor, y);
    CMat r_target = CMat::Zero(n_streams, k_uses);
    for (int m = 0; m < m_count; ++m)
      r_target += task_.weights()[m] * frames[m];
    metrics.sigma_w_empirical = empirical_sigma_w(r_hat_mat, r_target);

    // Correlation measured from this round's frames: feeds the recovery prior
    // now and the next round's transceiver design.
    const CorrelationModel measured =
        CorrelationModel::from_measured(frame_correlation(frames), task_.weights());
    const double blend = have_measured_rho_ ? 0.5 : 1.0;
    rho_estimate_.rho = blend * measured.rho + (1.0 - blend) * rho_estimate_.rho;
    rho_estimate_.weights = task_.weights();
    have_measured_rho_ = true;

    // Analytic aggregation MSE at the matrices actually used this round.
    metrics.sigma_w_analytic =
        objective(sol.post_processor, sol.precoders, channels.h, measured,
                  config_.geometry.noise_power_w);

    RVec g_hat = RVec::Zero(padded_dim_);
    int transmitters = 0;
    for (int m = 0; m < m_count; ++m) transmitters += active[m];
    if (transmitters > 0) {
      // Recovery prior from device support reports and frame statistics.
      Eigen::ArrayXd support = Eigen::ArrayXd::Zero(half);
      for (int m = 0; m < m_count; ++m)
        if (active[m]) support += (normalized[m].array().abs() > 0.0).cast<double>();
      PriorParams prior;
      prior.sparsity =
          std::clamp((support > 0.0).cast<double>().sum() / half, 1e-6, 1.0);
      Eigen::Map<const RVec> q(task_.weights().data(), m_count);
      const double signal_power = q.dot(measured.rho * q);
      prior.nonzero_variance =
          std::max(signal_power / prior.sparsity, 1e-12);
      metrics.prior_sparsity = prior.sparsity;
      metrics.prior_variance = prior.nonzero_variance;

      const CVec r_hat = flatten_streams(r_hat_mat).head(c_len);
      const TurboResult turbo = run_turbo_cs(
          r_hat, compressor_, metrics.sigma_w_analytic, prior, config_.turbo);
      metrics.turbo_iterations = turbo.iterations;
      metrics.turbo_final_v = turbo.final_variance;

      g_hat = rescale_output(turbo.estimate, flips_, sigma_bar);
    }

    // Error split: sparsification part and communication part.
    RVec sp_aggregate = RVec::Zero(padded_dim_);
    for (int m = 0; m < m_count; ++m)
      sp_aggregate += task_.weights()[m] * sparsified[m];
    RVec padded_grad = global_grad;
    if (padded_grad.size() < padded_dim_) {
      padded_grad.conservativeResize(padded_dim_);
      padded_grad[padded_dim_ - 1] = 0.0;
    }
    metrics.err_sp_sq = (padded_grad - sp_aggregate).squaredNorm();
    metrics.err_com_sq = (sp_aggregate - g_hat).squaredNorm();

    model_ -= learning_rate_ * g_hat.head(model_.size());
  }

  ++round_;
  metrics.round = round_;
  metrics.train_loss = task_.loss(model_);
  metrics.test_accuracy = task_.test_accuracy(model_);
  if (!std::isfinite(metrics.train_loss))
    throw NumericalError("training diverged at round " + std::to_string(round_));
  metrics.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return metrics;
}

TrainingResult run_training(const SimConfig& config) {
  Trainer trainer(config);
  TrainingResult result;

  RoundMetrics initial;
  initial.round = 0;
  initial.train_loss = trainer.task().loss(trainer.model());
  initial.test_accuracy = trainer.task().test_accuracy(trainer.model());
  initial.grad_norm_sq = trainer.task().gradient(trainer.model()).squaredNorm();
  result.metrics.push_back(initial);
  result.trajectory.push_back(trainer.model());

  for (int t = 0; t < config.rounds; ++t) {
    result.metrics.push_back(trainer.run_round());
    result.trajectory.push_back(trainer.model());
  }
  result.final_model = trainer.model();
  return result;
}

AnalysisParams measure_analysis_params(const SyntheticTask& task,
                                       const std::vector<RVec>& trajectory,
                                       double sparsity, double sigma_bar) {
  if (trajectory.empty())
    throw InvalidArgument("analysis: empty trajectory");

  // At each sampled model, the worst per-sample gradient norm against the
  // global gradient norm.
  const size_t stride = std::max<size_t>(1, trajectory.size() / 32);
  std::vector<double> global_sq, worst_sq;
  for (size_t i = 0; i < trajectory.size(); i += stride) {
    const RVec& theta = trajectory[i];
    global_sq.push_back(task.gradient(theta).squaredNorm());
    std::vector<double> per_device(task.devices(), 0.0);
    parallel_for(task.devices(), [&](int m) {
      double worst = 0.0;
      for (int n = 0; n < task.device_samples(m); ++n)
        worst = std::max(worst, task.sample_gradient(m, n, theta).squaredNorm());
      per_device[m] = worst;
    });
    worst_sq.push_back(*std::max_element(per_device.begin(), per_device.end()));
  }

  const size_t n = global_sq.size();
  double mean_a = 0.0, mean_b = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mean_a += global_sq[i];
    mean_b += worst_sq[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (global_sq[i] - mean_a) * (worst_sq[i] - mean_b);
    var += (global_sq[i] - mean_a) * (global_sq[i] - mean_a);
  }

  AnalysisParams params;
  params.smoothness = task.smoothness();
  params.strong_convexity = task.strong_convexity();
  params.devices = task.devices();
  params.sparsity = sparsity;
  params.grad_scale = sigma_bar;

  auto tighten = [&](double slope) {
    double offset = 0.0;
    for (size_t i = 0; i < n; ++i)
      offset = std::max(offset, worst_sq[i] - slope * global_sq[i]);
    return offset;
  };
  double slope = var > 0.0 ? std::max(cov / var, 0.0) : 0.0;
  params.grad_bound_slope = slope;
  params.grad_bound_const = tighten(slope);

  // Prefer constants that keep the contraction factor below one; a flat
  // bound (slope 0) is always valid.
  const double ratio = sparsity / (1.0 - sparsity);
  const double psi_slope_budget =
      1.0 / (8.0 * params.devices * ratio * ratio);
  if (slope >= psi_slope_budget) {
    params.grad_bound_slope = 0.0;
    params.grad_bound_const = tighten(0.0);
  }
  return params;
}

BoundCheck check_convergence_bound(const SyntheticTask& task,
                                   const TrainingResult& result,
                                   const SimConfig& config) {
  BoundCheck check;
  double sigma_bar = 0.0;
  int counted = 0;
  for (size_t t = 1; t < result.metrics.size(); ++t) {
    sigma_bar += result.metrics[t].sigma_bar;
    ++counted;
  }
  sigma_bar = counted > 0 ? sigma_bar / counted : 0.0;

  check.params = measure_analysis_params(task, result.trajectory,
                                         config.sparsity, sigma_bar);
  const double f_star = task.loss(task.minimizer());
  for (const RVec& theta : result.trajectory)
    check.gap.push_back(task.loss(theta) - f_star);

  std::vector<double> c_seq;
  for (size_t t = 1; t < result.metrics.size(); ++t) {
    const RoundMetrics& m = result.metrics[t];
    PriorParams prior{std::max(m.prior_sparsity, 1e-6),
                      std::max(m.prior_variance, 1e-12)};
    const SeTrace trace =
        se_recursion(config.compression, m.sigma_w_analytic, prior);
    AnalysisParams round_params = check.params;
    round_params.grad_scale = m.sigma_bar;
    c_seq.push_back(convergence_constants(round_params, trace.fixed_point).c);
  }
  check.psi = convergence_constants(check.params, 0.0).psi;
  check.bound = bound_trajectory(check.psi, check.gap.empty() ? 0.0 : check.gap[0],
                                 c_seq);
  return check;
}

}  // namespace scom::fl
