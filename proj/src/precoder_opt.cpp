#include "scom/precoder_opt.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace scom {

namespace {

void check_system(const std::vector<CMat>& precoders,
                  const std::vector<CMat>& channels,
                  const CorrelationModel& corr) {
  corr.validate();
  const int m_count = static_cast<int>(channels.size());
  if (m_count == 0) throw InvalidArgument("precoder: no devices");
  if (static_cast<int>(precoders.size()) != m_count ||
      corr.rho.rows() != m_count)
    throw InvalidArgument("precoder: device count mismatch");
  for (int m = 0; m < m_count; ++m) {
    if (channels[m].rows() != channels[0].rows() ||
        channels[m].cols() != channels[0].cols())
      throw InvalidArgument("precoder: inconsistent channel shapes");
    if (precoders[m].rows() != channels[m].cols() ||
        precoders[m].cols() != precoders[0].cols())
      throw InvalidArgument("precoder: inconsistent precoder shapes");
  }
}

// Objective of (the per-device quadratic) at P.
double device_objective(const CMat& p, const CMat& b, const CMat& c) {
  return (p.adjoint() * b * p).trace().real() - 2.0 * (c * p).trace().real();
}

}  // namespace

CorrelationModel CorrelationModel::uniform(int devices, double off_diagonal) {
  CorrelationModel model;
  model.rho = RMat::Constant(devices, devices, off_diagonal);
  model.rho.diagonal().setOnes();
  model.weights.assign(devices, 1.0 / devices);
  return model;
}

CorrelationModel CorrelationModel::from_measured(const RMat& raw,
                                                 std::vector<double> weights) {
  CorrelationModel model;
  const Eigen::Index m = raw.rows();
  model.rho = 0.5 * (raw + raw.transpose());
  model.rho = model.rho.cwiseMax(0.0).cwiseMin(1.0);
  model.rho.diagonal().setOnes();
  Eigen::SelfAdjointEigenSolver<RMat> eig(model.rho, Eigen::EigenvaluesOnly);
  const double bottom = eig.eigenvalues().minCoeff();
  if (bottom < 0.0) {
    const double shrink = 1.0 / (1.0 - bottom + 1e-12);
    model.rho = RMat::Identity(m, m) + shrink * (model.rho - RMat::Identity(m, m));
  }
  model.weights = std::move(weights);
  return model;
}

void CorrelationModel::validate() const {
  const int m = static_cast<int>(rho.rows());
  if (m == 0 || rho.cols() != m)
    throw InvalidArgument("correlation: rho must be square and nonempty");
  if (static_cast<int>(weights.size()) != m)
    throw InvalidArgument("correlation: weight count mismatch");
  double sum = 0.0;
  for (double q : weights) {
    if (q <= 0.0) throw InvalidArgument("correlation: weights must be positive");
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("correlation: weights must sum to 1");
  for (int i = 0; i < m; ++i) {
    if (std::abs(rho(i, i) - 1.0) > 1e-9)
      throw InvalidArgument("correlation: diagonal must be 1");
    for (int j = 0; j < m; ++j) {
      if (std::abs(rho(i, j) - rho(j, i)) > 1e-9)
        throw InvalidArgument("correlation: rho must be symmetric");
      if (rho(i, j) < -1e-12 || rho(i, j) > 1.0 + 1e-12)
        throw InvalidArgument("correlation: entries must lie in [0, 1]");
    }
  }
  Eigen::SelfAdjointEigenSolver<RMat> eig(rho, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9)
    throw InvalidArgument("correlation: rho must be positive semidefinite");
}

double objective(const CMat& post_processor, const std::vector<CMat>& precoders,
                 const std::vector<CMat>& channels, const CorrelationModel& corr,
                 double noise_power) {
  check_system(precoders, channels, corr);
  const int m_count = static_cast<int>(channels.size());
  const int n_streams = static_cast<int>(precoders[0].cols());
  if (post_processor.rows() != n_streams ||
      post_processor.cols() != channels[0].rows())
    throw InvalidArgument("objective: post-processor shape mismatch");
  if (noise_power < 0.0) throw InvalidArgument("objective: negative noise power");

  // Effective stream maps S_m = F H_m P_m; all terms reduce to their traces.
  std::vector<CMat> effective(m_count);
  std::vector<cxd> traces(m_count);
  for (int m = 0; m < m_count; ++m) {
    effective[m] = post_processor * channels[m] * precoders[m];
    traces[m] = effective[m].trace();
  }
  cxd acc = 0.0;
  for (int m = 0; m < m_count; ++m) {
    const double qm = corr.weights[m];
    for (int mp = 0; mp < m_count; ++mp) {
      const double r = corr.rho(mp, m);
      if (r == 0.0) continue;
      const double qmp = corr.weights[mp];
      acc += r * ((effective[m].adjoint() * effective[mp]).trace() -
                  qmp * std::conj(traces[m]) - qm * traces[mp] +
                  qmp * qm * static_cast<double>(n_streams));
    }
  }
  const double total =
      acc.real() + noise_power * post_processor.squaredNorm();
  return total / n_streams;
}

CMat update_post_processor(const std::vector<CMat>& precoders,
                           const std::vector<CMat>& channels,
                           const CorrelationModel& corr, double noise_power) {
  check_system(precoders, channels, corr);
  const int m_count = static_cast<int>(channels.size());
  const int n_rx = static_cast<int>(channels[0].rows());
  const int n_streams = static_cast<int>(precoders[0].cols());

  std::vector<CMat> through(m_count);  // T_m = H_m P_m
  for (int m = 0; m < m_count; ++m) through[m] = channels[m] * precoders[m];

  CMat numerator = CMat::Zero(n_streams, n_rx);
  CMat gram = CMat::Zero(n_rx, n_rx);
  for (int m = 0; m < m_count; ++m) {
    double row_weight = 0.0;
    for (int mp = 0; mp < m_count; ++mp) {
      row_weight += corr.weights[mp] * corr.rho(mp, m);
      const double r = corr.rho(mp, m);
      if (r != 0.0) gram.noalias() += r * (through[mp] * through[m].adjoint());
    }
    numerator.noalias() += row_weight * through[m].adjoint();
  }
  gram.diagonal().array() += noise_power;

  Eigen::LDLT<CMat> solver(gram);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw NumericalError("post-processor update: singular system");
  // F = numerator * gram^-1 via the Hermitian solve of the adjoint system.
  return solver.solve(numerator.adjoint()).adjoint();
}

DeviceQuadratics build_quadratics(int device, const CMat& post_processor,
                                  const std::vector<CMat>& precoders,
                                  const std::vector<CMat>& channels,
                                  const CorrelationModel& corr,
                                  CrossTermForm form) {
  check_system(precoders, channels, corr);
  const int m_count = static_cast<int>(channels.size());
  if (device < 0 || device >= m_count)
    throw InvalidArgument("quadratics: device index out of range");

  const CMat fh = post_processor * channels[device];  // N_S x N_T
  DeviceQuadratics out;
  out.b = fh.adjoint() * fh;

  const double factor = form == CrossTermForm::rederived ? 1.0 : 2.0;
  CMat cross = CMat::Zero(fh.rows(), fh.rows());  // sum of rho * S_m'^H
  double cross_weight = 0.0;
  for (int mp = 0; mp < m_count; ++mp) {
    if (mp == device) continue;
    const double r = corr.rho(mp, device);
    if (r == 0.0) continue;
    cross.noalias() +=
        r * (post_processor * channels[mp] * precoders[mp]).adjoint();
    cross_weight += r * corr.weights[mp];
  }
  out.c = (corr.weights[device] + factor * cross_weight) * fh - cross * fh;
  return out;
}

AdmmReport admm_precoder(const CMat& b, const CMat& c, double power_budget,
                         double penalty, double tol, int max_inner,
                         AdmmState* state) {
  if (b.rows() != b.cols()) throw InvalidArgument("admm: B must be square");
  if (c.cols() != b.rows()) throw InvalidArgument("admm: C width mismatch");
  if (power_budget <= 0.0) throw InvalidArgument("admm: power budget must be positive");
  if (penalty <= 0.0 || tol <= 0.0)
    throw InvalidArgument("admm: penalty and tolerance must be positive");

  const Eigen::Index n_tx = b.rows();
  const Eigen::Index n_streams = c.rows();
  const double radius = std::sqrt(power_budget);

  CMat regularized = 0.5 * (b + b.adjoint());
  regularized.diagonal().array() += penalty;
  const Eigen::LLT<CMat> solver(regularized);
  if (solver.info() != Eigen::Success)
    throw NumericalError("admm: quadratic term is not positive definite");

  const CMat c_adj = c.adjoint();  // N_T x N_S
  const bool warm = state && state->z.rows() == n_tx &&
                    state->z.cols() == n_streams &&
                    state->v.rows() == n_tx && state->v.cols() == n_streams;
  CMat z = warm ? state->z : CMat::Zero(n_tx, n_streams);
  CMat v = warm ? state->v : CMat::Zero(n_tx, n_streams);
  if (z.squaredNorm() > power_budget) z *= radius / z.norm();

  AdmmReport report;
  CMat p(n_tx, n_streams);
  double zeta = 0.0;
  for (int it = 0; it < max_inner; ++it) {
    p = solver.solve(c_adj + penalty * (z + v));
    const CMat pv = p - v;
    zeta = std::max(pv.norm() / radius - 1.0, 0.0);
    const CMat z_prev = z;
    z = pv / (1.0 + zeta);
    v += z - p;
    report.iterations = it + 1;
    report.primal_residual = (p - z).norm();
    // The consensus gap alone can vanish far from stationarity (a cold start
    // reaches Z = P in one step); require the dual residual too.
    const double dual_residual = penalty * (z - z_prev).norm();
    if (report.primal_residual <= tol && dual_residual <= tol) {
      report.converged = true;
      break;
    }
  }
  report.precoder = z;  // the projected variable is always feasible
  if (state) {
    state->z = z;
    state->v = v;
    state->zeta = zeta;
  }
  return report;
}

PrecoderSolution ao_admm(const std::vector<CMat>& channels,
                         const CorrelationModel& corr, double noise_power,
                         double power_budget, int n_streams,
                         const OptimizerConfig& config) {
  corr.validate();
  if (power_budget <= 0.0)
    throw InvalidArgument("ao_admm: power budget must be positive");
  if (n_streams <= 0) throw InvalidArgument("ao_admm: streams must be positive");
  if (channels.empty()) throw InvalidArgument("ao_admm: no devices");

  const int m_count = static_cast<int>(channels.size());
  const int n_tx = static_cast<int>(channels[0].cols());

  // Warm start along the channel's strongest right singular directions.
  PrecoderSolution sol;
  sol.precoders.resize(m_count);
  const double col_scale = std::sqrt(power_budget / n_streams);
  for (int m = 0; m < m_count; ++m) {
    Eigen::JacobiSVD<CMat> svd(channels[m], Eigen::ComputeFullV);
    CMat p(n_tx, n_streams);
    for (int j = 0; j < n_streams; ++j)
      p.col(j) = svd.matrixV().col(j % n_tx);
    sol.precoders[m] = col_scale * p;
  }
  sol.post_processor =
      update_post_processor(sol.precoders, channels, corr, noise_power);

  double current =
      objective(sol.post_processor, sol.precoders, channels, corr, noise_power);
  sol.objective_trace.push_back(current);

  std::vector<AdmmState> warm(m_count);
  for (int m = 0; m < m_count; ++m) {
    warm[m].z = sol.precoders[m];
    warm[m].v = CMat::Zero(n_tx, n_streams);
  }
  for (int outer = 0; outer < config.max_outer; ++outer) {
    sol.post_processor =
        update_post_processor(sol.precoders, channels, corr, noise_power);

    double worst_residual = 0.0;
    for (int m = 0; m < m_count; ++m) {
      const DeviceQuadratics quad =
          build_quadratics(m, sol.post_processor, sol.precoders, channels, corr,
                           config.cross_term);
      const AdmmReport report =
          admm_precoder(quad.b, quad.c, power_budget, config.admm_penalty,
                        config.admm_tol, config.max_inner, &warm[m]);
      worst_residual = std::max(worst_residual, report.primal_residual);
      // Keep the incumbent if the inexact solve did not improve this block.
      if (device_objective(report.precoder, quad.b, quad.c) <=
          device_objective(sol.precoders[m], quad.b, quad.c))
        sol.precoders[m] = report.precoder;
    }
    sol.max_primal_residual = worst_residual;

    const double next =
        objective(sol.post_processor, sol.precoders, channels, corr, noise_power);
    sol.objective_trace.push_back(next);
    sol.outer_iterations = outer + 1;
    const double change = std::abs(next - current);
    current = next;
    if (change < config.outer_tol) break;
  }
  sol.objective_value = current;
  return sol;
}

PrecoderSolution zero_forcing(const std::vector<CMat>& channels,
                              const CorrelationModel& corr, double noise_power,
                              double power_budget, int n_streams) {
  corr.validate();
  if (channels.empty()) throw InvalidArgument("zero_forcing: no devices");
  const int m_count = static_cast<int>(channels.size());
  const int n_rx = static_cast<int>(channels[0].rows());
  const int n_tx = static_cast<int>(channels[0].cols());
  if (n_streams > std::min(n_rx, n_tx))
    throw InvalidArgument("zero_forcing: needs N_S <= min(N_T, N_R)");
  if (power_budget <= 0.0)
    throw InvalidArgument("zero_forcing: power budget must be positive");

  // Right-invert the first N_S receive dimensions of each channel.
  std::vector<CMat> inverses(m_count);
  double common_scale = std::numeric_limits<double>::infinity();
  for (int m = 0; m < m_count; ++m) {
    const CMat head = channels[m].topRows(n_streams);
    Eigen::JacobiSVD<CMat> svd(head, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-13 * sv(0))
      throw NumericalError("zero_forcing: rank-deficient channel at device " +
                           std::to_string(m));
    inverses[m] = svd.matrixV() * sv.cwiseInverse().asDiagonal() *
                  svd.matrixU().adjoint();
    common_scale = std::min(common_scale,
                            std::sqrt(power_budget) /
                                (corr.weights[m] * inverses[m].norm()));
  }

  PrecoderSolution sol;
  sol.precoders.resize(m_count);
  for (int m = 0; m < m_count; ++m)
    sol.precoders[m] = common_scale * corr.weights[m] * inverses[m];
  sol.post_processor = CMat::Zero(n_streams, n_rx);
  sol.post_processor.leftCols(n_streams) =
      CMat::Identity(n_streams, n_streams) / common_scale;
  sol.objective_value =
      objective(sol.post_processor, sol.precoders, channels, corr, noise_power);
  sol.objective_trace.push_back(sol.objective_value);
  return sol;
}

}  // namespace scom
