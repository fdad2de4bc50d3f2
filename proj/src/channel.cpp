#include "scom/channel.hpp"

#include <cmath>

#include "scom/rng.hpp"

namespace scom {

void GeometryConfig::validate() const {
  if (cell_radius_m < 0.0) throw InvalidArgument("geometry: negative cell radius");
  if (ps_height_m <= 0.0) throw InvalidArgument("geometry: server height must be positive");
  if (ref_loss <= 0.0 || gain_tx <= 0.0 || gain_rx <= 0.0)
    throw InvalidArgument("geometry: gains and reference loss must be positive");
  if (noise_power_w < 0.0) throw InvalidArgument("geometry: negative noise power");
  if (power_budget_w <= 0.0) throw InvalidArgument("geometry: power budget must be positive");
}

std::vector<DevicePosition> sample_geometry(std::uint64_t seed, int devices,
                                            const GeometryConfig& config) {
  if (devices < 1) throw InvalidArgument("geometry: need at least one device");
  config.validate();
  Rng rng(seed);
  std::vector<DevicePosition> out(devices);
  const double r2_max = config.cell_radius_m * config.cell_radius_m;
  for (auto& p : out) {
    const double r2 = rng.uniform() * r2_max;
    p.radial_m = std::sqrt(r2);
    p.azimuth_rad = rng.uniform() * 2.0 * M_PI;
    p.distance_m = std::sqrt(r2 + config.ps_height_m * config.ps_height_m);
  }
  return out;
}

ChannelRealization sample_channels(std::uint64_t seed,
                                   const std::vector<DevicePosition>& positions,
                                   int n_rx, int n_tx,
                                   const GeometryConfig& config) {
  if (n_rx <= 0 || n_tx <= 0)
    throw InvalidArgument("channel: antenna counts must be positive");
  config.validate();
  Rng rng(seed);
  ChannelRealization real;
  real.h.reserve(positions.size());
  real.large_scale_gain.reserve(positions.size());
  for (const auto& p : positions) {
    const double gain = config.gain_rx * config.gain_tx * config.ref_loss *
                        std::pow(p.distance_m, -config.path_loss_exp);
    real.large_scale_gain.push_back(gain);
    real.h.push_back(std::sqrt(gain) * rng.cnormal_matrix(n_rx, n_tx));
  }
  return real;
}

CMat transmit(const ChannelRealization& channels,
              const std::vector<CMat>& precoders,
              const std::vector<CMat>& frames, double noise_power_w,
              std::uint64_t noise_seed, double power_budget_w) {
  const int m_count = channels.devices();
  if (static_cast<int>(precoders.size()) != m_count ||
      static_cast<int>(frames.size()) != m_count)
    throw InvalidArgument("transmit: device count mismatch");
  if (m_count == 0) throw InvalidArgument("transmit: no devices");

  const Eigen::Index n_rx = channels.h[0].rows();
  const Eigen::Index k = frames[0].cols();

  CMat y = CMat::Zero(n_rx, k);
  for (int m = 0; m < m_count; ++m) {
    const CMat& h = channels.h[m];
    const CMat& p = precoders[m];
    const CMat& g = frames[m];
    if (h.cols() != p.rows() || p.cols() != g.rows() || g.cols() != k ||
        h.rows() != n_rx)
      throw InvalidArgument("transmit: shape mismatch at device " + std::to_string(m));
    if (p.squaredNorm() > power_budget_w + 1e-9)
      throw InvalidArgument("transmit: power constraint violated at device " +
                            std::to_string(m));
    y.noalias() += h * p * g;
  }
  if (noise_power_w > 0.0) {
    Rng rng(noise_seed);
    y += rng.cnormal_matrix(n_rx, k, noise_power_w);
  }
  return y;
}

CMat post_process(const CMat& post_processor, const CMat& y) {
  if (post_processor.cols() != y.rows())
    throw InvalidArgument("post_process: shape mismatch");
  return post_processor * y;
}

double empirical_sigma_w(const CMat& r_hat, const CMat& r) {
  if (r_hat.rows() != r.rows() || r_hat.cols() != r.cols())
    throw InvalidArgument("sigma_w: shape mismatch");
  return (r_hat - r).squaredNorm() / static_cast<double>(r.size());
}

}  // namespace scom
