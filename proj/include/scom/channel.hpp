#pragma once

#include <cstdint>
#include <vector>

#include "scom/types.hpp"

namespace scom {

/// Cell geometry and link-budget parameters, all in linear scale / SI units.
/// dB and dBm figures are converted once where the experiment config is parsed.
struct GeometryConfig {
  double cell_radius_m = 100.0;   // Delta
  double ps_height_m = 10.0;
  double path_loss_exp = 3.8;     // beta
  double ref_loss = 1e-6;         // ell, linear
  double gain_tx = 1.0;           // G_T, linear
  double gain_rx = 1.0;           // G_R, linear
  double noise_power_w = 1e-12;   // sigma_noise
  double power_budget_w = 0.1;    // P_0

  void validate() const;
};

struct DevicePosition {
  double radial_m = 0.0;    // delta
  double azimuth_rad = 0.0; // phi
  double distance_m = 0.0;  // device-to-server distance (height included)
};

/// One block-fading realization: per-device channel matrices plus the
/// geometry-derived large-scale gains baked into them.
struct ChannelRealization {
  std::vector<CMat> h;                 // N_R x N_T each
  std::vector<double> large_scale_gain;

  int devices() const { return static_cast<int>(h.size()); }
};

/// Radial law: delta^2 uniform on [0, Delta^2], azimuth uniform, ground level.
std::vector<DevicePosition> sample_geometry(std::uint64_t seed, int devices,
                                            const GeometryConfig& config);

/// H_m = sqrt(G_R G_T ell d^-beta) * Htilde_m with i.i.d. CN(0,1) entries.
ChannelRealization sample_channels(std::uint64_t seed,
                                   const std::vector<DevicePosition>& positions,
                                   int n_rx, int n_tx,
                                   const GeometryConfig& config);

/// Superimposes all precoded frames through the MAC and adds receiver noise:
/// Y = sum_m H_m P_m G_m + N. Enforces ||P_m||_F^2 <= P_0 + 1e-9.
CMat transmit(const ChannelRealization& channels,
              const std::vector<CMat>& precoders,
              const std::vector<CMat>& frames, double noise_power_w,
              std::uint64_t noise_seed, double power_budget_w);

/// R_hat = F * Y.
CMat post_process(const CMat& post_processor, const CMat& y);

/// ||R_hat - R||_F^2 / (N_S * K).
double empirical_sigma_w(const CMat& r_hat, const CMat& r);

}  // namespace scom
