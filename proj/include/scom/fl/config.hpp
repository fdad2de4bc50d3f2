#pragma once

#include <cstdint>
#include <string>

#include "scom/channel.hpp"
#include "scom/fl/task.hpp"
#include "scom/precoder_opt.hpp"
#include "scom/turbo_cs.hpp"
#include "scom/types.hpp"

namespace scom::fl {

enum class Aggregation { scom, ideal, zero_forcing };
enum class RhoMode { constant, measured };

/// Everything that determines one run. Parsed from a flat key-value file with
/// dotted sections; physical keys carry their unit in the name.
struct SimConfig {
  TaskConfig task;
  int rounds = 100;
  double learning_rate = 0.0;  // 0 selects 1/omega
  int batch = 0;               // 0 selects full batch

  // codec
  double sparsity = 0.05;
  double compression = 0.5;
  int streams = 4;

  // mimo + channel (linear units; converted from dB at parse time)
  int n_tx = 8;
  int n_rx = 16;
  GeometryConfig geometry;
  int deep_fade_device = -1;      // index of a device in a deep fade, or -1
  double deep_fade_gain = 1e-2;   // amplitude factor applied to its channel

  // optimizer
  OptimizerConfig optimizer;
  RhoMode rho_mode = RhoMode::measured;
  double rho0 = 0.0;       // off-diagonal of the round-0 correlation guess
  int optimize_every = 1;  // re-run the precoder optimizer every k rounds

  TurboOptions turbo;
  Aggregation aggregation = Aggregation::scom;
  std::uint64_t seed = 1;

  std::uint64_t data_seed() const { return derive_seed(seed, 11); }
  std::uint64_t geometry_seed() const { return derive_seed(seed, 12); }
  std::uint64_t channel_seed() const { return derive_seed(seed, 13); }
  std::uint64_t noise_seed() const { return derive_seed(seed, 14); }
  std::uint64_t codec_seed() const { return derive_seed(seed, 15); }
  std::uint64_t batch_seed() const { return derive_seed(seed, 16); }

  void validate() const;
};

/// Parses `key = value` lines ('#' comments). Unknown keys are errors.
SimConfig parse_config_text(const std::string& text);
SimConfig load_config(const std::string& path);

/// Full resolved dump, re-parseable; the provenance record of a run.
std::string serialize_config(const SimConfig& config);

std::string to_string(Aggregation mode);

}  // namespace scom::fl
