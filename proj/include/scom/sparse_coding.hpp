#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "scom/types.hpp"

namespace scom {

/// Static parameters of the device-side gradient codec.
///
/// `model_dim` is the padded (even) gradient length D. The compressed length
/// is C = round(kappa * D/2) and the per-round channel uses K = ceil(C / N_S);
/// the frame tail beyond C is zero-padded.
struct CodecConfig {
  int model_dim = 0;           // D, even after padding
  double sparsity = 1.0;       // lambda in (0, 1]
  double compression = 1.0;    // kappa in (0, 1]
  int streams = 1;             // N_S
  std::uint64_t shared_seed = 0;

  static int padded_dim(int raw_dim) { return raw_dim + (raw_dim % 2); }

  int half_dim() const { return model_dim / 2; }
  int compressed_len() const;
  int channel_uses() const;
  void validate() const;
};

/// Row-subsampled unitary DFT acting as the shared compressing map.
/// Forward and adjoint are computed as fast transforms; the row selection is
/// reproducible from the seed alone.
class CompressionOperator {
 public:
  CompressionOperator(std::uint64_t seed, int half_dim, double kappa);
  ~CompressionOperator();

  CompressionOperator(const CompressionOperator&) = delete;
  CompressionOperator& operator=(const CompressionOperator&) = delete;
  CompressionOperator(CompressionOperator&&) noexcept;
  CompressionOperator& operator=(CompressionOperator&&) noexcept;

  /// S * (Xi * x); input length D/2, output length C.
  CVec compress(const CVec& x) const;
  /// Xi^H * S^T * r; input length C, output length D/2.
  CVec adjoint(const CVec& r) const;

  int half_dim() const { return half_dim_; }
  int compressed_len() const { return static_cast<int>(rows_.size()); }
  double kappa() const { return static_cast<double>(rows_.size()) / half_dim_; }
  /// Selected DFT rows, 0-based.
  const std::vector<int>& selected_rows() const { return rows_; }

 private:
  struct FftPlans;
  int half_dim_;
  std::vector<int> rows_;
  std::unique_ptr<FftPlans> plans_;
};

/// Error-accumulation memory of one device.
struct DeviceCodecState {
  CVec residual;           // Delta_m, length D/2
  double last_scale = 0.0; // sigma_m of the latest round

  explicit DeviceCodecState(int half_dim) : residual(CVec::Zero(half_dim)) {}
};

/// +-1 sign vector shared by devices and server, derived from the codec seed.
RVec flip_vector(std::uint64_t shared_seed, int half_dim);

/// Packs the real gradient into complex form: first half -> real parts,
/// second half -> imaginary parts. Rejects odd lengths.
CVec complexify(const RVec& g);
/// Inverse stacking of complexify.
RVec decomplexify(const CVec& g);

/// Adds the residual, keeps the k = max(1, round(lambda*D/2)) largest-
/// magnitude entries (ties: lower index wins) and stores the complement back
/// into `state.residual`, so sparse + residual_new == input + residual_old
/// exactly.
CVec accumulate_sparsify(const CVec& g_cx, DeviceCodecState& state, double lambda);

struct NormalizeResult {
  CVec normalized;
  double scale = 0.0;  // sigma_m
};

/// Sign-flips and scales to unit empirical second moment. All-zero input is a
/// degenerate round and is rejected; callers skip transmission instead.
NormalizeResult normalize(const CVec& g_sp, const RVec& flips);

/// Splits a compressed vector into an N_S x K frame, row n holding the n-th
/// length-K slice; the tail beyond the input length is zero.
CMat reshape_streams(const CVec& g_cp, int streams, int channel_uses);
/// Row-major flattening (vec of the transpose); exact inverse of
/// reshape_streams on the first C entries.
CVec flatten_streams(const CMat& frame);

/// Undoes flipping/normalization and unstacks to the real gradient estimate.
RVec rescale_output(const CVec& g_no_hat, const RVec& flips, double sigma_bar);

}  // namespace scom
