#include "scom/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "scom/rng.hpp"

namespace scom {

namespace {

// FFTW plan creation/destruction is not thread safe; execution via the
// new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

int CodecConfig::compressed_len() const {
  return static_cast<int>(std::lround(compression * half_dim()));
}

int CodecConfig::channel_uses() const {
  return (compressed_len() + streams - 1) / streams;
}

void CodecConfig::validate() const {
  if (model_dim <= 0 || model_dim % 2 != 0)
    throw InvalidArgument("codec: model_dim must be positive and even");
  if (sparsity <= 0.0 || sparsity > 1.0)
    throw InvalidArgument("codec: sparsity must lie in (0, 1]");
  if (compression <= 0.0 || compression > 1.0)
    throw InvalidArgument("codec: compression must lie in (0, 1]");
  if (streams <= 0) throw InvalidArgument("codec: streams must be positive");
  const int c = compressed_len();
  if (c < 1 || c > half_dim())
    throw InvalidArgument("codec: compressed length out of range");
}

struct CompressionOperator::FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  fftw_complex* in = nullptr;
  fftw_complex* out = nullptr;

  FftPlans(int n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in = fftw_alloc_complex(n);
    out = fftw_alloc_complex(n);
    // FFTW_UNALIGNED lets us execute on caller-owned buffers later.
    forward = fftw_plan_dft_1d(n, in, out, FFTW_FORWARD,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
    backward = fftw_plan_dft_1d(n, in, out, FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~FftPlans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
    if (in) fftw_free(in);
    if (out) fftw_free(out);
  }
};

CompressionOperator::CompressionOperator(std::uint64_t seed, int half_dim,
                                         double kappa)
    : half_dim_(half_dim) {
  if (half_dim <= 0) throw InvalidArgument("compressor: half_dim must be positive");
  if (kappa <= 0.0 || kappa > 1.0)
    throw InvalidArgument("compressor: kappa must lie in (0, 1]");
  const int c = static_cast<int>(std::lround(kappa * half_dim));
  if (c < 1) throw InvalidArgument("compressor: compressed length is zero");

  // Partial Fisher-Yates: first c entries of a random permutation.
  Rng rng(derive_seed(seed, /*stream=*/0));
  std::vector<int> perm(half_dim);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < c; ++i) {
    const int j = i + static_cast<int>(rng.below(half_dim - i));
    std::swap(perm[i], perm[j]);
  }
  rows_.assign(perm.begin(), perm.begin() + c);

  plans_ = std::make_unique<FftPlans>(half_dim_);
}

CompressionOperator::~CompressionOperator() = default;
CompressionOperator::CompressionOperator(CompressionOperator&&) noexcept = default;
CompressionOperator& CompressionOperator::operator=(CompressionOperator&&) noexcept = default;

CVec CompressionOperator::compress(const CVec& x) const {
  if (x.size() != half_dim_)
    throw InvalidArgument("compress: input length mismatch");
  CVec spectrum(half_dim_);
  fftw_execute_dft(plans_->forward,
                   reinterpret_cast<fftw_complex*>(const_cast<cxd*>(x.data())),
                   reinterpret_cast<fftw_complex*>(spectrum.data()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(half_dim_));
  CVec out(compressed_len());
  for (int i = 0; i < compressed_len(); ++i) out[i] = spectrum[rows_[i]] * scale;
  return out;
}

CVec CompressionOperator::adjoint(const CVec& r) const {
  if (r.size() != compressed_len())
    throw InvalidArgument("adjoint: input length mismatch");
  CVec scattered = CVec::Zero(half_dim_);
  for (int i = 0; i < compressed_len(); ++i) scattered[rows_[i]] = r[i];
  CVec out(half_dim_);
  fftw_execute_dft(plans_->backward,
                   reinterpret_cast<fftw_complex*>(scattered.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  out *= 1.0 / std::sqrt(static_cast<double>(half_dim_));
  return out;
}

RVec flip_vector(std::uint64_t shared_seed, int half_dim) {
  Rng rng(derive_seed(shared_seed, /*stream=*/1));
  RVec s(half_dim);
  for (int i = 0; i < half_dim; ++i) s[i] = (rng.next_u64() & 1u) ? 1.0 : -1.0;
  return s;
}

CVec complexify(const RVec& g) {
  if (g.size() % 2 != 0)
    throw InvalidArgument("complexify: input length must be even");
  const Eigen::Index half = g.size() / 2;
  CVec out(half);
  for (Eigen::Index i = 0; i < half; ++i) out[i] = cxd(g[i], g[half + i]);
  return out;
}

RVec decomplexify(const CVec& g) {
  RVec out(2 * g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    out[i] = g[i].real();
    out[g.size() + i] = g[i].imag();
  }
  return out;
}

CVec accumulate_sparsify(const CVec& g_cx, DeviceCodecState& state,
                         double lambda) {
  if (lambda <= 0.0 || lambda > 1.0)
    throw InvalidArgument("sparsify: lambda must lie in (0, 1]");
  if (state.residual.size() != g_cx.size())
    throw InvalidArgument("sparsify: residual length mismatch");

  const CVec accumulated = g_cx + state.residual;
  const Eigen::Index n = accumulated.size();
  const Eigen::Index keep = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::lround(lambda * static_cast<double>(n))));

  CVec sparse;
  if (keep >= n) {
    sparse = accumulated;
  } else {
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Ties resolved toward the lower index for reproducibility.
    std::nth_element(order.begin(), order.begin() + keep, order.end(),
                     [&](Eigen::Index a, Eigen::Index b) {
                       const double ma = std::abs(accumulated[a]);
                       const double mb = std::abs(accumulated[b]);
                       return ma > mb || (ma == mb && a < b);
                     });
    sparse = CVec::Zero(n);
    for (Eigen::Index i = 0; i < keep; ++i) sparse[order[i]] = accumulated[order[i]];
  }
  state.residual = accumulated - sparse;
  return sparse;
}

NormalizeResult normalize(const CVec& g_sp, const RVec& flips) {
  if (flips.size() != g_sp.size())
    throw InvalidArgument("normalize: flip vector length mismatch");
  const double sigma = g_sp.squaredNorm() / static_cast<double>(g_sp.size());
  if (sigma <= 0.0)
    throw InvalidArgument("normalize: all-zero sparsified gradient (degenerate round)");
  NormalizeResult res;
  res.scale = sigma;
  res.normalized = (g_sp.array() * flips.array().cast<cxd>()) / std::sqrt(sigma);
  return res;
}

CMat reshape_streams(const CVec& g_cp, int streams, int channel_uses) {
  if (streams <= 0 || channel_uses <= 0)
    throw InvalidArgument("reshape: streams and channel uses must be positive");
  const Eigen::Index capacity =
      static_cast<Eigen::Index>(streams) * channel_uses;
  if (capacity < g_cp.size())
    throw InvalidArgument("reshape: frame too small for compressed vector");
  CMat frame = CMat::Zero(streams, channel_uses);
  for (Eigen::Index i = 0; i < g_cp.size(); ++i)
    frame(i / channel_uses, i % channel_uses) = g_cp[i];
  return frame;
}

CVec flatten_streams(const CMat& frame) {
  const Eigen::Index k = frame.cols();
  CVec out(frame.size());
  for (Eigen::Index r = 0; r < frame.rows(); ++r)
    for (Eigen::Index c = 0; c < k; ++c) out[r * k + c] = frame(r, c);
  return out;
}

RVec rescale_output(const CVec& g_no_hat, const RVec& flips, double sigma_bar) {
  if (flips.size() != g_no_hat.size())
    throw InvalidArgument("rescale: flip vector length mismatch");
  if (sigma_bar < 0.0) throw InvalidArgument("rescale: negative scale");
  const double root = std::sqrt(sigma_bar);
  CVec unflipped =
      (g_no_hat.array() * flips.array().cast<cxd>()) * root;
  return decomplexify(unflipped);
}

}  // namespace scom
