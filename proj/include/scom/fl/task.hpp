#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scom/rng.hpp"
#include "scom/types.hpp"

namespace scom::fl {

/// Desk-scale learning task on synthetic Gaussian data. Both kinds are
/// L2-regularized and therefore strongly convex with measurable curvature.
struct TaskConfig {
  enum class Kind { linear, logistic };
  enum class Split { iid, label_skew };

  Kind kind = Kind::logistic;
  Split split = Split::iid;
  int devices = 10;
  int samples_per_device = 200;
  int feature_dim = 20;
  int classes = 10;            // logistic only
  int classes_per_device = 4;  // label_skew only
  double l2_reg = 0.1;
  double class_separation = 1.5;  // logistic: distance scale of class means
  double target_noise = 0.1;      // linear: observation noise std
  int test_samples = 2000;

  int model_dim() const {
    return kind == Kind::linear ? feature_dim : classes * feature_dim;
  }
  void validate() const;
};

/// Per-device datasets plus loss/gradient/accuracy oracles.
class SyntheticTask {
 public:
  SyntheticTask(std::uint64_t seed, const TaskConfig& config);

  const TaskConfig& config() const { return config_; }
  int model_dim() const { return config_.model_dim(); }
  int devices() const { return config_.devices; }
  int device_samples(int m) const;
  const std::vector<double>& weights() const { return weights_; }  // q_m

  double loss(const RVec& theta) const;      // global F
  RVec gradient(const RVec& theta) const;    // grad F
  double device_loss(int device, const RVec& theta) const;
  /// Full-batch device gradient, or a mini-batch one when batch > 0.
  RVec device_gradient(int device, const RVec& theta, int batch = 0,
                       Rng* rng = nullptr) const;
  /// Gradient of the sample-wise loss (regularizer included).
  RVec sample_gradient(int device, int sample, const RVec& theta) const;

  /// Classification accuracy on held-out data; R^2 for the linear kind.
  double test_accuracy(const RVec& theta) const;

  /// Global curvature bounds: smoothness from the feature Gram spectrum,
  /// strong convexity from the regularizer (exact for the linear kind).
  double smoothness() const { return smoothness_; }
  double strong_convexity() const { return strong_convexity_; }

  /// High-precision minimizer (normal equations / Newton), cached.
  const RVec& minimizer() const;

 private:
  struct DeviceData {
    RMat features;               // Q_m x d
    RVec targets;                // linear
    std::vector<int> labels;     // logistic
  };

  RVec logistic_scores(const RVec& theta, const RVec& x) const;
  void measure_curvature();

  TaskConfig config_;
  std::vector<DeviceData> data_;
  std::vector<double> weights_;
  RMat test_features_;
  RVec test_targets_;
  std::vector<int> test_labels_;
  double smoothness_ = 1.0;
  double strong_convexity_ = 1.0;
  mutable std::optional<RVec> minimizer_;
};

}  // namespace scom::fl
