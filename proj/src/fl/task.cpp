#include "scom/fl/task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace scom::fl {

namespace {

RVec softmax(const RVec& scores) {
  const double top = scores.maxCoeff();
  RVec p = (scores.array() - top).exp();
  return p / p.sum();
}

}  // namespace

void TaskConfig::validate() const {
  if (devices < 1) throw InvalidArgument("task: need at least one device");
  if (samples_per_device < 1)
    throw InvalidArgument("task: every device needs data");
  if (feature_dim < 1) throw InvalidArgument("task: feature_dim must be positive");
  if (l2_reg <= 0.0)
    throw InvalidArgument("task: l2_reg must be positive (strong convexity)");
  if (kind == Kind::logistic) {
    if (classes < 2) throw InvalidArgument("task: need at least two classes");
    if (split == Split::label_skew &&
        (classes_per_device < 1 || classes_per_device > classes))
      throw InvalidArgument("task: classes_per_device out of range");
  } else if (split == Split::label_skew) {
    throw InvalidArgument("task: label_skew applies to the logistic kind only");
  }
  if (test_samples < 1) throw InvalidArgument("task: need test data");
  if (model_dim() < 2) throw InvalidArgument("task: model too small");
}

SyntheticTask::SyntheticTask(std::uint64_t seed, const TaskConfig& config)
    : config_(config) {
  config.validate();
  Rng rng(seed);
  const int d = config.feature_dim;

  if (config.kind == TaskConfig::Kind::linear) {
    RVec truth(d);
    for (int j = 0; j < d; ++j) truth[j] = rng.normal() / std::sqrt(double(d));
    auto fill = [&](RMat& x, RVec& y, int count) {
      x.resize(count, d);
      y.resize(count);
      for (int i = 0; i < count; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
        y[i] = x.row(i).dot(truth) + config.target_noise * rng.normal();
      }
    };
    data_.resize(config.devices);
    for (auto& dev : data_) fill(dev.features, dev.targets, config.samples_per_device);
    fill(test_features_, test_targets_, config.test_samples);
  } else {
    RMat means(config.classes, d);
    for (int c = 0; c < config.classes; ++c) {
      RVec dir(d);
      for (int j = 0; j < d; ++j) dir[j] = rng.normal();
      means.row(c) = config.class_separation * dir.normalized();
    }
    auto draw = [&](int label, RVec& x) {
      for (int j = 0; j < d; ++j) x[j] = means(label, j) + rng.normal();
    };
    data_.resize(config.devices);
    for (auto& dev : data_) {
      dev.features.resize(config.samples_per_device, d);
      dev.labels.resize(config.samples_per_device);
      std::vector<int> pool(config.classes);
      std::iota(pool.begin(), pool.end(), 0);
      if (config.split == TaskConfig::Split::label_skew) {
        for (int i = 0; i < config.classes_per_device; ++i) {
          const int j = i + static_cast<int>(rng.below(config.classes - i));
          std::swap(pool[i], pool[j]);
        }
        pool.resize(config.classes_per_device);
      }
      RVec x(d);
      for (int i = 0; i < config.samples_per_device; ++i) {
        const int label = pool[rng.below(pool.size())];
        draw(label, x);
        dev.features.row(i) = x;
        dev.labels[i] = label;
      }
    }
    test_features_.resize(config.test_samples, d);
    test_labels_.resize(config.test_samples);
    RVec x(d);
    for (int i = 0; i < config.test_samples; ++i) {
      const int label = static_cast<int>(rng.below(config.classes));
      draw(label, x);
      test_features_.row(i) = x;
      test_labels_[i] = label;
    }
  }

  weights_.assign(config.devices, 1.0 / config.devices);
  measure_curvature();
}

int SyntheticTask::device_samples(int m) const {
  return static_cast<int>(data_.at(m).features.rows());
}

void SyntheticTask::measure_curvature() {
  // Pooled feature Gram; its extreme eigenvalues bound the loss curvature.
  const int d = config_.feature_dim;
  RMat gram = RMat::Zero(d, d);
  double total = 0.0;
  for (const auto& dev : data_) {
    gram.noalias() += dev.features.transpose() * dev.features;
    total += static_cast<double>(dev.features.rows());
  }
  gram /= total;
  Eigen::SelfAdjointEigenSolver<RMat> eig(gram, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = std::max(eig.eigenvalues().minCoeff(), 0.0);
  if (config_.kind == TaskConfig::Kind::linear) {
    smoothness_ = top + config_.l2_reg;
    strong_convexity_ = bottom + config_.l2_reg;
  } else {
    // softmax Hessian factor diag(p) - p p^T has spectral norm <= 1/2
    smoothness_ = 0.5 * top + config_.l2_reg;
    strong_convexity_ = config_.l2_reg;
  }
}

RVec SyntheticTask::logistic_scores(const RVec& theta, const RVec& x) const {
  const int d = config_.feature_dim;
  RVec scores(config_.classes);
  for (int c = 0; c < config_.classes; ++c)
    scores[c] = theta.segment(c * d, d).dot(x);
  return scores;
}

double SyntheticTask::device_loss(int device, const RVec& theta) const {
  const auto& dev = data_.at(device);
  const int q = static_cast<int>(dev.features.rows());
  double acc = 0.0;
  if (config_.kind == TaskConfig::Kind::linear) {
    acc = 0.5 * (dev.features * theta - dev.targets).squaredNorm() / q;
  } else {
    for (int i = 0; i < q; ++i) {
      const RVec p = softmax(logistic_scores(theta, dev.features.row(i)));
      acc -= std::log(std::max(p[dev.labels[i]], 1e-300));
    }
    acc /= q;
  }
  return acc + 0.5 * config_.l2_reg * theta.squaredNorm();
}

double SyntheticTask::loss(const RVec& theta) const {
  double acc = 0.0;
  for (int m = 0; m < devices(); ++m) acc += weights_[m] * device_loss(m, theta);
  return acc;
}

RVec SyntheticTask::device_gradient(int device, const RVec& theta, int batch,
                                    Rng* rng) const {
  const auto& dev = data_.at(device);
  const int q = static_cast<int>(dev.features.rows());
  const int d = config_.feature_dim;

  std::vector<int> picks;
  if (batch > 0 && batch < q) {
    if (!rng) throw InvalidArgument("gradient: mini-batching needs a generator");
    picks.resize(batch);
    for (int& idx : picks) idx = static_cast<int>(rng->below(q));
  } else {
    picks.resize(q);
    std::iota(picks.begin(), picks.end(), 0);
  }

  RVec grad = RVec::Zero(theta.size());
  if (config_.kind == TaskConfig::Kind::linear) {
    for (int i : picks)
      grad += (dev.features.row(i).dot(theta) - dev.targets[i]) *
              dev.features.row(i).transpose();
  } else {
    for (int i : picks) {
      RVec p = softmax(logistic_scores(theta, dev.features.row(i)));
      p[dev.labels[i]] -= 1.0;
      for (int c = 0; c < config_.classes; ++c)
        grad.segment(c * d, d) += p[c] * dev.features.row(i).transpose();
    }
  }
  grad /= static_cast<double>(picks.size());
  grad += config_.l2_reg * theta;
  return grad;
}

RVec SyntheticTask::sample_gradient(int device, int sample,
                                    const RVec& theta) const {
  const auto& dev = data_.at(device);
  const int d = config_.feature_dim;
  RVec grad = RVec::Zero(theta.size());
  if (config_.kind == TaskConfig::Kind::linear) {
    grad = (dev.features.row(sample).dot(theta) - dev.targets[sample]) *
           dev.features.row(sample).transpose();
  } else {
    RVec p = softmax(logistic_scores(theta, dev.features.row(sample)));
    p[dev.labels[sample]] -= 1.0;
    for (int c = 0; c < config_.classes; ++c)
      grad.segment(c * d, d) = p[c] * dev.features.row(sample).transpose();
  }
  return grad + config_.l2_reg * theta;
}

RVec SyntheticTask::gradient(const RVec& theta) const {
  RVec grad = RVec::Zero(theta.size());
  for (int m = 0; m < devices(); ++m)
    grad += weights_[m] * device_gradient(m, theta);
  return grad;
}

double SyntheticTask::test_accuracy(const RVec& theta) const {
  if (config_.kind == TaskConfig::Kind::linear) {
    const RVec pred = test_features_ * theta;
    const double mean = test_targets_.mean();
    const double ss_tot = (test_targets_.array() - mean).square().sum();
    const double ss_res = (pred - test_targets_).squaredNorm();
    return 1.0 - ss_res / std::max(ss_tot, 1e-300);
  }
  int hits = 0;
  for (int i = 0; i < test_features_.rows(); ++i) {
    const RVec scores = logistic_scores(theta, test_features_.row(i));
    int best = 0;
    scores.maxCoeff(&best);
    hits += best == test_labels_[i];
  }
  return static_cast<double>(hits) / test_features_.rows();
}

const RVec& SyntheticTask::minimizer() const {
  if (minimizer_) return *minimizer_;
  const int dim = model_dim();
  if (config_.kind == TaskConfig::Kind::linear) {
    const int d = config_.feature_dim;
    RMat hessian = RMat::Zero(d, d);
    RVec rhs = RVec::Zero(d);
    double total = 0.0;
    for (const auto& dev : data_) {
      hessian.noalias() += dev.features.transpose() * dev.features;
      rhs.noalias() += dev.features.transpose() * dev.targets;
      total += static_cast<double>(dev.features.rows());
    }
    hessian /= total;
    rhs /= total;
    hessian.diagonal().array() += config_.l2_reg;
    minimizer_ = hessian.ldlt().solve(rhs);
    return *minimizer_;
  }

  // Damped Newton on the full objective.
  const int d = config_.feature_dim;
  const int k = config_.classes;
  RVec theta = RVec::Zero(dim);
  for (int newton = 0; newton < 100; ++newton) {
    const RVec grad = gradient(theta);
    if (grad.norm() < 1e-12) break;
    RMat hessian = RMat::Zero(dim, dim);
    double total = 0.0;
    for (const auto& dev : data_)
      total += static_cast<double>(dev.features.rows());
    for (const auto& dev : data_) {
      for (int i = 0; i < dev.features.rows(); ++i) {
        const RVec x = dev.features.row(i);
        const RVec p = softmax(logistic_scores(theta, x));
        const RMat w = (RMat(p.asDiagonal()) - p * p.transpose()) / total;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b)
            if (w(a, b) != 0.0)
              hessian.block(a * d, b * d, d, d).noalias() +=
                  w(a, b) * (x * x.transpose());
      }
    }
    hessian.diagonal().array() += config_.l2_reg;
    const RVec step = hessian.ldlt().solve(grad);
    double scale = 1.0;
    const double base = loss(theta);
    while (scale > 1e-6 && loss(theta - scale * step) > base) scale *= 0.5;
    theta -= scale * step;
  }
  minimizer_ = theta;
  return *minimizer_;
}

}  // namespace scom::fl
