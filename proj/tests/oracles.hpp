// Independent reference implementations used only by the test suites. They
// deliberately avoid the code paths they check: dense matrices instead of
// fast transforms, grid search instead of solvers, Monte Carlo instead of
// quadrature.
#pragma once

#include <cmath>
#include <functional>

#include "scom/rng.hpp"
#include "scom/types.hpp"

namespace scom::oracle {

/// Dense unitary DFT matrix (entry exp(-2 pi j d d'/n) / sqrt(n)).
inline CMat dense_dft(int n) {
  CMat xi(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double angle = -2.0 * M_PI * double(r) * double(c) / n;
      xi(r, c) = cxd(std::cos(angle), std::sin(angle)) / std::sqrt(double(n));
    }
  return xi;
}

/// Dense partial-DFT sensing matrix from explicit row selection.
inline CMat dense_partial_dft(const std::vector<int>& rows, int n) {
  const CMat xi = dense_dft(n);
  CMat a(rows.size(), n);
  for (size_t i = 0; i < rows.size(); ++i) a.row(i) = xi.row(rows[i]);
  return a;
}

/// Iteratively refined grid minimization of f over [lo, hi]^2.
inline std::pair<Eigen::Vector2d, double> grid_search_2d(
    const std::function<double(double, double)>& f, double lo0, double hi0,
    double lo1, double hi1, int points = 81, int zooms = 12) {
  const double box_lo0 = lo0, box_hi0 = hi0, box_lo1 = lo1, box_hi1 = hi1;
  Eigen::Vector2d best(0.5 * (lo0 + hi0), 0.5 * (lo1 + hi1));
  double best_value = f(best[0], best[1]);
  for (int zoom = 0; zoom < zooms; ++zoom) {
    for (int i = 0; i < points; ++i) {
      const double x = lo0 + (hi0 - lo0) * i / (points - 1);
      for (int j = 0; j < points; ++j) {
        const double y = lo1 + (hi1 - lo1) * j / (points - 1);
        const double value = f(x, y);
        if (value < best_value) {
          best_value = value;
          best << x, y;
        }
      }
    }
    // Zoom in around the incumbent, never leaving the feasible box.
    const double span0 = (hi0 - lo0) * 2.0 / (points - 1);
    const double span1 = (hi1 - lo1) * 2.0 / (points - 1);
    lo0 = std::max(box_lo0, best[0] - span0);
    hi0 = std::min(box_hi0, best[0] + span0);
    lo1 = std::max(box_lo1, best[1] - span1);
    hi1 = std::min(box_hi1, best[1] + span1);
  }
  return {best, best_value};
}

/// Draws one Bernoulli-Gaussian vector.
inline CVec draw_bernoulli_gaussian(Rng& rng, int n, double sparsity,
                                    double variance) {
  CVec g = CVec::Zero(n);
  for (int i = 0; i < n; ++i)
    if (rng.uniform() < sparsity) g[i] = rng.cnormal(variance);
  return g;
}

}  // namespace scom::oracle
