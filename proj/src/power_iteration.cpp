#include "dpodyn/power_iteration.hpp"

#include <cmath>

namespace dpodyn {

PowerIterationResult power_iteration(const std::function<void(const Vector&, Vector&)>& apply,
                                     Vector start, const PowerIterationOptions& options) {
  PowerIterationResult result;
  const double start_norm = start.norm();
  if (start_norm == 0.0) return result;
  Vector v = start / start_norm;
  Vector y(v.size());
  double previous = 0.0;
  for (int k = 1; k <= options.max_iterations; ++k) {
    apply(v, y);
    const double rayleigh = v.dot(y);
    const double y_norm = y.norm();
    result.value = rayleigh;
    result.iterations = k;
    if (y_norm == 0.0) {
      // Start vector in the null space: nothing more to learn from iterating.
      result.converged = false;
      return result;
    }
    if (k > 1 && std::abs(rayleigh - previous) <= options.tolerance * std::abs(rayleigh)) {
      result.converged = true;
      return result;
    }
    previous = rayleigh;
    v = y / y_norm;
  }
  return result;
}

PowerIterationResult sample_covariance_norm(const Matrix& samples,
                                            const PowerIterationOptions& options) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  PowerIterationResult result;
  if (n < 2) return result;
  const Vector mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - mean.transpose();
  if (centered.squaredNorm() == 0.0) {
    result.converged = true;
    return result;
  }
  const double scale = 1.0 / static_cast<double>(n - 1);
  const Vector ones = Vector::Ones(d) / std::sqrt(static_cast<double>(d));

  if (d <= n) {
    return power_iteration(
        [&](const Vector& x, Vector& y) { y = scale * (centered.transpose() * (centered * x)); },
        ones, options);
  }

  // Same iterates expressed through w = X_c v: the Rayleigh quotient is
  // ||w||^2 / (n-1) and the next w is G w / sqrt(w' G w) with G = X_c X_c'.
  const Matrix gram = centered * centered.transpose();
  Vector w = centered * ones;
  double previous = 0.0;
  for (int k = 1; k <= options.max_iterations; ++k) {
    const Vector gw = gram * w;
    const double rayleigh = scale * w.squaredNorm();
    const double wgw = w.dot(gw);
    result.value = rayleigh;
    result.iterations = k;
    if (wgw <= 0.0) {
      result.converged = false;
      return result;
    }
    if (k > 1 && std::abs(rayleigh - previous) <= options.tolerance * std::abs(rayleigh)) {
      result.converged = true;
      return result;
    }
    previous = rayleigh;
    w = gw / std::sqrt(wgw);
  }
  return result;
}

}  // namespace dpodyn
