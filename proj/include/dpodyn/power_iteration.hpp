#pragma once

#include "dpodyn/dataset.hpp"

#include <functional>

namespace dpodyn {

struct PowerIterationOptions {
  int max_iterations = 10000;
  double tolerance = 1e-8;
};

struct PowerIterationResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Dominant eigenvalue of a symmetric PSD operator given as y = A x. Stops when
// the Rayleigh quotient changes by less than tolerance (relative).
PowerIterationResult power_iteration(const std::function<void(const Vector&, Vector&)>& apply,
                                     Vector start, const PowerIterationOptions& options = {});

// Operator norm of the unbiased sample covariance of the rows of `samples`,
// started from the normalized all-ones vector. When there are fewer samples
// than dimensions the same iteration runs in the n x n Gram space.
PowerIterationResult sample_covariance_norm(const Matrix& samples,
                                            const PowerIterationOptions& options = {});

}  // namespace dpodyn
