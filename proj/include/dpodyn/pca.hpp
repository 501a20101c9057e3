#pragma once

#include "dpodyn/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dpodyn {

// Two principal axes and the center they were computed around.
struct PcaBasis {
  Vector center;
  Matrix axes;  // d x rank, rank <= 2, unit columns
  std::vector<double> singular_values;
};

struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
  Label label = Label::kPositive;
};

struct Projection {
  std::string behavior_id;
  PcaBasis basis;
  int rank = 0;  // 2, or 1/0 for rank-deficient data
  bool rank_deficient = false;
  std::vector<ProjectedPoint> points;
  double centroid_plus[2] = {0.0, 0.0};
  double centroid_minus[2] = {0.0, 0.0};

  double centroid_distance() const;
};

// Top-2 principal components of one behavior's pooled samples. Each axis is
// oriented so its largest-magnitude loading is positive.
PcaBasis pca_basis(const Behavior& behavior, int d);

// Projects onto `basis` when given (fixed before/after comparisons), otherwise
// onto the behavior's own components. Needs at least 3 samples.
Projection pca_project(const BehaviorDataset& dataset, const std::string& behavior_id,
                       const std::optional<PcaBasis>& basis = std::nullopt);

}  // namespace dpodyn
