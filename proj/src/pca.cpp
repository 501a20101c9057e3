#include "dpodyn/pca.hpp"

#include "dpodyn/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace dpodyn {

double Projection::centroid_distance() const {
  return std::hypot(centroid_plus[0] - centroid_minus[0], centroid_plus[1] - centroid_minus[1]);
}

PcaBasis pca_basis(const Behavior& behavior, int d) {
  const auto n = static_cast<Eigen::Index>(behavior.samples.size());
  if (n < 3) {
    throw Error(ErrorKind::kInsufficientData,
                "behavior '" + behavior.id + "' needs at least 3 samples to project");
  }
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = behavior.samples[static_cast<std::size_t>(i)].vector.transpose();
  PcaBasis basis;
  basis.center = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - basis.center.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = s.size() > 0 ? static_cast<double>(std::max<Eigen::Index>(n, d)) *
                                        std::numeric_limits<double>::epsilon() * s[0]
                                  : 0.0;
  int rank = 0;
  while (rank < 2 && rank < s.size() && s[rank] > tol && s[rank] > 0.0) ++rank;

  basis.axes.resize(d, rank);
  for (int k = 0; k < rank; ++k) {
    Vector axis = svd.matrixV().col(k);
    Eigen::Index pivot = 0;
    axis.cwiseAbs().maxCoeff(&pivot);
    if (axis[pivot] < 0.0) axis = -axis;
    basis.axes.col(k) = axis;
    basis.singular_values.push_back(s[k]);
  }
  return basis;
}

Projection pca_project(const BehaviorDataset& dataset, const std::string& behavior_id,
                       const std::optional<PcaBasis>& basis) {
  const Behavior& behavior = dataset.behavior(dataset.index_of(behavior_id));
  Projection out;
  out.behavior_id = behavior_id;
  if (basis) {
    if (basis->center.size() != dataset.dim() || basis->axes.rows() != dataset.dim()) {
      throw Error(ErrorKind::kShape, "projection basis has the wrong dimension");
    }
    if (behavior.samples.size() < 3) {
      throw Error(ErrorKind::kInsufficientData, "need at least 3 samples to project");
    }
    out.basis = *basis;
  } else {
    out.basis = pca_basis(behavior, dataset.dim());
  }
  out.rank = static_cast<int>(out.basis.axes.cols());
  out.rank_deficient = out.rank < 2;

  double sum_plus[2] = {0.0, 0.0};
  double sum_minus[2] = {0.0, 0.0};
  std::size_t n_plus = 0;
  std::size_t n_minus = 0;
  for (const auto& s : behavior.samples) {
    const Vector shifted = s.vector - out.basis.center;
    ProjectedPoint p;
    p.label = s.label;
    if (out.rank > 0) p.x = out.basis.axes.col(0).dot(shifted);
    if (out.rank > 1) p.y = out.basis.axes.col(1).dot(shifted);
    double* sum = s.label == Label::kPositive ? sum_plus : sum_minus;
    sum[0] += p.x;
    sum[1] += p.y;
    (s.label == Label::kPositive ? n_plus : n_minus) += 1;
    out.points.push_back(p);
  }
  for (int k = 0; k < 2; ++k) {
    out.centroid_plus[k] = n_plus ? sum_plus[k] / static_cast<double>(n_plus) : 0.0;
    out.centroid_minus[k] = n_minus ? sum_minus[k] / static_cast<double>(n_minus) : 0.0;
  }
  return out;
}

}  // namespace dpodyn
