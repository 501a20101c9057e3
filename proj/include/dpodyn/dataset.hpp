#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace dpodyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// y_w = y+ ("Yes") for positive statements, y_w = y- ("No") for negative ones.
enum class Label : signed char { kPositive = 1, kNegative = -1 };

inline double sign_of(Label label) {
  return label == Label::kPositive ? 1.0 : -1.0;
}
inline Label opposite(Label label) {
  return label == Label::kPositive ? Label::kNegative : Label::kPositive;
}

struct LabeledEmbedding {
  Vector vector;
  Label label = Label::kPositive;

  bool operator==(const LabeledEmbedding& other) const;
};

struct Behavior {
  std::string id;
  std::vector<LabeledEmbedding> samples;

  std::size_t count(Label label) const;
  bool operator==(const Behavior& other) const = default;
};

// Immutable collection of behaviors sharing one embedding dimension. Every
// behavior is balanced (|D+| = |D-|) with at least one sample of each sign.
class BehaviorDataset {
 public:
  BehaviorDataset() = default;

  // Validates all invariants; throws Error(kSchema) or Error(kEmptyDataset).
  static BehaviorDataset create(int d, std::vector<Behavior> behaviors);

  int dim() const { return d_; }
  const std::vector<Behavior>& behaviors() const { return behaviors_; }
  const Behavior& behavior(std::size_t index) const { return behaviors_.at(index); }
  // Throws Error(kDomain) for an unknown id.
  std::size_t index_of(const std::string& behavior_id) const;
  std::size_t total_samples() const;
  bool empty() const { return behaviors_.empty(); }

  bool operator==(const BehaviorDataset& other) const = default;

 private:
  BehaviorDataset(int d, std::vector<Behavior> behaviors)
      : d_(d), behaviors_(std::move(behaviors)) {}

  int d_ = 0;
  std::vector<Behavior> behaviors_;
};

// Dense row-major view used by the training loop: row i is g(x_i).
struct SampleMatrix {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows;
  Vector signs;                        // +1 / -1 per row
  std::vector<std::size_t> behavior;   // behavior index per row
  std::vector<std::size_t> behavior_counts;
};

SampleMatrix to_sample_matrix(const BehaviorDataset& dataset);

}  // namespace dpodyn
