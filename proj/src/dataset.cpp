#include "dpodyn/dataset.hpp"

#include "dpodyn/errors.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace dpodyn {

bool LabeledEmbedding::operator==(const LabeledEmbedding& other) const {
  if (label != other.label || vector.size() != other.vector.size()) return false;
  for (Eigen::Index j = 0; j < vector.size(); ++j) {
    if (vector[j] != other.vector[j]) return false;
  }
  return true;
}

std::size_t Behavior::count(Label label) const {
  std::size_t n = 0;
  for (const auto& s : samples) n += (s.label == label) ? 1 : 0;
  return n;
}

BehaviorDataset BehaviorDataset::create(int d, std::vector<Behavior> behaviors) {
  if (behaviors.empty()) throw Error(ErrorKind::kEmptyDataset, "dataset has no behaviors");
  if (d < 1) throw Error(ErrorKind::kSchema, "embedding dimension must be positive");
  std::set<std::string> seen;
  for (const auto& behavior : behaviors) {
    if (!seen.insert(behavior.id).second) {
      throw Error(ErrorKind::kSchema, "duplicate behavior id '" + behavior.id + "'");
    }
    for (const auto& sample : behavior.samples) {
      if (sample.vector.size() != d) {
        std::ostringstream msg;
        msg << "behavior '" << behavior.id << "': embedding has " << sample.vector.size()
            << " coordinates, expected " << d;
        throw Error(ErrorKind::kSchema, msg.str());
      }
      if (!sample.vector.allFinite()) {
        throw Error(ErrorKind::kSchema, "behavior '" + behavior.id + "': non-finite coordinate");
      }
    }
    const std::size_t pos = behavior.count(Label::kPositive);
    const std::size_t neg = behavior.count(Label::kNegative);
    if (pos != neg) {
      std::ostringstream msg;
      msg << "behavior '" << behavior.id << "' is unbalanced: " << pos << " positive vs " << neg
          << " negative";
      throw Error(ErrorKind::kSchema, msg.str());
    }
    if (pos + neg < 2) {
      throw Error(ErrorKind::kSchema, "behavior '" + behavior.id + "' needs at least 2 samples");
    }
  }
  return BehaviorDataset(d, std::move(behaviors));
}

std::size_t BehaviorDataset::index_of(const std::string& behavior_id) const {
  for (std::size_t i = 0; i < behaviors_.size(); ++i) {
    if (behaviors_[i].id == behavior_id) return i;
  }
  throw Error(ErrorKind::kDomain, "unknown behavior '" + behavior_id + "'");
}

std::size_t BehaviorDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& b : behaviors_) n += b.samples.size();
  return n;
}

SampleMatrix to_sample_matrix(const BehaviorDataset& dataset) {
  SampleMatrix m;
  const auto n = static_cast<Eigen::Index>(dataset.total_samples());
  m.rows.resize(n, dataset.dim());
  m.signs.resize(n);
  m.behavior.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t b = 0; b < dataset.behaviors().size(); ++b) {
    const auto& behavior = dataset.behaviors()[b];
    m.behavior_counts.push_back(behavior.samples.size());
    for (const auto& s : behavior.samples) {
      m.rows.row(row) = s.vector.transpose();
      m.signs[row] = sign_of(s.label);
      m.behavior.push_back(b);
      ++row;
    }
  }
  return m;
}

}  // namespace dpodyn
