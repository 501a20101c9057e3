#pragma once

#include "dpodyn/dataset.hpp"
#include "dpodyn/errors.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dpodyn {

// Trained state of the reduced model. Only the y+ row displacement is stored;
// the y- row moves by exactly -delta_w.
struct HeadState {
  Vector delta_w;  // W_U(t)[y+] - W_U(0)[y+]
  Vector w_b0;     // W_U(0)[y+] - W_U(0)[y-]
  std::int64_t step = 0;

  static HeadState zero(int d);
  int dim() const { return static_cast<int>(delta_w.size()); }
  // Decision boundary W_B + 2 dW.
  Vector boundary() const { return w_b0 + 2.0 * delta_w; }
};

// Random initial boundary with a prescribed norm and cosine `phi` to `target`.
Vector seeded_initial_boundary(const Vector& target, double norm, double phi, std::uint64_t seed);

enum class TrainMode { kFullBatch, kMinibatch };

struct TrainConfig {
  double beta = 0.1;
  double eta = 0.1;
  std::int64_t steps = 100;
  TrainMode mode = TrainMode::kFullBatch;
  std::size_t batch_size = 0;  // minibatch mode only; must be even
  std::uint64_t seed = 0;      // minibatch shuffling
  std::int64_t record_every = 1;

  void validate() const;
};

struct TraceRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  std::vector<double> behavior_loss;
  double norm_dw = 0.0;
  double norm_matrix = 0.0;  // sqrt(2) ||dW||, operator norm of W_U(t) - W_U(0)
  std::vector<double> cosine;  // NaN when the boundary is the zero vector
  std::vector<double> accuracy;
  double wall_seconds = 0.0;   // not exported
};

struct TrainTrace {
  std::vector<std::string> behavior_ids;
  std::vector<TraceRecord> records;
  std::vector<Vector> delta_w_history;  // dW at every recorded step

  const TraceRecord& last() const { return records.back(); }
};

// Raised when a logit margin leaves the safe range; carries the last finite trace.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, TrainTrace trace, HeadState head)
      : Error(ErrorKind::kDiverged, what), trace_(std::move(trace)), head_(std::move(head)) {}
  const TrainTrace& trace() const { return trace_; }
  const HeadState& head() const { return head_; }

 private:
  TrainTrace trace_;
  HeadState head_;
};

// Numerically stable sigmoid and log-sigmoid.
double sigmoid(double z);
double log_sigmoid(double z);

struct LossValue {
  double overall = 0.0;
  std::vector<double> per_behavior;
};

// Mean of -log sigma(2 beta s_i dW.g_i).
LossValue reduced_loss(const HeadState& head, const BehaviorDataset& dataset, double beta);

// Full unembedding matrices (|V| x d) before and after training, plus the
// token rows that play y+ and y-.
struct UnembeddingPair {
  Matrix initial;
  Matrix current;
  Eigen::Index yes_row = 0;
  Eigen::Index no_row = 1;

  // Builds `current` from `initial` by moving y+ by dW and y- by -dW.
  static UnembeddingPair from_head(const Matrix& initial, const Vector& delta_w,
                                   Eigen::Index yes_row = 0, Eigen::Index no_row = 1);
};

// DPO loss through explicit softmax policies. Throws kContractViolation if rows
// other than y+/y- moved or the two moved rows are not opposite.
double general_loss(const UnembeddingPair& weights, const BehaviorDataset& dataset, double beta);

// Gradient of the mean loss over `rows` with respect to the y+ row.
Vector gradient(const HeadState& head, const SampleMatrix& samples,
                std::span<const std::size_t> rows, double beta);
Vector gradient(const HeadState& head, const BehaviorDataset& batch, double beta);

struct TrainOptions {
  // Per-behavior direction for the boundary cosine; defaults to the sample b_i.
  std::vector<Vector> reference_directions;
  std::optional<Vector> initial_boundary;  // W_B, zero when unset
  double divergence_limit = 700.0;         // max |2 beta dW.g|
};

struct TrainResult {
  HeadState head;
  TrainTrace trace;
};

TrainResult train(const BehaviorDataset& dataset, const TrainConfig& config,
                  const TrainOptions& options = {});

struct AccuracyValue {
  std::vector<double> per_behavior;
  double pooled = 0.0;
};

// Predict positive iff (W_B + 2 dW).g >= 0.
AccuracyValue accuracy(const HeadState& head, const BehaviorDataset& dataset);

// Throws kUndefinedCosine when the boundary or the direction is zero.
double boundary_cosine(const HeadState& head, const Vector& direction);

// CSV: step, loss, loss_<b>..., norm_dw, norm_matrix, cos_<b>..., acc_<b>...
std::string trace_to_csv(const TrainTrace& trace);
// JSON document with the config embedded.
std::string trace_to_json(const TrainTrace& trace, const TrainConfig& config);

}  // namespace dpodyn
