#include "dpodyn/dpo_head.hpp"

#include "dpodyn/format.hpp"
#include "dpodyn/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dpodyn {
namespace {

constexpr std::uint64_t kBoundaryStream = 0xb0a4d;

void require_dim(int expected, Eigen::Index got, const char* what) {
  if (got != expected) {
    std::ostringstream msg;
    msg << what << " has dimension " << got << ", expected " << expected;
    throw Error(ErrorKind::kShape, msg.str());
  }
}

struct Evaluation {
  LossValue loss;
  double max_abs_logit = 0.0;
};

// Losses from precomputed projections rows * dW.
Evaluation evaluate_loss(const SampleMatrix& samples, const Vector& projections, double beta) {
  Evaluation e;
  const std::size_t m = samples.behavior_counts.size();
  std::vector<double> sums(m, 0.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < projections.size(); ++i) {
    const double z = 2.0 * beta * (samples.signs[i] * projections[i]);
    e.max_abs_logit = std::max(e.max_abs_logit, std::abs(z));
    const double l = -log_sigmoid(z);
    sums[samples.behavior[static_cast<std::size_t>(i)]] += l;
    total += l;
  }
  e.loss.per_behavior.resize(m);
  for (std::size_t b = 0; b < m; ++b) {
    e.loss.per_behavior[b] = sums[b] / static_cast<double>(samples.behavior_counts[b]);
  }
  e.loss.overall = total / static_cast<double>(projections.size());
  return e;
}

Vector sample_mean_difference(const Behavior& behavior, int d) {
  Vector plus = Vector::Zero(d);
  Vector minus = Vector::Zero(d);
  for (const auto& s : behavior.samples) (s.label == Label::kPositive ? plus : minus) += s.vector;
  return plus / static_cast<double>(behavior.count(Label::kPositive)) -
         minus / static_cast<double>(behavior.count(Label::kNegative));
}

double cosine_or_nan(const Vector& boundary, const Vector& direction) {
  const double denom = boundary.norm() * direction.norm();
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(boundary.dot(direction) / denom, -1.0, 1.0);
}

}  // namespace

HeadState HeadState::zero(int d) {
  return HeadState{Vector::Zero(d), Vector::Zero(d), 0};
}

Vector seeded_initial_boundary(const Vector& target, double norm, double phi, std::uint64_t seed) {
  if (!(phi >= -1.0 && phi <= 1.0)) throw Error(ErrorKind::kDomain, "phi must lie in [-1, 1]");
  if (norm < 0.0) throw Error(ErrorKind::kDomain, "boundary norm must be non-negative");
  const double target_norm = target.norm();
  if (target_norm == 0.0) throw Error(ErrorKind::kDomain, "target direction is zero");
  const Vector u = target / target_norm;
  if (target.size() < 2 && phi * phi != 1.0) {
    throw Error(ErrorKind::kDomain, "need d >= 2 for an oblique boundary");
  }
  CounterRng rng(CounterRng::derive_key(seed, kBoundaryStream));
  Vector r(target.size());
  double r_norm = 0.0;
  while (r_norm < 1e-8) {
    for (Eigen::Index j = 0; j < r.size(); ++j) r[j] = rng.next_normal();
    r -= r.dot(u) * u;
    r_norm = r.norm();
  }
  const Vector v = r / r_norm;
  return norm * (phi * u + std::sqrt(std::max(0.0, 1.0 - phi * phi)) * v);
}

void TrainConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(ErrorKind::kDomain, "beta must be > 0");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::kDomain, "eta must be >= 0");
  if (steps < 0) throw Error(ErrorKind::kDomain, "steps must be >= 0");
  if (record_every < 1) throw Error(ErrorKind::kDomain, "record_every must be >= 1");
  if (mode == TrainMode::kMinibatch && (batch_size < 2 || batch_size % 2 != 0)) {
    throw Error(ErrorKind::kDomain, "batch_size must be even and >= 2");
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

LossValue reduced_loss(const HeadState& head, const BehaviorDataset& dataset, double beta) {
  require_dim(dataset.dim(), head.delta_w.size(), "head");
  const SampleMatrix samples = to_sample_matrix(dataset);
  const Vector projections = samples.rows * head.delta_w;
  return evaluate_loss(samples, projections, beta).loss;
}

UnembeddingPair UnembeddingPair::from_head(const Matrix& initial, const Vector& delta_w,
                                           Eigen::Index yes_row, Eigen::Index no_row) {
  UnembeddingPair pair{initial, initial, yes_row, no_row};
  pair.current.row(yes_row) += delta_w.transpose();
  pair.current.row(no_row) -= delta_w.transpose();
  return pair;
}

double general_loss(const UnembeddingPair& weights, const BehaviorDataset& dataset, double beta) {
  const Matrix& w0 = weights.initial;
  const Matrix& wt = weights.current;
  if (w0.rows() != wt.rows() || w0.cols() != wt.cols()) {
    throw Error(ErrorKind::kShape, "initial and current unembedding shapes differ");
  }
  require_dim(dataset.dim(), w0.cols(), "unembedding");
  const Eigen::Index vocab = w0.rows();
  const Eigen::Index yes = weights.yes_row;
  const Eigen::Index no = weights.no_row;
  if (vocab < 2 || yes < 0 || no < 0 || yes >= vocab || no >= vocab || yes == no) {
    throw Error(ErrorKind::kShape, "y+/y- rows must be two distinct rows of the vocabulary");
  }
  for (Eigen::Index r = 0; r < vocab; ++r) {
    if (r == yes || r == no) continue;
    if (wt.row(r) != w0.row(r)) {
      throw Error(ErrorKind::kContractViolation,
                  "row " + std::to_string(r) + " changed; only the y+/y- rows may move");
    }
  }
  const Vector moved_yes = (wt.row(yes) - w0.row(yes)).transpose();
  const Vector moved_no = (wt.row(no) - w0.row(no)).transpose();
  const double scale =
      w0.row(yes).norm() + w0.row(no).norm() + moved_yes.norm() + moved_no.norm();
  if ((moved_yes + moved_no).norm() > 1e-10 * scale) {
    throw Error(ErrorKind::kContractViolation, "y+ and y- rows did not move by opposite amounts");
  }

  auto log_policy = [](const Vector& logits) {
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    return Vector(logits.array() - lse);
  };

  double total = 0.0;
  std::size_t n = 0;
  for (const auto& behavior : dataset.behaviors()) {
    for (const auto& s : behavior.samples) {
      const Vector log_pi = log_policy(wt * s.vector);
      const Vector log_ref = log_policy(w0 * s.vector);
      const Eigen::Index preferred = s.label == Label::kPositive ? yes : no;
      const Eigen::Index rejected = s.label == Label::kPositive ? no : yes;
      const double margin = (log_pi[preferred] - log_pi[rejected]) -
                            (log_ref[preferred] - log_ref[rejected]);
      total += -log_sigmoid(beta * margin);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

Vector gradient(const HeadState& head, const SampleMatrix& samples,
                std::span<const std::size_t> rows, double beta) {
  if (rows.empty()) throw Error(ErrorKind::kDomain, "gradient of an empty batch");
  require_dim(static_cast<int>(samples.rows.cols()), head.delta_w.size(), "head");
  Vector grad = Vector::Zero(head.delta_w.size());
  for (const std::size_t i : rows) {
    const auto row = samples.rows.row(static_cast<Eigen::Index>(i));
    const double s = samples.signs[static_cast<Eigen::Index>(i)];
    const double z = 2.0 * beta * (s * row.dot(head.delta_w));
    // -beta s sigma(-z) g: positives pull dW toward g, negatives push it away.
    const double coefficient = -beta * s * sigmoid(-z);
    grad += coefficient * row.transpose();
  }
  return grad / static_cast<double>(rows.size());
}

Vector gradient(const HeadState& head, const BehaviorDataset& batch, double beta) {
  if (batch.total_samples() == 0) throw Error(ErrorKind::kDomain, "gradient of an empty batch");
  require_dim(batch.dim(), head.delta_w.size(), "head");
  const SampleMatrix samples = to_sample_matrix(batch);
  std::vector<std::size_t> rows(batch.total_samples());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return gradient(head, samples, rows, beta);
}

TrainResult train(const BehaviorDataset& dataset, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.empty() || dataset.total_samples() == 0) {
    throw Error(ErrorKind::kEmptyDataset, "cannot train on an empty dataset");
  }
  const int d = dataset.dim();
  const std::size_t m = dataset.behaviors().size();
  const SampleMatrix samples = to_sample_matrix(dataset);
  const auto n = static_cast<std::size_t>(samples.rows.rows());

  HeadState head = HeadState::zero(d);
  if (options.initial_boundary) {
    require_dim(d, options.initial_boundary->size(), "initial boundary");
    head.w_b0 = *options.initial_boundary;
  }
  std::vector<Vector> references;
  if (options.reference_directions.empty()) {
    for (const auto& behavior : dataset.behaviors()) {
      references.push_back(sample_mean_difference(behavior, d));
    }
  } else {
    if (options.reference_directions.size() != m) {
      throw Error(ErrorKind::kShape, "need one reference direction per behavior");
    }
    for (const auto& r : options.reference_directions) require_dim(d, r.size(), "reference");
    references = options.reference_directions;
  }

  TrainTrace trace;
  for (const auto& behavior : dataset.behaviors()) trace.behavior_ids.push_back(behavior.id);
  const auto started = std::chrono::steady_clock::now();

  auto diverged = [&](const std::string& why) {
    return DivergedError("training diverged at step " + std::to_string(head.step) + ": " + why,
                         trace, head);
  };

  auto record = [&] {
    const Vector projections = samples.rows * head.delta_w;
    const Evaluation e = evaluate_loss(samples, projections, config.beta);
    if (!std::isfinite(e.loss.overall) || e.max_abs_logit > options.divergence_limit) {
      throw diverged("logit margin out of range");
    }
    TraceRecord r;
    r.step = head.step;
    r.loss = e.loss.overall;
    r.behavior_loss = e.loss.per_behavior;
    r.norm_dw = head.delta_w.norm();
    r.norm_matrix = std::sqrt(2.0) * r.norm_dw;
    const Vector boundary = head.boundary();
    const Vector scores = samples.rows * boundary;
    std::vector<double> correct(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const bool predicted_positive = scores[static_cast<Eigen::Index>(i)] >= 0.0;
      const bool positive = samples.signs[static_cast<Eigen::Index>(i)] > 0.0;
      if (predicted_positive == positive) correct[samples.behavior[i]] += 1.0;
    }
    for (std::size_t b = 0; b < m; ++b) {
      r.cosine.push_back(cosine_or_nan(boundary, references[b]));
      r.accuracy.push_back(correct[b] / static_cast<double>(samples.behavior_counts[b]));
    }
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    trace.records.push_back(std::move(r));
    trace.delta_w_history.push_back(head.delta_w);
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n;  // forces a shuffle before the first minibatch
  std::uint64_t epoch = 0;

  record();
  for (std::int64_t t = 1; t <= config.steps; ++t) {
    Vector grad;
    if (config.mode == TrainMode::kFullBatch) {
      const Vector projections = samples.rows * head.delta_w;
      Vector coefficients(static_cast<Eigen::Index>(n));
      for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
        const double z = 2.0 * config.beta * (samples.signs[i] * projections[i]);
        if (!(std::abs(z) <= options.divergence_limit)) throw diverged("logit margin out of range");
        coefficients[i] = -config.beta * samples.signs[i] * sigmoid(-z);
      }
      grad = (samples.rows.transpose() * coefficients) / static_cast<double>(n);
    } else {
      if (cursor >= n) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng rng(CounterRng::derive_key(config.seed, epoch++));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
        cursor = 0;
      }
      const std::size_t take = std::min(config.batch_size, n - cursor);
      const std::span<const std::size_t> batch(order.data() + cursor, take);
      cursor += take;
      for (const std::size_t i : batch) {
        const double z = 2.0 * config.beta *
                         (samples.signs[static_cast<Eigen::Index>(i)] *
                          samples.rows.row(static_cast<Eigen::Index>(i)).dot(head.delta_w));
        if (!(std::abs(z) <= options.divergence_limit)) throw diverged("logit margin out of range");
      }
      grad = gradient(head, samples, batch, config.beta);
    }
    Vector next = head.delta_w - config.eta * grad;
    if (!next.allFinite()) throw diverged("non-finite weights");
    head.delta_w = std::move(next);
    head.step = t;
    if (t % config.record_every == 0 || t == config.steps) record();
  }
  return {std::move(head), std::move(trace)};
}

AccuracyValue accuracy(const HeadState& head, const BehaviorDataset& dataset) {
  require_dim(dataset.dim(), head.delta_w.size(), "head");
  require_dim(dataset.dim(), head.w_b0.size(), "initial boundary");
  const Vector boundary = head.boundary();
  AccuracyValue acc;
  double correct_total = 0.0;
  for (const auto& behavior : dataset.behaviors()) {
    double correct = 0.0;
    for (const auto& s : behavior.samples) {
      const bool predicted_positive = boundary.dot(s.vector) >= 0.0;
      if (predicted_positive == (s.label == Label::kPositive)) correct += 1.0;
    }
    acc.per_behavior.push_back(correct / static_cast<double>(behavior.samples.size()));
    correct_total += correct;
  }
  acc.pooled = correct_total / static_cast<double>(dataset.total_samples());
  return acc;
}

double boundary_cosine(const HeadState& head, const Vector& direction) {
  require_dim(head.dim(), direction.size(), "direction");
  if (direction.norm() == 0.0) throw Error(ErrorKind::kUndefinedCosine, "direction is zero");
  const Vector boundary = head.boundary();
  if (boundary.norm() == 0.0) {
    throw Error(ErrorKind::kUndefinedCosine, "decision boundary is the zero vector");
  }
  return cosine_or_nan(boundary, direction);
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "step,loss";
  for (const auto& id : trace.behavior_ids) out << ",loss_" << id;
  out << ",norm_dw,norm_matrix";
  for (const auto& id : trace.behavior_ids) out << ",cos_" << id;
  for (const auto& id : trace.behavior_ids) out << ",acc_" << id;
  out << '\n';
  for (const auto& r : trace.records) {
    out << r.step << ',' << format_number(r.loss);
    for (double v : r.behavior_loss) out << ',' << format_number(v);
    out << ',' << format_number(r.norm_dw) << ',' << format_number(r.norm_matrix);
    for (double v : r.cosine) out << ',' << format_number(v);
    for (double v : r.accuracy) out << ',' << format_number(v);
    out << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json numbers(const std::vector<double>& values) {
  nlohmann::json arr = nlohmann::json::array();
  for (double v : values) arr.push_back(number_or_null(v));
  return arr;
}

}  // namespace

std::string trace_to_json(const TrainTrace& trace, const TrainConfig& config) {
  nlohmann::ordered_json doc;
  doc["config"] = {
      {"beta", config.beta},
      {"eta", config.eta},
      {"steps", config.steps},
      {"mode", config.mode == TrainMode::kFullBatch ? "full_batch" : "minibatch"},
      {"batch_size", config.batch_size},
      {"seed", config.seed},
      {"record_every", config.record_every},
  };
  doc["behaviors"] = trace.behavior_ids;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& r : trace.records) {
    nlohmann::ordered_json rec;
    rec["step"] = r.step;
    rec["loss"] = number_or_null(r.loss);
    rec["behavior_loss"] = numbers(r.behavior_loss);
    rec["norm_dw"] = number_or_null(r.norm_dw);
    rec["norm_matrix"] = number_or_null(r.norm_matrix);
    rec["cosine"] = numbers(r.cosine);
    rec["accuracy"] = numbers(r.accuracy);
    records.push_back(std::move(rec));
  }
  doc["records"] = std::move(records);
  return doc.dump(2) + "\n";
}

}  // namespace dpodyn
