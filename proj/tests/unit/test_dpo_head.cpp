#include "helpers.hpp"

#include "dpodyn/dpo_head.hpp"
#include "dpodyn/errors.hpp"
#include "dpodyn/preference_data.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpodyn;
using testing::axis;
using testing::point_mass;

namespace {

// DPO loss written out through explicit softmax policies, independent of the
// library: -log sigma(beta [log pi/pi_ref (y_w) - log pi/pi_ref (y_l)]).
double softmax_dpo_loss(const Matrix& initial, const Matrix& current, const BehaviorDataset& ds,
                        double beta, Eigen::Index yes, Eigen::Index no) {
  auto log_softmax = [](const Vector& logits, Eigen::Index k) {
    const double m = logits.maxCoeff();
    return logits[k] - m - std::log((logits.array() - m).exp().sum());
  };
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& b : ds.behaviors()) {
    for (const auto& s : b.samples) {
      const Vector cur = current * s.vector;
      const Vector ref = initial * s.vector;
      const Eigen::Index win = s.label == Label::kPositive ? yes : no;
      const Eigen::Index lose = s.label == Label::kPositive ? no : yes;
      const double margin = beta * ((log_softmax(cur, win) - log_softmax(ref, win)) -
                                    (log_softmax(cur, lose) - log_softmax(ref, lose)));
      total += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
      ++n;
    }
  }
  return total / double(n);
}

Matrix random_matrix(CounterRng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.next_normal();
  }
  return m;
}

HeadState head_with(const Vector& dw) {
  HeadState h = HeadState::zero(static_cast<int>(dw.size()));
  h.delta_w = dw;
  return h;
}

}  // namespace

TEST_CASE("zero head gives ln 2") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = testing::random_dataset(8 + int(seed), 3, 20, seed);
    const LossValue loss = reduced_loss(HeadState::zero(ds.dim()), ds, 0.3);
    CHECK(std::abs(loss.overall - std::log(2.0)) <= 1e-12);
    for (double l : loss.per_behavior) CHECK(std::abs(l - std::log(2.0)) <= 1e-12);
  }
}

TEST_CASE("samples with zero margin give ln 2") {
  const auto ds = BehaviorDataset::create(2, {point_mass("o", Vector(axis(2, 1)), Vector(axis(2, 1, -1)), 1)});
  const LossValue loss = reduced_loss(head_with(Vector(axis(2, 0, 5.0))), ds, 0.7);
  CHECK(std::abs(loss.overall - std::log(2.0)) <= 1e-15);
}

TEST_CASE("flipping labels equals negating the head") {
  const auto ds = testing::random_dataset(10, 2, 30, 12);
  CounterRng rng(1);
  const Vector dw = testing::random_vector(rng, 10, 0.3);
  CHECK(reduced_loss(head_with(dw), flip_labels(ds), 0.4).overall ==
        reduced_loss(head_with(-dw), ds, 0.4).overall);
}

TEST_CASE("general loss equals reduced loss for vocabularies 2 to 10") {
  CounterRng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const int vocab = 2 + trial % 9;
    const int d = 3 + (trial * 7) % 30;
    const auto ds = testing::random_dataset(d, 2, 8, 500 + trial);
    const Matrix initial = random_matrix(rng, vocab, d);
    const Vector dw = testing::random_vector(rng, d, 0.2);
    const Eigen::Index yes = trial % vocab;
    const Eigen::Index no = (yes + 1) % vocab;
    const double beta = 0.05 + 0.1 * (trial % 5);
    const auto pair = UnembeddingPair::from_head(initial, dw, yes, no);
    HeadState head = head_with(dw);
    head.w_b0 = initial.row(yes).transpose() - initial.row(no).transpose();
    const double reduced = reduced_loss(head, ds, beta).overall;
    CHECK(std::abs(general_loss(pair, ds, beta) - reduced) <= 1e-10);
    CHECK(std::abs(softmax_dpo_loss(pair.initial, pair.current, ds, beta, yes, no) - reduced) <= 1e-10);
  }
}

TEST_CASE("general loss with beta = 0 is ln 2") {
  CounterRng rng(5);
  const auto ds = testing::random_dataset(6, 1, 10, 3);
  const auto pair = UnembeddingPair::from_head(random_matrix(rng, 4, 6), testing::random_vector(rng, 6));
  CHECK(std::abs(general_loss(pair, ds, 0.0) - std::log(2.0)) <= 1e-15);
}

TEST_CASE("general loss rejects matrices that break the opposite-row contract") {
  CounterRng rng(6);
  const auto ds = testing::random_dataset(6, 1, 10, 3);
  auto pair = UnembeddingPair::from_head(random_matrix(rng, 5, 6), testing::random_vector(rng, 6));
  UnembeddingPair other_row = pair;
  other_row.current(3, 2) += 1e-3;
  UnembeddingPair not_opposite = pair;
  not_opposite.current(1, 0) += 1e-3;
  for (const auto* p : {&other_row, &not_opposite}) {
    try {
      general_loss(*p, ds, 0.5);
      FAIL("expected a contract violation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kContractViolation);
    }
  }
}

TEST_CASE("analytic gradient matches central differences of the softmax loss") {
  CounterRng rng(77);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 12;
    const int vocab = 2 + trial % 5;
    const auto ds = testing::random_dataset(d, 1 + trial % 3, 6, 900 + trial);
    const Matrix initial = random_matrix(rng, vocab, d);
    const Vector dw = testing::random_vector(rng, d, 0.5);
    const double beta = 0.1 + 0.05 * (trial % 7);
    const auto pair = UnembeddingPair::from_head(initial, dw, 0, 1);
    const Vector analytic = gradient(head_with(dw), ds, beta);
    Vector numeric(d);
    for (int j = 0; j < d; ++j) {
      Matrix up = pair.current;
      Matrix down = pair.current;
      up(0, j) += h;
      down(0, j) -= h;
      numeric[j] = (softmax_dpo_loss(initial, up, ds, beta, 0, 1) -
                    softmax_dpo_loss(initial, down, ds, beta, 0, 1)) /
                   (2.0 * h);
    }
    CHECK((analytic - numeric).norm() <= 1e-6 * analytic.norm());
  }
}

TEST_CASE("reduced loss moves both rows, so its derivative is twice the gradient") {
  CounterRng rng(78);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 5;
    const auto ds = testing::random_dataset(d, 2, 10, 40 + trial);
    const Vector dw = testing::random_vector(rng, d, 0.4);
    const Vector analytic = gradient(head_with(dw), ds, 0.3);
    Vector numeric(d);
    for (int j = 0; j < d; ++j) {
      Vector up = dw;
      Vector down = dw;
      up[j] += h;
      down[j] -= h;
      numeric[j] = (reduced_loss(head_with(up), ds, 0.3).overall -
                    reduced_loss(head_with(down), ds, 0.3).overall) /
                   (2.0 * h);
    }
    CHECK((2.0 * analytic - numeric).norm() <= 1e-6 * numeric.norm());
  }
}

TEST_CASE("gradient at zero is beta/4 times the negative mean difference") {
  const auto ds = testing::random_dataset(7, 1, 20, 31);
  const MomentReport m = estimate_moments(ds, "b0");
  const Vector g = gradient(HeadState::zero(7), ds, 0.6);
  const Vector expected = 0.6 / 4.0 * (m.minus.mean - m.plus.mean);
  CHECK((g - expected).norm() <= 1e-14 * expected.norm());
}

TEST_CASE("all-zero embeddings have zero gradient") {
  const auto ds = BehaviorDataset::create(3, {point_mass("z", Vector::Zero(3), Vector::Zero(3))});
  CHECK(gradient(head_with(Vector::Ones(3)), ds, 1.0).isZero(0.0));
}

TEST_CASE("first full-batch step is (eta beta / 4) b") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = testing::random_dataset(16, 2, 24, seed);
    const auto sm = to_sample_matrix(ds);
    Vector plus = Vector::Zero(16);
    Vector minus = Vector::Zero(16);
    for (Eigen::Index i = 0; i < sm.rows.rows(); ++i) {
      (sm.signs[i] > 0 ? plus : minus) += sm.rows.row(i).transpose();
    }
    const Vector b = (plus - minus) / (sm.rows.rows() / 2.0);
    TrainConfig config;
    config.beta = 0.2;
    config.eta = 0.7;
    config.steps = 1;
    const Vector dw = train(ds, config).head.delta_w;
    const Vector expected = config.eta * config.beta / 4.0 * b;
    CHECK((dw - expected).norm() <= 1e-10 * expected.norm());
  }
}

TEST_CASE("point-mass data is perfectly separated after one step") {
  SpecRequest r;
  r.d = 12;
  r.delta = 0.3;
  r.cov_plus = IsotropicCov{0.0};
  r.cov_minus = IsotropicCov{0.0};
  const NamedSpec spec{"pm", make_spec(r)};
  const auto ds = generate_dataset(std::span(&spec, 1), 10, 0);
  TrainConfig config;
  config.steps = 1;
  const TrainResult result = train(ds, config);
  CHECK(result.trace.records.front().accuracy[0] == 0.5);
  CHECK(result.trace.last().accuracy[0] == 1.0);
}

TEST_CASE("eta = 0 keeps every record at the initial state") {
  const auto ds = testing::random_dataset(5, 2, 10, 1);
  TrainConfig config;
  config.eta = 0.0;
  config.steps = 20;
  config.record_every = 5;
  const TrainResult result = train(ds, config);
  REQUIRE(result.trace.records.size() == 5);
  for (const auto& r : result.trace.records) {
    CHECK(std::abs(r.loss - std::log(2.0)) <= 1e-12);
    CHECK(r.norm_dw == 0.0);
  }
}

TEST_CASE("records land on multiples of record_every and the final step") {
  const auto ds = testing::random_dataset(5, 1, 10, 1);
  TrainConfig config;
  config.steps = 23;
  config.record_every = 10;
  const TrainResult result = train(ds, config);
  std::vector<std::int64_t> steps;
  for (const auto& r : result.trace.records) steps.push_back(r.step);
  CHECK(steps == std::vector<std::int64_t>{0, 10, 20, 23});
  CHECK(result.trace.delta_w_history.size() == 4);
  CHECK(result.trace.last().norm_matrix == doctest::Approx(std::sqrt(2.0) * result.trace.last().norm_dw));
}

TEST_CASE("accuracy rules") {
  const int d = 4;
  const Vector mp = axis(d, 1, 2.0);
  const Vector mm = axis(d, 2, 1.0);
  const auto ds = BehaviorDataset::create(d, {point_mass("a", mp, mm)});
  HeadState head = HeadState::zero(d);
  CHECK(accuracy(head, ds).pooled == 0.5);
  head.w_b0 = mp - mm;
  CHECK(accuracy(head, ds).pooled == 1.0);

  const auto noisy = testing::random_dataset(9, 2, 40, 5);
  CounterRng rng(8);
  HeadState h = HeadState::zero(9);
  h.w_b0 = testing::random_vector(rng, 9);
  HeadState neg = h;
  neg.w_b0 = -h.w_b0;
  const auto a = accuracy(h, noisy);
  const auto b = accuracy(neg, noisy);
  for (std::size_t i = 0; i < a.per_behavior.size(); ++i) {
    CHECK(a.per_behavior[i] + b.per_behavior[i] == doctest::Approx(1.0));
  }
}

TEST_CASE("boundary cosine") {
  HeadState head = HeadState::zero(3);
  head.delta_w = Vector(axis(3, 0, 0.5));
  CHECK(boundary_cosine(head, Vector(axis(3, 0, 7.0))) == doctest::Approx(1.0));
  CHECK(boundary_cosine(head, Vector(axis(3, 2))) == 0.0);
  CHECK(boundary_cosine(head, Vector(axis(3, 0, -1.0))) == doctest::Approx(-1.0));
  try {
    boundary_cosine(HeadState::zero(3), Vector(axis(3, 0)));
    FAIL("expected undefined cosine");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUndefinedCosine);
  }
}

TEST_CASE("flipped training is the exact negation") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ds = testing::random_dataset(20, 3, 30, seed);
    TrainConfig config;
    config.beta = 0.3;
    config.eta = 0.5;
    config.steps = 40;
    const TrainTrace a = train(ds, config).trace;
    const TrainTrace b = train(flip_labels(ds), config).trace;
    REQUIRE(a.delta_w_history.size() == b.delta_w_history.size());
    for (std::size_t k = 0; k < a.delta_w_history.size(); ++k) {
      CHECK(b.delta_w_history[k] == -a.delta_w_history[k]);
    }
  }
}

TEST_CASE("minibatch training is reproducible and seed dependent") {
  const auto ds = testing::random_dataset(6, 2, 20, 2);
  TrainConfig config;
  config.mode = TrainMode::kMinibatch;
  config.batch_size = 8;
  config.steps = 30;
  config.seed = 4;
  const Vector a = train(ds, config).head.delta_w;
  CHECK(train(ds, config).head.delta_w == a);
  config.seed = 5;
  CHECK_FALSE(train(ds, config).head.delta_w == a);
}

TEST_CASE("runaway step sizes raise a diverged error with the finite trace") {
  const auto ds = testing::random_dataset(10, 1, 10, 3, 0.5);
  TrainConfig config;
  config.beta = 50.0;
  config.eta = 1e6;
  config.steps = 100;
  try {
    train(ds, config);
    FAIL("expected divergence");
  } catch (const DivergedError& e) {
    CHECK(e.kind() == ErrorKind::kDiverged);
    REQUIRE_FALSE(e.trace().records.empty());
    CHECK(std::isfinite(e.trace().last().loss));
  }
}

TEST_CASE("config validation") {
  TrainConfig config;
  config.beta = 0.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.mode = TrainMode::kMinibatch;
  config.batch_size = 3;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("trace export is deterministic") {
  const auto ds = testing::random_dataset(4, 2, 10, 1);
  TrainConfig config;
  config.steps = 5;
  const auto a = train(ds, config).trace;
  const auto b = train(ds, config).trace;
  CHECK(trace_to_csv(a) == trace_to_csv(b));
  CHECK(trace_to_json(a, config) == trace_to_json(b, config));
  CHECK(trace_to_csv(a).rfind("step,loss,loss_b0,loss_b1,norm_dw,norm_matrix,cos_b0,cos_b1,acc_b0,acc_b1\n", 0) == 0);
}
