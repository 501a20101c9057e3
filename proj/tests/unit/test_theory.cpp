#include "helpers.hpp"

#include "dpodyn/errors.hpp"
#include "dpodyn/theory.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpodyn;
using testing::axis;
using testing::point_mass;

namespace {

Thm2Params thm2_example() {
  Thm2Params p;
  p.beta_prime = 1.0;
  p.eta = 0.25;
  p.d = 4096;
  p.v = 1.0 / 3.0;
  p.delta = 0.1;
  p.phi = 0.0;
  p.c_n_prime = 1.0;
  p.w_b_norm = 0.0;
  return p;
}

}  // namespace

TEST_CASE("norm bound values") {
  Thm1Params p;
  p.beta_prime = 1.0;
  p.eta = 0.25;
  p.delta = 0.5;
  for (int d : {2, 100, 4096}) {
    p.d = d;
    CHECK(thm1_bound(p, 8) == doctest::Approx(12.0).epsilon(1e-15));
  }
  p.delta = 0.25;
  p.d = 256;
  CHECK(thm1_bound(p, 8) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(thm1_bound(p, 0) == 0.0);
  CHECK(p.beta() == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("probability expression and clamping") {
  Thm1Params p;
  p.alpha = 2.0;
  p.delta = 0.5;
  p.d = 100;
  p.gamma = 10.0;
  p.c_v = 1.0;
  p.c_prime = 1e6;
  // exponent gamma d^{alpha delta} / (4 c_v) = 250, so the mean term is 4e^-250
  CHECK(p.gamma * std::pow(100.0, 1.0) / (4.0 * p.c_v) == 250.0);
  Probability prob = thm1_probability(p, 50);
  CHECK(prob.value == 1.0);
  CHECK_FALSE(prob.clamped);

  p.gamma = 0.1;  // mean term 4 e^{-2.5}
  prob = thm1_probability(p, 50);
  CHECK(prob.raw == doctest::Approx(1.0 - 4.0 * std::exp(-2.5)).epsilon(1e-14));
  CHECK_FALSE(prob.clamped);

  p.c_prime = 1e-6;
  prob = thm1_probability(p, 1e9);
  CHECK(prob.value == 0.0);
  CHECK(prob.clamped);
  CHECK(prob.raw < 0.0);
}

TEST_CASE("cosine bound at t = 0 is phi") {
  Thm2Params p = thm2_example();
  p.phi = 0.3;
  CHECK(thm2_bound(p, 0).value == 0.3);
}

TEST_CASE("cosine bound example value") {
  // (1 - 13 * 4096^{-1/3}) * 0.25 * 4096^{-0.4} / (1 / 24), high-precision reference
  const Thm2Bound b = thm2_bound(thm2_example(), 1);
  CHECK(b.value == doctest::Approx(0.0403839265428645119577642285976).epsilon(1e-13));
  CHECK(b.in_window);
  CHECK_FALSE(b.vacuous);
}

TEST_CASE("vacuous cosine bound is flagged") {
  Thm2Params p = thm2_example();
  p.phi = 0.5;
  p.d = 64;
  p.v = 0.35;
  const Thm2Bound b = thm2_bound(p, 5);
  CHECK(b.vacuous);
  CHECK(b.value <= p.phi);
}

TEST_CASE("horizon formula") {
  Thm2Params p = thm2_example();
  p.v = 0.35;
  p.eta = 0.001;
  p.c_n_prime = 0.78;
  const double expected = std::pow(4096.0, 0.5 - 0.1 - 0.35) / (72.0 * 0.001 * 0.78);
  CHECK(thm2_horizon(p) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("margin threshold simplification with phi = 0 and W_B = 0") {
  Thm2Params p = thm2_example();
  p.v = 0.35;
  p.c_n_prime = 1.0;
  const double d = 4096.0;
  const double expected = 2.0 * std::pow(d, 0.45) * 3.0 / (1.0 - 13.0 * std::pow(d, -0.35));
  const Thm3Threshold t = thm3_threshold(p);
  CHECK(t.applicable);
  CHECK(t.value == doctest::Approx(expected).epsilon(1e-13));
  CHECK(t.value == doctest::Approx(865.6127445137647).epsilon(1e-12));
}

TEST_CASE("margin floor on point-mass data") {
  const int d = 3;
  const auto ds = BehaviorDataset::create(d, {point_mass("p", Vector(axis(d, 0, 2.0)), Vector(axis(d, 0, -2.0)))});
  const Vector dir = axis(d, 0, 5.0);
  CHECK(thm3_floor(ds, dir, 2.0) == 1.0);
  CHECK(thm3_floor(ds, dir, 2.0001) == 0.0);
  CHECK_THROWS_AS(thm3_floor(ds, Vector::Zero(d), 1.0), Error);
}

TEST_CASE("priority of a single behavior is 1") {
  const auto ds = testing::random_dataset(6, 1, 10, 1);
  const PriorityReport r = priority_levels(ds);
  CHECK(r.priority[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("orthogonal equal-norm behaviors share priority 1/sqrt 2") {
  const int d = 4;
  const auto ds = BehaviorDataset::create(
      d, {point_mass("a", Vector(axis(d, 0)), Vector(axis(d, 0, -1))),
          point_mass("b", Vector(axis(d, 1)), Vector(axis(d, 1, -1)))});
  const PriorityReport r = priority_levels(ds);
  CHECK(r.priority[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(r.priority[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(r.b_star == 0);
  CHECK(r.b_star_tie);
}

TEST_CASE("duplicate behaviors both have priority 1") {
  const auto base = testing::random_dataset(5, 1, 12, 3);
  Behavior copy = base.behavior(0);
  copy.id = "copy";
  const auto ds = BehaviorDataset::create(5, {base.behavior(0), copy});
  const PriorityReport r = priority_levels(ds);
  CHECK(r.priority[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.priority[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("priority is rotation and scale invariant") {
  const auto ds = testing::random_dataset(6, 3, 12, 9);
  const PriorityReport before = priority_levels(ds);
  // Householder reflection plus a uniform scale.
  Vector u = Vector::Ones(6).normalized();
  const Matrix q = (Matrix::Identity(6, 6) - 2.0 * u * u.transpose()) * 3.5;
  std::vector<Behavior> moved;
  for (auto b : ds.behaviors()) {
    for (auto& s : b.samples) s.vector = q * s.vector;
    moved.push_back(b);
  }
  const PriorityReport after = priority_levels(BehaviorDataset::create(6, moved));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(after.priority[i] == doctest::Approx(before.priority[i]).epsilon(1e-12));
  }
}

TEST_CASE("priorities sum to m ||b_bar|| / ||b_star||") {
  const auto ds = testing::random_dataset(8, 4, 10, 14);
  const PriorityReport r = priority_levels(ds);
  double sum = 0.0;
  for (double p : r.priority) sum += p;
  CHECK(sum == doctest::Approx(4.0 * r.b_bar.norm() / r.b_norm[r.b_star]).epsilon(1e-12));
}

TEST_CASE("opposite behaviors are a degenerate priority") {
  const int d = 2;
  const auto ds = BehaviorDataset::create(
      d, {point_mass("a", Vector(axis(d, 0)), Vector(axis(d, 0, -1))),
          point_mass("b", Vector(axis(d, 0, -1)), Vector(axis(d, 0)))});
  try {
    priority_levels(ds);
    FAIL("expected degenerate priority");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegeneratePriority);
  }
}

TEST_CASE("first-step improvement of orthogonal behaviors with a 2:1 norm ratio is 4:1") {
  const int d = 4;
  const auto ds = BehaviorDataset::create(
      d, {point_mass("a", Vector(axis(d, 0, 1.0)), Vector(axis(d, 0, -1.0))),
          point_mass("b", Vector(axis(d, 1, 0.5)), Vector(axis(d, 1, -0.5)))});
  const FirstStepImprovement f = first_step_improvement(ds, 0.5, 0.3);
  CHECK(f.improvement[0] / f.improvement[1] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(f.proportional);
}

TEST_CASE("duplicate behaviors improve identically") {
  const auto base = testing::random_dataset(5, 1, 12, 3);
  Behavior copy = base.behavior(0);
  copy.id = "copy";
  const auto ds = BehaviorDataset::create(5, {base.behavior(0), copy});
  const FirstStepImprovement f = first_step_improvement(ds, 0.5, 0.3);
  CHECK(f.improvement[0] == f.improvement[1]);
}

TEST_CASE("orthogonal-to-mean behavior has an undefined ratio") {
  const int d = 3;
  const auto ds = BehaviorDataset::create(
      d, {point_mass("a", Vector(axis(d, 0)), Vector(axis(d, 0, -1))),
          point_mass("b", Vector(axis(d, 1)), Vector(axis(d, 1, -1))),
          point_mass("c", Vector(axis(d, 1, -1)), Vector(axis(d, 1)))});
  const FirstStepImprovement f = first_step_improvement(ds, 0.5, 0.3);
  CHECK_FALSE(f.undefined[0]);
  CHECK(f.undefined[1]);
  CHECK(f.undefined[2]);
  CHECK(std::isnan(f.ratio[1]));
}

namespace {

BoundInputs inputs_for(const BehaviorDataset& ds, double beta_prime, double eta) {
  const MomentReport m = estimate_moments(ds, ds.behavior(0).id);
  AssumptionParams ap;
  ap.beta_prime = beta_prime;
  ap.eta = eta;
  BoundInputs in;
  in.hypotheses_thm1 = check_assumptions(m, 1, ap);
  in.params.beta_prime = beta_prime;
  in.params.eta = eta;
  in.params.d = ds.dim();
  in.params.delta = m.delta_hat;
  in.n = ds.behavior(0).samples.size();
  return in;
}

}  // namespace

TEST_CASE("a zero-step trace passes") {
  const auto ds = testing::random_dataset(16, 1, 20, 2, 0.2, 0.01);
  TrainConfig config;
  config.beta = 0.25;
  config.eta = 0.0;
  config.steps = 0;
  const TrainTrace trace = train(ds, config).trace;
  const BoundInputs in = inputs_for(ds, 1.0, 0.01);
  REQUIRE(in.hypotheses_thm1.passed());
  const BoundReport report = verify_trace(trace, in);
  CHECK(report.summary == Verdict::kPass);
  CHECK(report.checks[0].violations == 0);
}

TEST_CASE("an eta = 0 trace has zero norms under the bound") {
  const auto ds = testing::random_dataset(16, 1, 20, 2, 0.2, 0.01);
  TrainConfig config;
  config.beta = 0.25;
  config.eta = 0.0;
  config.steps = 10;
  const TrainTrace trace = train(ds, config).trace;
  const BoundReport report = verify_trace(trace, inputs_for(ds, 1.0, 0.01));
  CHECK(report.summary == Verdict::kPass);
  for (const auto& p : report.checks[0].points) CHECK(p.empirical == 0.0);
}

TEST_CASE("failed hypotheses mark the report not applicable") {
  const auto ds = testing::random_dataset(16, 1, 20, 2, 0.2, 1.0);
  TrainConfig config;
  config.beta = 0.25;
  config.eta = 100.0;
  config.steps = 3;
  const TrainTrace trace = train(ds, config).trace;
  const BoundInputs in = inputs_for(ds, 1.0, 100.0);
  CHECK_FALSE(in.hypotheses_thm1.passed());
  const BoundReport report = verify_trace(trace, in);
  CHECK(report.summary == Verdict::kNotApplicable);
  CHECK(report.checks[0].points.empty());
  CHECK(report.to_json().find("\"verdict\": \"not-applicable\"") != std::string::npos);
}
