#pragma once

#include "dpodyn/dataset.hpp"
#include "dpodyn/dpo_head.hpp"
#include "dpodyn/preference_data.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dpodyn {

struct Thm1Params {
  double beta_prime = 1.0;
  double eta = 0.0;
  int d = 2;
  double delta = 0.0;
  double c_v = 1.0;
  double c_n = 1.0;
  double gamma = 1.0;  // n / sqrt(d)
  double alpha = 2.0;
  double c_prime = 1.0;

  double beta() const;  // beta' d^{-1/2}
};

struct Thm2Params : Thm1Params {
  double v = 0.0;
  double phi = 0.0;
  double c_n_prime = 1.0;
  double w_b_norm = 0.0;
};

// 6 beta' eta t d^{delta - 1/2}
double thm1_bound(const Thm1Params& p, double t);

struct Probability {
  double value = 0.0;
  double raw = 0.0;  // before clamping
  bool clamped = false;
};

// 1 - 2n exp(-c' d^{alpha/4}) - 4 exp(-gamma d^{alpha delta} / (4 c_v)), clamped to [0, 1].
Probability thm1_probability(const Thm1Params& p, double n);

struct Thm2Bound {
  double value = 0.0;
  bool in_window = true;  // (4 log 2)/log d <= v <= 1/2 - delta
  bool vacuous = false;   // 1 - 13 d^{-v} - phi <= 0
};

Thm2Bound thm2_bound(const Thm2Params& p, double t);
// d^{1/2 - delta - v} / (72 beta'^2 eta c_n'), real valued.
double thm2_horizon(const Thm2Params& p);

struct Thm3Threshold {
  double value = 0.0;
  bool applicable = true;  // denominator positive
};

Thm3Threshold thm3_threshold(const Thm2Params& p);
// Fraction of samples whose signed margin along direction/||direction|| is at
// least `threshold`.
double thm3_floor(const BehaviorDataset& dataset, const Vector& direction, double threshold);
double thm3_floor(const Behavior& behavior, const Vector& direction, double threshold);

struct PriorityReport {
  std::vector<std::string> behavior_ids;
  std::vector<Vector> b;
  std::vector<double> b_norm;
  Vector b_bar;
  std::size_t b_star = 0;
  bool b_star_tie = false;
  std::vector<double> priority;
  std::vector<double> improvement_proxy;  // b_bar . b_i
};

PriorityReport priority_levels(const BehaviorDataset& dataset);

struct FirstStepImprovement {
  std::vector<double> improvement;  // mean of s_i 2 beta dW(1).g_i per behavior
  std::vector<double> ratio;        // improvement / (b_bar . b_i); NaN when undefined
  std::vector<bool> undefined;
  double constant = 0.0;            // common ratio
  double max_relative_spread = 0.0;
  bool proportional = false;        // spread within 1e-8
};

FirstStepImprovement first_step_improvement(const BehaviorDataset& dataset, double beta,
                                            double eta);

enum class Verdict { kPass, kFail, kNotApplicable };
std::string_view to_string(Verdict verdict);

struct BoundPoint {
  std::int64_t t = 0;
  double bound = 0.0;
  double empirical = 0.0;
  bool ok = true;
};

struct TheoremCheck {
  int theorem_id = 0;
  Verdict verdict = Verdict::kNotApplicable;
  std::string note;
  std::vector<BoundPoint> points;
  std::int64_t violations = 0;
};

struct BoundInputs {
  Thm2Params params;
  std::vector<int> theorems = {1};
  AssumptionVerdict hypotheses_thm1;
  std::optional<AssumptionVerdict> hypotheses_thm2;
  std::optional<AssumptionVerdict> hypotheses_thm3;
  std::size_t behavior_index = 0;
  // Direction mu+ - mu- for the cosine and margin checks (generating means or
  // a sample estimate).
  Vector mean_direction;
  std::size_t n = 0;
  // Dataset used for the accuracy floor.
  const BehaviorDataset* dataset = nullptr;
};

struct BoundReport {
  std::vector<AssumptionVerdict> hypotheses;
  std::vector<TheoremCheck> checks;
  Probability probability;
  double thm2_horizon = 0.0;
  double thm3_threshold = 0.0;
  double thm3_floor = 0.0;
  Verdict summary = Verdict::kNotApplicable;

  std::string to_json() const;
};

BoundReport verify_trace(const TrainTrace& trace, const BoundInputs& inputs);

}  // namespace dpodyn
