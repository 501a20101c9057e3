#include "dpodyn/theory.hpp"

#include "dpodyn/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpodyn {

double Thm1Params::beta() const { return beta_prime / std::sqrt(static_cast<double>(d)); }

double thm1_bound(const Thm1Params& p, double t) {
  return 6.0 * p.beta_prime * p.eta * t * std::pow(static_cast<double>(p.d), p.delta - 0.5);
}

Probability thm1_probability(const Thm1Params& p, double n) {
  const double d = static_cast<double>(p.d);
  const double norm_term = 2.0 * n * std::exp(-p.c_prime * std::pow(d, p.alpha / 4.0));
  const double mean_term = 4.0 * std::exp(-p.gamma * std::pow(d, p.alpha * p.delta) / (4.0 * p.c_v));
  Probability prob;
  prob.raw = 1.0 - norm_term - mean_term;
  prob.value = std::clamp(prob.raw, 0.0, 1.0);
  prob.clamped = prob.value != prob.raw;
  return prob;
}

Thm2Bound thm2_bound(const Thm2Params& p, double t) {
  const double d = static_cast<double>(p.d);
  Thm2Bound out;
  const double v_min = 4.0 / std::log2(d);
  out.in_window = p.v >= v_min && p.v <= 0.5 - p.delta;
  const double numerator = 1.0 - 13.0 * std::pow(d, -p.v) - p.phi;
  out.vacuous = numerator <= 0.0;
  const double denominator = 8.0 * p.w_b_norm + 1.0 / (24.0 * p.beta_prime * p.c_n_prime);
  out.value = p.phi + numerator * p.beta_prime * p.eta * t * std::pow(d, p.delta - 0.5) / denominator;
  return out;
}

double thm2_horizon(const Thm2Params& p) {
  const double d = static_cast<double>(p.d);
  return std::pow(d, 0.5 - p.delta - p.v) / (72.0 * p.beta_prime * p.beta_prime * p.eta * p.c_n_prime);
}

Thm3Threshold thm3_threshold(const Thm2Params& p) {
  const double d = static_cast<double>(p.d);
  const double d_v = std::pow(d, p.v);
  const double denominator = 3.0 * p.phi * d_v + (1.0 - 13.0 / d_v - p.phi);
  Thm3Threshold out;
  out.applicable = denominator > 0.0;
  out.value = 2.0 * p.c_n_prime * std::pow(d, p.delta + p.v) *
              (576.0 * p.beta_prime * p.c_n_prime * p.w_b_norm + 3.0) / denominator;
  if (!out.applicable) out.value = std::numeric_limits<double>::infinity();
  return out;
}

double thm3_floor(const Behavior& behavior, const Vector& direction, double threshold) {
  const double norm = direction.norm();
  if (norm == 0.0) throw Error(ErrorKind::kDomain, "margin direction is zero");
  if (behavior.samples.empty()) return 0.0;
  const Vector u = direction / norm;
  std::size_t hits = 0;
  for (const auto& s : behavior.samples) {
    if (sign_of(s.label) * u.dot(s.vector) >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(behavior.samples.size());
}

double thm3_floor(const BehaviorDataset& dataset, const Vector& direction, double threshold) {
  const double norm = direction.norm();
  if (norm == 0.0) throw Error(ErrorKind::kDomain, "margin direction is zero");
  std::size_t hits = 0;
  std::size_t total = 0;
  const Vector u = direction / norm;
  for (const auto& behavior : dataset.behaviors()) {
    for (const auto& s : behavior.samples) {
      if (sign_of(s.label) * u.dot(s.vector) >= threshold) ++hits;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

PriorityReport priority_levels(const BehaviorDataset& dataset) {
  if (dataset.empty()) throw Error(ErrorKind::kEmptyDataset, "no behaviors");
  const int d = dataset.dim();
  PriorityReport r;
  r.b_bar = Vector::Zero(d);
  for (const auto& behavior : dataset.behaviors()) {
    Vector plus = Vector::Zero(d);
    Vector minus = Vector::Zero(d);
    for (const auto& s : behavior.samples) (s.label == Label::kPositive ? plus : minus) += s.vector;
    Vector b = plus / static_cast<double>(behavior.count(Label::kPositive)) -
               minus / static_cast<double>(behavior.count(Label::kNegative));
    r.behavior_ids.push_back(behavior.id);
    r.b_norm.push_back(b.norm());
    r.b_bar += b;
    r.b.push_back(std::move(b));
  }
  r.b_bar /= static_cast<double>(r.b.size());
  const double b_bar_norm = r.b_bar.norm();
  if (b_bar_norm == 0.0) {
    throw Error(ErrorKind::kDegeneratePriority, "mean update direction b_bar is zero");
  }
  for (std::size_t i = 1; i < r.b_norm.size(); ++i) {
    if (r.b_norm[i] > r.b_norm[r.b_star]) r.b_star = i;
  }
  for (std::size_t i = 0; i < r.b_norm.size(); ++i) {
    if (i != r.b_star &&
        std::abs(r.b_norm[i] - r.b_norm[r.b_star]) <= 1e-12 * r.b_norm[r.b_star]) {
      r.b_star_tie = true;
    }
  }
  for (const auto& b : r.b) {
    const double proxy = r.b_bar.dot(b);
    r.improvement_proxy.push_back(proxy);
    r.priority.push_back(proxy / (b_bar_norm * r.b_norm[r.b_star]));
  }
  return r;
}

FirstStepImprovement first_step_improvement(const BehaviorDataset& dataset, double beta,
                                            double eta) {
  const PriorityReport priority = priority_levels(dataset);
  TrainConfig config;
  config.beta = beta;
  config.eta = eta;
  config.steps = 1;
  const TrainResult run = train(dataset, config);
  const Vector& dw = run.head.delta_w;

  FirstStepImprovement out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < dataset.behaviors().size(); ++j) {
    const Behavior& behavior = dataset.behaviors()[j];
    double sum = 0.0;
    for (const auto& s : behavior.samples) sum += sign_of(s.label) * 2.0 * beta * dw.dot(s.vector);
    const double improvement = sum / static_cast<double>(behavior.samples.size());
    out.improvement.push_back(improvement);
    const double proxy = priority.improvement_proxy[j];
    const bool undefined = std::abs(proxy) <= 1e-12 * priority.b_bar.norm() * priority.b_norm[j];
    out.undefined.push_back(undefined);
    out.ratio.push_back(undefined ? nan : improvement / proxy);
  }
  bool have_constant = false;
  for (std::size_t j = 0; j < out.ratio.size(); ++j) {
    if (out.undefined[j]) continue;
    if (!have_constant) {
      out.constant = out.ratio[j];
      have_constant = true;
    }
    out.max_relative_spread = std::max(out.max_relative_spread,
                                       std::abs(out.ratio[j] - out.constant) / std::abs(out.constant));
  }
  out.proportional = have_constant && out.max_relative_spread <= 1e-8;
  return out;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kNotApplicable: return "not-applicable";
  }
  return "unknown";
}

namespace {

const AssumptionVerdict* hypotheses_for(const BoundInputs& in, int theorem) {
  if (theorem == 1) return &in.hypotheses_thm1;
  if (theorem == 2) return in.hypotheses_thm2 ? &*in.hypotheses_thm2 : nullptr;
  return in.hypotheses_thm3 ? &*in.hypotheses_thm3 : nullptr;
}

void finish(TheoremCheck& check) {
  check.violations = std::count_if(check.points.begin(), check.points.end(),
                                   [](const BoundPoint& p) { return !p.ok; });
  check.verdict = check.violations == 0 ? Verdict::kPass : Verdict::kFail;
}

}  // namespace

BoundReport verify_trace(const TrainTrace& trace, const BoundInputs& inputs) {
  BoundReport report;
  const Thm2Params& p = inputs.params;
  const std::size_t b = inputs.behavior_index;
  report.probability = thm1_probability(p, static_cast<double>(inputs.n));
  report.thm2_horizon = thm2_horizon(p);

  for (const int theorem : inputs.theorems) {
    if (theorem < 1 || theorem > 3) throw Error(ErrorKind::kDomain, "theorem id must be 1, 2 or 3");
    TheoremCheck check;
    check.theorem_id = theorem;
    const AssumptionVerdict* hyp = hypotheses_for(inputs, theorem);
    if (hyp) report.hypotheses.push_back(*hyp);
    if (!hyp || !hyp->passed()) {
      check.note = hyp ? "hypotheses not satisfied" : "hypotheses not evaluated";
      report.checks.push_back(std::move(check));
      continue;
    }

    if (theorem == 1) {
      for (const auto& r : trace.records) {
        const double bound = thm1_bound(p, static_cast<double>(r.step));
        check.points.push_back({r.step, bound, r.norm_matrix, r.norm_matrix <= bound});
      }
      finish(check);
    } else if (theorem == 2) {
      for (const auto& r : trace.records) {
        if (r.step > hyp->horizon_steps) break;
        const double cosine = r.cosine.at(b);
        if (r.step == 0 && std::isnan(cosine)) continue;  // zero boundary: undefined
        const double bound = thm2_bound(p, static_cast<double>(r.step)).value;
        check.points.push_back({r.step, bound, cosine, cosine >= bound});
      }
      finish(check);
    } else {
      const Thm3Threshold threshold = thm3_threshold(p);
      report.thm3_threshold = threshold.value;
      if (!threshold.applicable || inputs.dataset == nullptr || inputs.mean_direction.size() == 0) {
        check.note = "margin threshold not applicable";
        report.checks.push_back(std::move(check));
        continue;
      }
      report.thm3_floor =
          thm3_floor(inputs.dataset->behavior(b), inputs.mean_direction, threshold.value);
      const auto at_horizon =
          std::find_if(trace.records.begin(), trace.records.end(),
                       [&](const TraceRecord& r) { return r.step == hyp->horizon_steps; });
      if (at_horizon == trace.records.end()) {
        check.note = "trace has no record at the horizon step";
        report.checks.push_back(std::move(check));
        continue;
      }
      const double acc = at_horizon->accuracy.at(b);
      check.points.push_back({at_horizon->step, report.thm3_floor, acc, acc >= report.thm3_floor});
      finish(check);
    }
    report.checks.push_back(std::move(check));
  }

  bool any_pass = false;
  bool any_fail = false;
  for (const auto& c : report.checks) {
    any_pass |= c.verdict == Verdict::kPass;
    any_fail |= c.verdict == Verdict::kFail;
  }
  report.summary = any_fail ? Verdict::kFail : (any_pass ? Verdict::kPass : Verdict::kNotApplicable);
  return report;
}

std::string BoundReport::to_json() const {
  auto num = [](double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json doc;
  doc["schema"] = "bound-report/1";
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& verdict : hypotheses) {
    nlohmann::ordered_json entry;
    entry["theorem"] = verdict.theorem_id;
    entry["passed"] = verdict.passed();
    entry["delta"] = num(verdict.delta);
    entry["v_min"] = num(verdict.v_min);
    entry["v_max"] = num(verdict.v_max);
    entry["c_v"] = num(verdict.c_v);
    entry["c_n"] = num(verdict.c_n);
    entry["c_n_prime"] = num(verdict.c_n_prime);
    entry["horizon"] = num(verdict.horizon);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& h : verdict.hypotheses) {
      rows.push_back({{"name", h.name},
                      {"measured", num(h.measured)},
                      {"required", num(h.required)},
                      {"passed", h.passed}});
    }
    entry["hypotheses"] = std::move(rows);
    table.push_back(std::move(entry));
  }
  doc["hypotheses"] = std::move(table);
  nlohmann::ordered_json checks_json = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json entry;
    entry["theorem"] = c.theorem_id;
    entry["verdict"] = std::string(to_string(c.verdict));
    if (!c.note.empty()) entry["note"] = c.note;
    nlohmann::ordered_json t = nlohmann::ordered_json::array();
    nlohmann::ordered_json bound = nlohmann::ordered_json::array();
    nlohmann::ordered_json empirical = nlohmann::ordered_json::array();
    nlohmann::ordered_json ok = nlohmann::ordered_json::array();
    for (const auto& point : c.points) {
      t.push_back(point.t);
      bound.push_back(num(point.bound));
      empirical.push_back(num(point.empirical));
      ok.push_back(point.ok);
    }
    entry["t"] = std::move(t);
    entry["bound"] = std::move(bound);
    entry["empirical"] = std::move(empirical);
    entry["ok"] = std::move(ok);
    entry["violations"] = c.violations;
    checks_json.push_back(std::move(entry));
  }
  doc["checks"] = std::move(checks_json);
  doc["probability"] = {{"value", num(probability.value)},
                        {"raw", num(probability.raw)},
                        {"clamped", probability.clamped}};
  doc["thm2_horizon"] = num(thm2_horizon);
  doc["thm3_threshold"] = num(thm3_threshold);
  doc["thm3_floor"] = num(thm3_floor);
  doc["verdict"] = std::string(to_string(summary));
  return doc.dump(2) + "\n";
}

}  // namespace dpodyn
