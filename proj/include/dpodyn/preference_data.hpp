#pragma once

#include "dpodyn/dataset.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dpodyn {

// Covariance descriptors. Isotropic holds the common variance sigma^2.
struct IsotropicCov {
  double variance = 1.0;
};
struct DiagonalCov {
  Vector variances;
};
struct FullCov {
  Matrix matrix;
};
using Covariance = std::variant<IsotropicCov, DiagonalCov, FullCov>;

double covariance_operator_norm(const Covariance& cov, int d);
double covariance_trace(const Covariance& cov, int d);

// Generative description of one behavior: positives ~ E_alpha(mu+, Sigma+, K),
// negatives ~ E_alpha(mu-, Sigma-, K), with ||mu+ - mu-|| = d^delta.
struct SubExpSpec {
  int d = 0;
  double alpha = 2.0;
  Vector mu_plus;
  Vector mu_minus;
  Covariance sigma_plus = IsotropicCov{};
  Covariance sigma_minus = IsotropicCov{};
  // psi_alpha norm of one standardized coordinate (reported, not enforced).
  double K = 0.0;
  double delta = 0.0;
};

struct SpecRequest {
  int d = 2;
  double delta = 0.0;
  double alpha = 2.0;
  Covariance cov_plus = IsotropicCov{};
  Covariance cov_minus = IsotropicCov{};
  std::uint64_t direction_seed = 0;
  // Forces the mean direction onto a coordinate axis instead of a seeded one.
  std::optional<int> axis;
};

// Analytic psi_alpha norm of the standardized coordinate family.
double psi_alpha_norm(double alpha);

SubExpSpec make_spec(const SpecRequest& request);

struct NamedSpec {
  std::string behavior_id;
  SubExpSpec spec;
};

struct GenerateOptions {
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

// Samples alternate +, -, +, - within each behavior. Behavior b draws from the
// counter stream keyed by (seed, b), so the output is a pure function of
// (specs, n_per_behavior, seed).
BehaviorDataset generate_dataset(std::span<const NamedSpec> specs, int n_per_behavior,
                                 std::uint64_t seed, const GenerateOptions& options = {});

struct SignMoments {
  std::size_t count = 0;
  Vector mean;
  double cov_operator_norm = 0.0;
  bool operator_norm_converged = true;
  double cov_trace = 0.0;
  double max_sample_norm = 0.0;
};

struct MomentReport {
  std::string behavior_id;
  int d = 0;
  std::size_t n = 0;
  SignMoments plus;
  SignMoments minus;
  Vector b;  // mean(+) - mean(-)
  double b_norm = 0.0;
  double delta_hat = 0.0;  // ln ||b|| / ln d
  // Minimal constants turning each hypothesis into an equality.
  double c_v = 0.0;          // max ||Sigma_i|| / sqrt(d)
  double c_n = 0.0;          // max (||mu_i|| + Tr(Sigma_i)^{1/2}) / sqrt(d)
  double c_n_prime = 0.0;    // same maximum over d^delta_hat
  double gamma = 0.0;        // n / sqrt(d)
  double mean_plus_root_trace = 0.0;  // max (||mu_i|| + Tr(Sigma_i)^{1/2})
  double max_cov_operator_norm = 0.0;

  double c_n_prime_at(double delta) const;
};

MomentReport estimate_moments(const BehaviorDataset& dataset, const std::string& behavior_id);

struct AssumptionParams {
  double beta_prime = 1.0;
  double eta = 0.0;
  double v = 0.0;
  double phi = 0.0;
  // Population delta used in the hypotheses; defaults to the measured delta_hat.
  std::optional<double> delta;
  // Optional caps on the free constants; unset means "minimal value, any size".
  std::optional<double> c_v_max;
  std::optional<double> c_n_max;
};

struct Hypothesis {
  std::string name;
  double measured = 0.0;
  double required = 0.0;
  bool passed = false;
};

struct AssumptionVerdict {
  int theorem_id = 0;
  std::vector<Hypothesis> hypotheses;
  double delta = 0.0;
  double v_min = 0.0;  // (4 log 2) / log d
  double v_max = 0.0;  // 1/2 - delta
  double c_v = 0.0;    // constant in the theorem's own covariance scaling
  double c_n = 0.0;
  double c_n_prime = 0.0;
  double horizon = 0.0;             // d^{1/2-delta-v} / (72 beta'^2 eta c_n')
  std::int64_t horizon_steps = 0;   // floor(horizon)

  bool passed() const;
  const Hypothesis* find(const std::string& name) const;
};

AssumptionVerdict check_assumptions(const MomentReport& report, int theorem_id,
                                    const AssumptionParams& params);

// Per behavior: x -> mu_c + kappa_sep (mu_s - mu_c) + kappa_var (x - mu_s),
// mu_c the midpoint of the two sign means.
BehaviorDataset apply_alignment_shift(const BehaviorDataset& dataset, double kappa_sep,
                                      double kappa_var);

BehaviorDataset flip_labels(const BehaviorDataset& dataset);

}  // namespace dpodyn
