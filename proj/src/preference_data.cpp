#include "dpodyn/preference_data.hpp"

#include "dpodyn/errors.hpp"
#include "dpodyn/power_iteration.hpp"
#include "dpodyn/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dpodyn {
namespace {

constexpr std::uint64_t kDirectionStream = 0xd1eC7105;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void validate_covariance(const Covariance& cov, int d, const char* which) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kInvalidSpec, std::string(which) + " covariance: " + why);
  };
  std::visit(
      Overloaded{
          [&](const IsotropicCov& c) {
            if (!std::isfinite(c.variance) || c.variance < 0.0) fail("variance must be >= 0");
          },
          [&](const DiagonalCov& c) {
            if (c.variances.size() != d) fail("diagonal has wrong length");
            if (!c.variances.allFinite() || c.variances.minCoeff() < 0.0) {
              fail("diagonal entries must be finite and >= 0");
            }
          },
          [&](const FullCov& c) {
            if (c.matrix.rows() != d || c.matrix.cols() != d) fail("matrix must be d x d");
            if (!c.matrix.allFinite()) fail("matrix has non-finite entries");
            const double scale = std::max(1.0, c.matrix.cwiseAbs().maxCoeff());
            if ((c.matrix - c.matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
              fail("matrix is not symmetric");
            }
            Eigen::SelfAdjointEigenSolver<Matrix> eig(c.matrix, Eigen::EigenvaluesOnly);
            if (eig.eigenvalues().minCoeff() < -1e-12 * scale) fail("matrix is not PSD");
          },
      },
      cov);
}

// Maps standardized coordinates z to Sigma^{1/2} z.
class CovarianceRoot {
 public:
  explicit CovarianceRoot(const Covariance& cov) {
    std::visit(Overloaded{
                   [&](const IsotropicCov& c) { scalar_ = std::sqrt(c.variance); },
                   [&](const DiagonalCov& c) { diagonal_ = c.variances.cwiseSqrt(); },
                   [&](const FullCov& c) {
                     Eigen::SelfAdjointEigenSolver<Matrix> eig(c.matrix);
                     const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
                     full_ = eig.eigenvectors() * roots.asDiagonal() *
                             eig.eigenvectors().transpose();
                   },
               },
               cov);
  }

  void apply(Vector& z) const {
    if (full_) {
      z = (*full_) * z;
    } else if (diagonal_) {
      z = z.cwiseProduct(*diagonal_);
    } else {
      z *= scalar_;
    }
  }

 private:
  double scalar_ = 1.0;
  std::optional<Vector> diagonal_;
  std::optional<Matrix> full_;
};

// One standardized alpha-subE coordinate from the uniforms at 2k, 2k+1.
double standardized_coordinate(const CounterRng& rng, std::uint64_t k, double alpha,
                               double inv_std) {
  if (alpha == 2.0) return rng.normal_at(k);
  const double u1 = rng.uniform_at(2 * k);
  const double u2 = rng.uniform_at(2 * k + 1);
  const double magnitude = std::pow(-std::log(u1), 1.0 / alpha) * inv_std;
  return u2 < 0.5 ? -magnitude : magnitude;
}

Matrix stack(const std::vector<const Vector*>& rows, int d) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = rows[i]->transpose();
  }
  return m;
}

SignMoments sign_moments(const Matrix& samples) {
  SignMoments m;
  m.count = static_cast<std::size_t>(samples.rows());
  m.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - m.mean.transpose();
  m.cov_trace = centered.squaredNorm() / static_cast<double>(samples.rows() - 1);
  const PowerIterationResult op = sample_covariance_norm(samples);
  m.cov_operator_norm = op.value;
  m.operator_norm_converged = op.converged;
  m.max_sample_norm = samples.rowwise().norm().maxCoeff();
  return m;
}

}  // namespace

double covariance_operator_norm(const Covariance& cov, [[maybe_unused]] int d) {
  return std::visit(Overloaded{
                        [](const IsotropicCov& c) { return c.variance; },
                        [](const DiagonalCov& c) { return c.variances.maxCoeff(); },
                        [](const FullCov& c) {
                          Eigen::SelfAdjointEigenSolver<Matrix> eig(c.matrix,
                                                                    Eigen::EigenvaluesOnly);
                          return eig.eigenvalues().maxCoeff();
                        },
                    },
                    cov);
}

double covariance_trace(const Covariance& cov, int d) {
  return std::visit(Overloaded{
                        [d](const IsotropicCov& c) { return c.variance * d; },
                        [](const DiagonalCov& c) { return c.variances.sum(); },
                        [](const FullCov& c) { return c.matrix.trace(); },
                    },
                    cov);
}

double psi_alpha_norm(double alpha) {
  if (!(alpha > 0.0 && alpha <= 2.0)) {
    throw Error(ErrorKind::kDomain, "alpha must lie in (0, 2]");
  }
  // Gaussian: E exp(X^2/t^2) = (1 - 2/t^2)^{-1/2} = 2. Weibull: |X/s|^alpha is
  // Exp(1) for s = 1/std, so E exp((|X|/t)^alpha) = 1/(1 - (s/t)^alpha) = 2.
  if (alpha == 2.0) return std::sqrt(8.0 / 3.0);
  const double std_dev = std::sqrt(std::tgamma(1.0 + 2.0 / alpha));
  return std::pow(2.0, 1.0 / alpha) / std_dev;
}

SubExpSpec make_spec(const SpecRequest& request) {
  if (!(request.alpha > 0.0 && request.alpha <= 2.0)) {
    throw Error(ErrorKind::kDomain, "alpha must lie in (0, 2]");
  }
  if (request.d < 2) throw Error(ErrorKind::kInvalidSpec, "dimension must be at least 2");
  if (!std::isfinite(request.delta)) throw Error(ErrorKind::kInvalidSpec, "delta must be finite");
  validate_covariance(request.cov_plus, request.d, "positive");
  validate_covariance(request.cov_minus, request.d, "negative");

  Vector u = Vector::Zero(request.d);
  if (request.axis) {
    if (*request.axis < 0 || *request.axis >= request.d) {
      throw Error(ErrorKind::kInvalidSpec, "forced axis out of range");
    }
    u[*request.axis] = 1.0;
  } else {
    const CounterRng rng(CounterRng::derive_key(request.direction_seed, kDirectionStream));
    for (int j = 0; j < request.d; ++j) u[j] = rng.normal_at(static_cast<std::uint64_t>(j));
    u /= u.norm();
  }
  const double separation = std::pow(static_cast<double>(request.d), request.delta);

  SubExpSpec spec;
  spec.d = request.d;
  spec.alpha = request.alpha;
  spec.mu_plus = 0.5 * separation * u;
  spec.mu_minus = -0.5 * separation * u;
  spec.sigma_plus = request.cov_plus;
  spec.sigma_minus = request.cov_minus;
  spec.K = psi_alpha_norm(request.alpha);
  spec.delta = request.delta;
  return spec;
}

BehaviorDataset generate_dataset(std::span<const NamedSpec> specs, int n_per_behavior,
                                 std::uint64_t seed, const GenerateOptions& options) {
  if (specs.empty()) throw Error(ErrorKind::kEmptyDataset, "no behavior specs given");
  if (n_per_behavior < 2 || n_per_behavior % 2 != 0) {
    throw Error(ErrorKind::kDomain, "n_per_behavior must be even and >= 2");
  }
  const int d = specs.front().spec.d;
  for (const auto& named : specs) {
    if (named.spec.d != d) throw Error(ErrorKind::kInvalidSpec, "specs disagree on dimension");
  }
  const std::size_t per_copy = static_cast<std::size_t>(d) * sizeof(double);
  const std::size_t samples = specs.size() * static_cast<std::size_t>(n_per_behavior);
  if (per_copy != 0 && samples > options.memory_budget_bytes / per_copy) {
    std::ostringstream msg;
    msg << samples << " samples x " << d << " coordinates exceed the memory budget of "
        << options.memory_budget_bytes << " bytes";
    throw Error(ErrorKind::kResource, msg.str());
  }

  std::vector<Behavior> behaviors;
  behaviors.reserve(specs.size());
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const SubExpSpec& spec = specs[b].spec;
    const CounterRng rng(CounterRng::derive_key(seed, b));
    const CovarianceRoot root_plus(spec.sigma_plus);
    const CovarianceRoot root_minus(spec.sigma_minus);
    const double inv_std =
        spec.alpha == 2.0 ? 1.0 : 1.0 / std::sqrt(std::tgamma(1.0 + 2.0 / spec.alpha));

    Behavior behavior;
    behavior.id = specs[b].behavior_id;
    behavior.samples.reserve(static_cast<std::size_t>(n_per_behavior));
    for (int k = 0; k < n_per_behavior; ++k) {
      const bool positive = (k % 2 == 0);
      Vector z(d);
      const std::uint64_t base = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(d);
      for (int j = 0; j < d; ++j) {
        z[j] = standardized_coordinate(rng, base + static_cast<std::uint64_t>(j), spec.alpha,
                                       inv_std);
      }
      (positive ? root_plus : root_minus).apply(z);
      z += positive ? spec.mu_plus : spec.mu_minus;
      behavior.samples.push_back({std::move(z), positive ? Label::kPositive : Label::kNegative});
    }
    behaviors.push_back(std::move(behavior));
  }
  return BehaviorDataset::create(d, std::move(behaviors));
}

double MomentReport::c_n_prime_at(double delta) const {
  return mean_plus_root_trace / std::pow(static_cast<double>(d), delta);
}

MomentReport estimate_moments(const BehaviorDataset& dataset, const std::string& behavior_id) {
  const Behavior& behavior = dataset.behavior(dataset.index_of(behavior_id));
  std::vector<const Vector*> plus;
  std::vector<const Vector*> minus;
  for (const auto& s : behavior.samples) {
    (s.label == Label::kPositive ? plus : minus).push_back(&s.vector);
  }
  if (plus.size() < 2 || minus.size() < 2) {
    throw Error(ErrorKind::kInsufficientData,
                "behavior '" + behavior_id + "' needs at least 2 samples per sign");
  }
  const int d = dataset.dim();
  MomentReport r;
  r.behavior_id = behavior_id;
  r.d = d;
  r.n = behavior.samples.size();
  r.plus = sign_moments(stack(plus, d));
  r.minus = sign_moments(stack(minus, d));
  r.b = r.plus.mean - r.minus.mean;
  r.b_norm = r.b.norm();
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  r.delta_hat = std::log(r.b_norm) / std::log(static_cast<double>(d));
  r.max_cov_operator_norm = std::max(r.plus.cov_operator_norm, r.minus.cov_operator_norm);
  r.mean_plus_root_trace = std::max(r.plus.mean.norm() + std::sqrt(r.plus.cov_trace),
                                    r.minus.mean.norm() + std::sqrt(r.minus.cov_trace));
  r.c_v = r.max_cov_operator_norm / sqrt_d;
  r.c_n = r.mean_plus_root_trace / sqrt_d;
  r.c_n_prime = r.c_n_prime_at(r.delta_hat);
  r.gamma = static_cast<double>(r.n) / sqrt_d;
  return r;
}

bool AssumptionVerdict::passed() const {
  return std::all_of(hypotheses.begin(), hypotheses.end(),
                     [](const Hypothesis& h) { return h.passed; });
}

const Hypothesis* AssumptionVerdict::find(const std::string& name) const {
  for (const auto& h : hypotheses) {
    if (h.name == name) return &h;
  }
  return nullptr;
}

AssumptionVerdict check_assumptions(const MomentReport& report, int theorem_id,
                                    const AssumptionParams& params) {
  if (theorem_id < 1 || theorem_id > 3) {
    throw Error(ErrorKind::kDomain, "theorem id must be 1, 2 or 3");
  }
  const double d = static_cast<double>(report.d);
  AssumptionVerdict verdict;
  verdict.theorem_id = theorem_id;
  verdict.delta = params.delta.value_or(report.delta_hat);
  verdict.v_min = 4.0 / std::log2(d);  // = 4 log 2 / log d, exact for powers of two
  verdict.v_max = 0.5 - verdict.delta;
  verdict.c_n = report.mean_plus_root_trace / std::sqrt(d);
  verdict.c_n_prime = report.c_n_prime_at(verdict.delta);
  verdict.c_v = theorem_id == 1 ? report.max_cov_operator_norm / std::sqrt(d)
                                : report.max_cov_operator_norm / std::pow(d, 0.5 - 2.0 * params.v);
  const double bp2 = params.beta_prime * params.beta_prime;
  if (params.eta > 0.0) {
    verdict.horizon = std::pow(d, 0.5 - verdict.delta - params.v) /
                      (72.0 * bp2 * params.eta * verdict.c_n_prime);
    const double floored = std::floor(verdict.horizon);
    verdict.horizon_steps = floored >= 9.0e18 ? std::numeric_limits<std::int64_t>::max()
                                              : static_cast<std::int64_t>(floored);
  } else {
    verdict.horizon = std::numeric_limits<double>::infinity();
    verdict.horizon_steps = std::numeric_limits<std::int64_t>::max();
  }

  auto add = [&](std::string name, double measured, double required, bool passed) {
    verdict.hypotheses.push_back({std::move(name), measured, required, passed});
  };
  const double step_product = bp2 * params.eta * verdict.c_n * verdict.c_n;

  if (theorem_id == 1) {
    add("delta <= 1/2", verdict.delta, 0.5, verdict.delta <= 0.5);
  } else {
    add("v >= 4 log 2 / log d", params.v, verdict.v_min, params.v >= verdict.v_min);
    add("v <= 1/2 - delta", params.v, verdict.v_max, params.v <= verdict.v_max);
    add("delta <= 1/2 - 4 log 2 / log d", verdict.delta, 0.5 - verdict.v_min,
        verdict.delta <= 0.5 - verdict.v_min);
  }
  add("beta'^2 eta c_n^2 <= 1/4", step_product, 0.25, step_product <= 0.25);
  if (params.c_v_max) add("c_v <= cap", verdict.c_v, *params.c_v_max, verdict.c_v <= *params.c_v_max);
  if (params.c_n_max) add("c_n <= cap", verdict.c_n, *params.c_n_max, verdict.c_n <= *params.c_n_max);
  if (theorem_id >= 2) {
    add("floor(horizon) >= 1", verdict.horizon, 1.0, verdict.horizon_steps >= 1);
  }
  if (theorem_id == 3) {
    add("phi >= 0", params.phi, 0.0, params.phi >= 0.0);
    const double lhs = std::pow(d, -params.v);
    const double rhs = (1.0 - params.phi) / 13.0;
    add("d^-v < (1 - phi)/13", lhs, rhs, lhs < rhs);
  }
  return verdict;
}

BehaviorDataset apply_alignment_shift(const BehaviorDataset& dataset, double kappa_sep,
                                      double kappa_var) {
  if (!std::isfinite(kappa_sep) || !std::isfinite(kappa_var) || kappa_sep < 0.0 ||
      kappa_var < 0.0) {
    throw Error(ErrorKind::kDomain, "shift factors must be finite and non-negative");
  }
  std::vector<Behavior> out;
  out.reserve(dataset.behaviors().size());
  for (const auto& behavior : dataset.behaviors()) {
    Vector sum_plus = Vector::Zero(dataset.dim());
    Vector sum_minus = Vector::Zero(dataset.dim());
    for (const auto& s : behavior.samples) {
      (s.label == Label::kPositive ? sum_plus : sum_minus) += s.vector;
    }
    const Vector mean_plus = sum_plus / static_cast<double>(behavior.count(Label::kPositive));
    const Vector mean_minus = sum_minus / static_cast<double>(behavior.count(Label::kNegative));
    const Vector center = 0.5 * (mean_plus + mean_minus);

    Behavior shifted{behavior.id, {}};
    shifted.samples.reserve(behavior.samples.size());
    for (const auto& s : behavior.samples) {
      const Vector& mean = s.label == Label::kPositive ? mean_plus : mean_minus;
      Vector x;
      if (kappa_var == 1.0) {
        // Exact identity when both factors are 1.
        x = s.vector + (kappa_sep - 1.0) * (mean - center);
      } else {
        // Exact collapse onto the shifted mean when kappa_var is 0.
        x = (center + kappa_sep * (mean - center)) + kappa_var * (s.vector - mean);
      }
      shifted.samples.push_back({std::move(x), s.label});
    }
    out.push_back(std::move(shifted));
  }
  return BehaviorDataset::create(dataset.dim(), std::move(out));
}

BehaviorDataset flip_labels(const BehaviorDataset& dataset) {
  std::vector<Behavior> out = dataset.behaviors();
  for (auto& behavior : out) {
    for (auto& s : behavior.samples) s.label = opposite(s.label);
  }
  return BehaviorDataset::create(dataset.dim(), std::move(out));
}

}  // namespace dpodyn
