#pragma once

#include "dpodyn/chart.hpp"
#include "dpodyn/dpo_head.hpp"
#include "dpodyn/format.hpp"
#include "dpodyn/pca.hpp"
#include "dpodyn/preference_data.hpp"
#include "dpodyn/theory.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dpodyn {

enum class ExperimentKind { kGenerate, kTrain, kSweep, kPriority, kMisalign, kBounds, kProject };

std::string_view to_string(ExperimentKind kind);

struct BehaviorBlock {
  std::string id;
  double delta = 0.0;
  double variance_plus = 1.0;
  double variance_minus = 1.0;
  std::optional<int> axis;
};

struct GenerateBlock {
  int d = 0;
  int n_per_behavior = 0;
  double alpha = 2.0;
  std::uint64_t direction_seed = 0;
  std::vector<BehaviorBlock> behaviors;
};

struct SweepBlock {
  std::string axis;  // "delta", "beta" or "eta"
  std::vector<double> values;
};

struct MisalignBlock {
  double kappa_sep = 2.0;
  double kappa_var = 0.5;
  double loss_threshold = 0.2;
};

struct BoundsBlock {
  double beta_prime = 1.0;
  double v = 0.0;
  double phi = 0.0;
  double w_b_norm = 0.0;
  double c_prime = 1.0;
  std::vector<int> theorems = {1};
  bool steps_from_horizon = false;
  bool delta_from_spec = true;
};

struct ExperimentConfig {
  std::optional<ExperimentKind> kind;
  std::optional<GenerateBlock> generate;
  std::optional<std::string> dataset_path;
  TrainConfig train;
  std::optional<double> beta_prime;  // when set, beta = beta' / sqrt(d)
  SweepBlock sweep;
  MisalignBlock misalign;
  BoundsBlock bounds;
  std::optional<std::string> project_behavior;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "out";
  std::string format = "csv";

  // Checks cross-field invariants for the given experiment; throws kConfig.
  void validate_for(ExperimentKind kind) const;
};

// Parses a single JSON document; unknown keys are errors (kConfig).
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Builds (or loads) the dataset for one seed.
BehaviorDataset materialize_dataset(const ExperimentConfig& config, std::uint64_t seed);
// Spec list behind a generate block, with the mean direction per behavior.
std::vector<NamedSpec> build_specs(const GenerateBlock& block);

// Resolved beta for a dataset of dimension d.
double resolved_beta(const ExperimentConfig& config, int d);

// Number of parallel jobs from DPODYN_JOBS (default 1).
int job_parallelism();

struct RunOutcome {
  std::string label;
  double axis_value = 0.0;
  std::uint64_t seed = 0;
  std::optional<TrainTrace> trace;
  std::optional<BoundReport> report;
  bool diverged = false;
  std::string error;
};

struct SweepResult {
  std::vector<RunOutcome> runs;  // ordered by (axis value, seed)
  ChartSpec loss_chart;
  ChartSpec norm_chart;
};

struct PriorityResult {
  TrainTrace trace;
  PriorityReport report;
  bool degenerate = false;
  bool ordering_checked = false;
  bool ordering_consistent = false;
  ChartSpec chart;
};

struct MisalignRun {
  std::uint64_t seed = 0;
  TrainTrace base;
  TrainTrace aligned;
  std::optional<std::int64_t> base_steps;     // first step with loss <= threshold
  std::optional<std::int64_t> aligned_steps;
};

struct MisalignResult {
  std::vector<MisalignRun> runs;
  ChartSpec chart;
};

struct BoundsResult {
  std::vector<RunOutcome> runs;
  std::int64_t violations = 0;
  int not_applicable = 0;
  int passed = 0;
};

// Each runner writes its artifacts under `out` when given.
TrainResult run_train(const ExperimentConfig& config,
                      const std::optional<std::filesystem::path>& out = std::nullopt);
SweepResult run_sweep(const ExperimentConfig& config,
                      const std::optional<std::filesystem::path>& out = std::nullopt);
PriorityResult run_priority(const ExperimentConfig& config,
                            const std::optional<std::filesystem::path>& out = std::nullopt);
MisalignResult run_misalign(const ExperimentConfig& config,
                            const std::optional<std::filesystem::path>& out = std::nullopt);
BoundsResult run_bounds(const ExperimentConfig& config,
                        const std::optional<std::filesystem::path>& out = std::nullopt);
Projection run_project(const ExperimentConfig& config,
                       const std::optional<std::filesystem::path>& out = std::nullopt);

std::optional<std::int64_t> steps_to_threshold(const TrainTrace& trace, double threshold);

}  // namespace dpodyn
