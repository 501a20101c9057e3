#include "dpodyn/experiments.hpp"

#include "dpodyn/dataset_io.hpp"
#include "dpodyn/errors.hpp"
#include "dpodyn/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dpodyn {
namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& why) { throw Error(ErrorKind::kConfig, why); }

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) config_error("'" + where + "' must be an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("bad type for '" + std::string(key) + "' in " + where);
  }
}

template <class T>
void read_optional(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key)) return;
  T value{};
  read_field(obj, key, value, where);
  out = value;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());
}

// Runs jobs [0, count) on up to `workers` threads. Results are placed by index,
// so the outcome never depends on scheduling.
template <class Job>
void run_jobs(std::size_t count, Job job) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, job_parallelism())));
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string trace_text(const TrainTrace& trace, const TrainConfig& config, const std::string& format) {
  return format == "json" ? trace_to_json(trace, config) : trace_to_csv(trace);
}

std::string trace_extension(const std::string& format) { return format == "json" ? ".json" : ".csv"; }

TrainConfig train_config_for(const ExperimentConfig& config, int d) {
  TrainConfig train = config.train;
  train.beta = resolved_beta(config, d);
  return train;
}

Series step_series(const std::string& label, const TrainTrace& trace,
                   double (*pick)(const TraceRecord&)) {
  Series s;
  s.label = label;
  for (const auto& r : trace.records) {
    s.x.push_back(static_cast<double>(r.step));
    s.y.push_back(pick(r));
  }
  return s;
}

double pick_loss(const TraceRecord& r) { return r.loss; }
double pick_norm(const TraceRecord& r) { return r.norm_matrix; }

Vector spec_direction(const ExperimentConfig& config, std::size_t behavior) {
  const auto specs = build_specs(*config.generate);
  return specs.at(behavior).spec.mu_plus - specs.at(behavior).spec.mu_minus;
}

Vector sample_direction(const Behavior& behavior, int d) {
  Vector plus = Vector::Zero(d);
  Vector minus = Vector::Zero(d);
  for (const auto& s : behavior.samples) (s.label == Label::kPositive ? plus : minus) += s.vector;
  return plus / static_cast<double>(behavior.count(Label::kPositive)) -
         minus / static_cast<double>(behavior.count(Label::kNegative));
}

struct BoundsRun {
  TrainTrace trace;
  BoundReport report;
};

// generate -> moments -> hypotheses -> train -> verify, for behavior 0.
BoundsRun certify(const ExperimentConfig& config, const BehaviorDataset& dataset, std::uint64_t seed,
                  const BoundsBlock& bounds, const TrainConfig& base_train, bool steps_from_horizon) {
  const int d = dataset.dim();
  const Behavior& behavior = dataset.behavior(0);
  const MomentReport moments = estimate_moments(dataset, behavior.id);
  const bool use_spec = bounds.delta_from_spec && config.generate.has_value();
  const double delta = use_spec ? config.generate->behaviors.at(0).delta : moments.delta_hat;

  AssumptionParams ap;
  ap.beta_prime = bounds.beta_prime;
  ap.eta = base_train.eta;
  ap.v = bounds.v;
  ap.phi = bounds.phi;
  ap.delta = delta;

  BoundInputs inputs;
  inputs.theorems = bounds.theorems;
  inputs.hypotheses_thm1 = check_assumptions(moments, 1, ap);
  const bool wants23 = std::any_of(bounds.theorems.begin(), bounds.theorems.end(),
                                   [](int t) { return t >= 2; });
  if (wants23) {
    inputs.hypotheses_thm2 = check_assumptions(moments, 2, ap);
    inputs.hypotheses_thm3 = check_assumptions(moments, 3, ap);
  }
  Thm2Params& p = inputs.params;
  p.beta_prime = bounds.beta_prime;
  p.eta = base_train.eta;
  p.d = d;
  p.delta = delta;
  p.c_v = inputs.hypotheses_thm1.c_v;
  p.c_n = inputs.hypotheses_thm1.c_n;
  p.gamma = moments.gamma;
  p.alpha = config.generate ? config.generate->alpha : 2.0;
  p.c_prime = bounds.c_prime;
  p.v = bounds.v;
  p.phi = bounds.phi;
  p.c_n_prime = inputs.hypotheses_thm1.c_n_prime;
  p.w_b_norm = bounds.w_b_norm;
  inputs.n = behavior.samples.size();
  inputs.dataset = &dataset;
  inputs.mean_direction = use_spec ? spec_direction(config, 0) : sample_direction(behavior, d);

  TrainConfig train = base_train;
  train.beta = bounds.beta_prime / std::sqrt(static_cast<double>(d));
  if (steps_from_horizon && inputs.hypotheses_thm2) {
    train.steps = std::clamp<std::int64_t>(inputs.hypotheses_thm2->horizon_steps, 0, base_train.steps);
  }
  TrainOptions options;
  if (wants23) options.reference_directions.assign(dataset.behaviors().size(), inputs.mean_direction);
  if (bounds.w_b_norm > 0.0) {
    options.initial_boundary =
        seeded_initial_boundary(inputs.mean_direction, bounds.w_b_norm, bounds.phi, seed);
  }
  TrainResult run = dpodyn::train(dataset, train, options);
  BoundsRun out;
  out.report = verify_trace(run.trace, inputs);
  out.trace = std::move(run.trace);
  return out;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kGenerate: return "generate";
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kSweep: return "sweep";
    case ExperimentKind::kPriority: return "priority";
    case ExperimentKind::kMisalign: return "misalign";
    case ExperimentKind::kBounds: return "bounds";
    case ExperimentKind::kProject: return "project";
  }
  return "unknown";
}

int job_parallelism() {
  const char* env = std::getenv("DPODYN_JOBS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long value = std::strtol(env, &end, 10);
  if (*end != '\0' || value < 1) return 1;
  return static_cast<int>(std::min<long>(value, 256));
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(doc, "config",
                 {"experiment", "data", "train", "sweep", "misalign", "bounds", "project", "seeds",
                  "output", "format"});
  ExperimentConfig config;

  if (doc.contains("experiment")) {
    std::string kind;
    read_field(doc, "experiment", kind, "config");
    static const std::pair<const char*, ExperimentKind> kinds[] = {
        {"generate", ExperimentKind::kGenerate}, {"train", ExperimentKind::kTrain},
        {"sweep", ExperimentKind::kSweep},       {"priority", ExperimentKind::kPriority},
        {"misalign", ExperimentKind::kMisalign}, {"bounds", ExperimentKind::kBounds},
        {"project", ExperimentKind::kProject}};
    for (const auto& [name, k] : kinds) {
      if (kind == name) config.kind = k;
    }
    if (!config.kind) config_error("unknown experiment kind '" + kind + "'");
  }

  if (doc.contains("data")) {
    const json& data = doc["data"];
    reject_unknown(data, "data", {"generate", "path"});
    if (data.contains("generate") == data.contains("path")) {
      config_error("data needs exactly one of 'generate' or 'path'");
    }
    if (data.contains("path")) {
      std::string path;
      read_field(data, "path", path, "data");
      config.dataset_path = path;
    } else {
      const json& g = data["generate"];
      reject_unknown(g, "data.generate", {"d", "n_per_behavior", "alpha", "direction_seed", "behaviors"});
      GenerateBlock block;
      read_field(g, "d", block.d, "data.generate");
      read_field(g, "n_per_behavior", block.n_per_behavior, "data.generate");
      read_field(g, "alpha", block.alpha, "data.generate");
      read_field(g, "direction_seed", block.direction_seed, "data.generate");
      if (!g.contains("behaviors") || !g["behaviors"].is_array() || g["behaviors"].empty()) {
        config_error("data.generate.behaviors must be a nonempty array");
      }
      for (const auto& b : g["behaviors"]) {
        reject_unknown(b, "behavior", {"id", "delta", "variance", "variance_plus", "variance_minus", "axis"});
        BehaviorBlock behavior;
        read_field(b, "id", behavior.id, "behavior");
        read_field(b, "delta", behavior.delta, "behavior");
        double variance = 1.0;
        read_field(b, "variance", variance, "behavior");
        behavior.variance_plus = behavior.variance_minus = variance;
        read_field(b, "variance_plus", behavior.variance_plus, "behavior");
        read_field(b, "variance_minus", behavior.variance_minus, "behavior");
        read_optional(b, "axis", behavior.axis, "behavior");
        if (behavior.id.empty()) behavior.id = "b" + std::to_string(block.behaviors.size() + 1);
        block.behaviors.push_back(behavior);
      }
      config.generate = block;
    }
  }

  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, "train",
                   {"beta", "beta_prime", "eta", "steps", "mode", "batch_size", "seed", "record_every"});
    read_field(t, "beta", config.train.beta, "train");
    read_optional(t, "beta_prime", config.beta_prime, "train");
    read_field(t, "eta", config.train.eta, "train");
    read_field(t, "steps", config.train.steps, "train");
    std::string mode = "full_batch";
    read_field(t, "mode", mode, "train");
    if (mode == "full_batch") {
      config.train.mode = TrainMode::kFullBatch;
    } else if (mode == "minibatch") {
      config.train.mode = TrainMode::kMinibatch;
    } else {
      config_error("train.mode must be 'full_batch' or 'minibatch'");
    }
    read_field(t, "batch_size", config.train.batch_size, "train");
    read_field(t, "seed", config.train.seed, "train");
    read_field(t, "record_every", config.train.record_every, "train");
  }

  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    reject_unknown(s, "sweep", {"axis", "values"});
    read_field(s, "axis", config.sweep.axis, "sweep");
    read_field(s, "values", config.sweep.values, "sweep");
  }
  if (doc.contains("misalign")) {
    const json& m = doc["misalign"];
    reject_unknown(m, "misalign", {"kappa_sep", "kappa_var", "loss_threshold"});
    read_field(m, "kappa_sep", config.misalign.kappa_sep, "misalign");
    read_field(m, "kappa_var", config.misalign.kappa_var, "misalign");
    read_field(m, "loss_threshold", config.misalign.loss_threshold, "misalign");
  }
  if (doc.contains("bounds")) {
    const json& b = doc["bounds"];
    reject_unknown(b, "bounds",
                   {"beta_prime", "v", "phi", "w_b_norm", "c_prime", "theorems", "steps_from_horizon",
                    "delta_from_spec"});
    read_field(b, "beta_prime", config.bounds.beta_prime, "bounds");
    read_field(b, "v", config.bounds.v, "bounds");
    read_field(b, "phi", config.bounds.phi, "bounds");
    read_field(b, "w_b_norm", config.bounds.w_b_norm, "bounds");
    read_field(b, "c_prime", config.bounds.c_prime, "bounds");
    read_field(b, "theorems", config.bounds.theorems, "bounds");
    read_field(b, "steps_from_horizon", config.bounds.steps_from_horizon, "bounds");
    read_field(b, "delta_from_spec", config.bounds.delta_from_spec, "bounds");
  }
  if (doc.contains("project")) {
    const json& p = doc["project"];
    reject_unknown(p, "project", {"behavior"});
    read_optional(p, "behavior", config.project_behavior, "project");
  }
  if (doc.contains("seeds")) {
    read_field(doc, "seeds", config.seeds, "config");
    if (config.seeds.empty()) config_error("seeds must be nonempty");
  }
  read_field(doc, "output", config.output_dir, "config");
  read_field(doc, "format", config.format, "config");
  if (config.format != "csv" && config.format != "json") config_error("format must be csv or json");
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void ExperimentConfig::validate_for(ExperimentKind k) const {
  if (kind && *kind != k) {
    config_error("config is for '" + std::string(to_string(*kind)) + "', not '" +
                 std::string(to_string(k)) + "'");
  }
  if (generate.has_value() == dataset_path.has_value()) {
    config_error("config needs exactly one data source");
  }
  if (k == ExperimentKind::kGenerate && !generate) config_error("generate needs data.generate");
  if (generate) {
    if (generate->d < 2) config_error("data.generate.d must be >= 2");
    if (generate->n_per_behavior < 2 || generate->n_per_behavior % 2 != 0) {
      config_error("data.generate.n_per_behavior must be even and >= 2");
    }
    if (!(generate->alpha > 0.0 && generate->alpha <= 2.0)) config_error("alpha must lie in (0, 2]");
  }
  try {
    TrainConfig probe = train;
    if (beta_prime) probe.beta = *beta_prime;
    probe.validate();
  } catch (const Error& e) {
    config_error(std::string("train: ") + e.what());
  }
  if (k == ExperimentKind::kSweep) {
    if (sweep.values.empty()) config_error("sweep.values must be nonempty");
    if (sweep.axis != "delta" && sweep.axis != "beta" && sweep.axis != "eta") {
      config_error("sweep.axis must be delta, beta or eta");
    }
    if (sweep.axis == "delta" && !generate) config_error("a delta sweep needs generated data");
  }
  if (k == ExperimentKind::kPriority && generate && generate->behaviors.size() < 2) {
    config_error("priority needs at least 2 behaviors");
  }
  if (k == ExperimentKind::kMisalign) {
    if (!(misalign.kappa_sep >= 0.0) || !(misalign.kappa_var >= 0.0)) {
      config_error("misalign kappas must be non-negative");
    }
  }
  if (k == ExperimentKind::kBounds) {
    for (int t : bounds.theorems) {
      if (t < 1 || t > 3) config_error("bounds.theorems entries must be 1, 2 or 3");
    }
    if (!(bounds.beta_prime > 0.0)) config_error("bounds.beta_prime must be > 0");
  }
}

std::vector<NamedSpec> build_specs(const GenerateBlock& block) {
  std::vector<NamedSpec> specs;
  for (std::size_t i = 0; i < block.behaviors.size(); ++i) {
    const BehaviorBlock& b = block.behaviors[i];
    SpecRequest request;
    request.d = block.d;
    request.delta = b.delta;
    request.alpha = block.alpha;
    request.cov_plus = IsotropicCov{b.variance_plus};
    request.cov_minus = IsotropicCov{b.variance_minus};
    request.direction_seed = CounterRng::derive_key(block.direction_seed, i);
    request.axis = b.axis;
    specs.push_back({b.id, make_spec(request)});
  }
  return specs;
}

BehaviorDataset materialize_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.dataset_path) return load_dataset(*config.dataset_path);
  if (!config.generate) config_error("no data source");
  const auto specs = build_specs(*config.generate);
  return generate_dataset(specs, config.generate->n_per_behavior, seed);
}

double resolved_beta(const ExperimentConfig& config, int d) {
  if (config.beta_prime) return *config.beta_prime / std::sqrt(static_cast<double>(d));
  return config.train.beta;
}

std::optional<std::int64_t> steps_to_threshold(const TrainTrace& trace, double threshold) {
  for (const auto& r : trace.records) {
    if (r.loss <= threshold) return r.step;
  }
  return std::nullopt;
}

TrainResult run_train(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kTrain);
  const BehaviorDataset dataset = materialize_dataset(config, config.seeds.front());
  const TrainConfig train_config = train_config_for(config, dataset.dim());
  TrainResult result = train(dataset, train_config);
  if (out) {
    ensure_dir(*out);
    write_text(*out / ("trace" + trace_extension(config.format)),
               trace_text(result.trace, train_config, config.format));
  }
  return result;
}

SweepResult run_sweep(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kSweep);
  const std::size_t n_values = config.sweep.values.size();
  const std::size_t n_seeds = config.seeds.size();
  SweepResult result;
  result.runs.resize(n_values * n_seeds);
  std::vector<TrainConfig> used_configs(result.runs.size());

  run_jobs(result.runs.size(), [&](std::size_t job) {
    const double value = config.sweep.values[job / n_seeds];
    const std::uint64_t seed = config.seeds[job % n_seeds];
    ExperimentConfig variant = config;
    if (config.sweep.axis == "delta") {
      for (auto& b : variant.generate->behaviors) b.delta = value;
    } else if (config.sweep.axis == "beta") {
      variant.beta_prime.reset();
      variant.train.beta = value;
    } else {
      variant.train.eta = value;
    }
    RunOutcome& outcome = result.runs[job];
    outcome.label = config.sweep.axis + "=" + format_number(value);
    outcome.axis_value = value;
    outcome.seed = seed;
    const BehaviorDataset dataset = materialize_dataset(variant, seed);
    const int d = dataset.dim();
    TrainConfig train_config = train_config_for(variant, d);
    used_configs[job] = train_config;
    try {
      BoundsBlock bounds = variant.bounds;
      bounds.beta_prime = train_config.beta * std::sqrt(static_cast<double>(d));
      bounds.theorems = {1};
      BoundsRun run = certify(variant, dataset, seed, bounds, train_config, false);
      outcome.trace = std::move(run.trace);
      outcome.report = std::move(run.report);
    } catch (const DivergedError& e) {
      outcome.diverged = true;
      outcome.error = e.what();
      outcome.trace = e.trace();
    }
  });

  result.loss_chart.title = "Training loss by " + config.sweep.axis;
  result.loss_chart.x_label = "step";
  result.loss_chart.y_label = "loss";
  result.norm_chart.title = "Weight change ||W_U(t) - W_U(0)||";
  result.norm_chart.x_label = "step";
  result.norm_chart.y_label = "operator norm";
  for (std::size_t v = 0; v < n_values; ++v) {
    const RunOutcome& first = result.runs[v * n_seeds];
    if (!first.trace || first.trace->records.empty()) continue;
    result.loss_chart.series.push_back(step_series(first.label, *first.trace, pick_loss));
    result.norm_chart.series.push_back(step_series(first.label, *first.trace, pick_norm));
  }

  if (out) {
    ensure_dir(*out);
    json summary;
    summary["axis"] = config.sweep.axis;
    summary["runs"] = json::array();
    for (std::size_t job = 0; job < result.runs.size(); ++job) {
      const RunOutcome& run = result.runs[job];
      const std::string stem = config.sweep.axis + "_" + format_number(run.axis_value) + "_seed" +
                               std::to_string(run.seed);
      if (run.trace) {
        write_text(*out / (stem + trace_extension(config.format)),
                   trace_text(*run.trace, used_configs[job], config.format));
      }
      if (run.report) write_text(*out / (stem + ".bounds.json"), run.report->to_json());
      json entry = {{"label", run.label}, {"seed", run.seed}, {"diverged", run.diverged}};
      if (run.diverged) entry["error"] = run.error;
      if (run.trace && !run.trace->records.empty()) entry["final_loss"] = run.trace->last().loss;
      if (run.report) entry["verdict"] = std::string(to_string(run.report->summary));
      summary["runs"].push_back(entry);
    }
    write_text(*out / "summary.json", summary.dump(2) + "\n");
    if (!result.loss_chart.series.empty()) {
      render_chart(result.loss_chart, *out / "loss.svg");
      render_chart(result.norm_chart, *out / "norm.svg");
    }
  }
  return result;
}

PriorityResult run_priority(const ExperimentConfig& config,
                            const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kPriority);
  const BehaviorDataset dataset = materialize_dataset(config, config.seeds.front());
  if (dataset.behaviors().size() < 2) config_error("priority needs at least 2 behaviors");
  PriorityResult result;
  try {
    result.report = priority_levels(dataset);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegeneratePriority) throw;
    result.degenerate = true;
  }
  const TrainConfig train_config = train_config_for(config, dataset.dim());
  result.trace = train(dataset, train_config).trace;

  if (!result.degenerate) {
    result.ordering_checked = true;
    std::vector<std::size_t> order(dataset.behaviors().size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return result.report.priority[a] > result.report.priority[b];
    });
    const auto& final_loss = result.trace.last().behavior_loss;
    result.ordering_consistent = true;
    for (std::size_t k = 1; k < order.size(); ++k) {
      if (final_loss[order[k - 1]] > final_loss[order[k]]) result.ordering_consistent = false;
    }
  }

  result.chart.title = "Per-behavior loss, joint training";
  result.chart.x_label = "step";
  result.chart.y_label = "loss";
  for (std::size_t b = 0; b < result.trace.behavior_ids.size(); ++b) {
    Series s;
    s.label = result.trace.behavior_ids[b];
    if (!result.degenerate) s.label += " (P=" + format_number(result.report.priority[b]) + ")";
    for (const auto& r : result.trace.records) {
      s.x.push_back(static_cast<double>(r.step));
      s.y.push_back(r.behavior_loss[b]);
    }
    result.chart.series.push_back(std::move(s));
  }

  if (out) {
    ensure_dir(*out);
    write_text(*out / ("trace" + trace_extension(config.format)),
               trace_text(result.trace, train_config, config.format));
    json doc;
    doc["degenerate"] = result.degenerate;
    if (!result.degenerate) {
      doc["behaviors"] = result.report.behavior_ids;
      doc["b_norm"] = result.report.b_norm;
      doc["priority"] = result.report.priority;
      doc["improvement_proxy"] = result.report.improvement_proxy;
      doc["b_star"] = result.report.b_star;
      doc["b_star_tie"] = result.report.b_star_tie;
      doc["ordering_consistent"] = result.ordering_consistent;
    }
    write_text(*out / "priority.json", doc.dump(2) + "\n");
    render_chart(result.chart, *out / "loss.svg");
  }
  return result;
}

MisalignResult run_misalign(const ExperimentConfig& config,
                            const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kMisalign);
  MisalignResult result;
  result.runs.resize(config.seeds.size());
  std::vector<TrainConfig> used(config.seeds.size());
  run_jobs(config.seeds.size(), [&](std::size_t job) {
    const std::uint64_t seed = config.seeds[job];
    const BehaviorDataset dataset = materialize_dataset(config, seed);
    const BehaviorDataset shifted =
        apply_alignment_shift(dataset, config.misalign.kappa_sep, config.misalign.kappa_var);
    const TrainConfig train_config = train_config_for(config, dataset.dim());
    used[job] = train_config;
    MisalignRun& run = result.runs[job];
    run.seed = seed;
    run.base = train(flip_labels(dataset), train_config).trace;
    run.aligned = train(flip_labels(shifted), train_config).trace;
    run.base_steps = steps_to_threshold(run.base, config.misalign.loss_threshold);
    run.aligned_steps = steps_to_threshold(run.aligned, config.misalign.loss_threshold);
  });

  result.chart.title = "Misalignment training (flipped labels)";
  result.chart.x_label = "step";
  result.chart.y_label = "loss";
  result.chart.series.push_back(step_series("base", result.runs.front().base, pick_loss));
  result.chart.series.push_back(step_series("aligned", result.runs.front().aligned, pick_loss));

  if (out) {
    ensure_dir(*out);
    json summary;
    summary["loss_threshold"] = config.misalign.loss_threshold;
    summary["kappa_sep"] = config.misalign.kappa_sep;
    summary["kappa_var"] = config.misalign.kappa_var;
    summary["runs"] = json::array();
    for (std::size_t job = 0; job < result.runs.size(); ++job) {
      const MisalignRun& run = result.runs[job];
      const std::string stem = "seed" + std::to_string(run.seed);
      write_text(*out / (stem + "_base" + trace_extension(config.format)),
                 trace_text(run.base, used[job], config.format));
      write_text(*out / (stem + "_aligned" + trace_extension(config.format)),
                 trace_text(run.aligned, used[job], config.format));
      auto steps = [](const std::optional<std::int64_t>& s) {
        return s ? json(*s) : json("not-reached");
      };
      summary["runs"].push_back({{"seed", run.seed},
                                 {"base_steps", steps(run.base_steps)},
                                 {"aligned_steps", steps(run.aligned_steps)}});
    }
    write_text(*out / "summary.json", summary.dump(2) + "\n");
    render_chart(result.chart, *out / "loss.svg");
  }
  return result;
}

BoundsResult run_bounds(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kBounds);
  BoundsResult result;
  result.runs.resize(config.seeds.size());
  std::vector<TrainConfig> used(config.seeds.size());
  run_jobs(config.seeds.size(), [&](std::size_t job) {
    const std::uint64_t seed = config.seeds[job];
    const BehaviorDataset dataset = materialize_dataset(config, seed);
    RunOutcome& outcome = result.runs[job];
    outcome.seed = seed;
    outcome.label = "seed" + std::to_string(seed);
    used[job] = config.train;
    used[job].beta = config.bounds.beta_prime / std::sqrt(static_cast<double>(dataset.dim()));
    try {
      BoundsRun run = certify(config, dataset, seed, config.bounds, config.train,
                              config.bounds.steps_from_horizon);
      used[job].steps = run.trace.last().step;
      outcome.trace = std::move(run.trace);
      outcome.report = std::move(run.report);
    } catch (const DivergedError& e) {
      outcome.diverged = true;
      outcome.error = e.what();
      outcome.trace = e.trace();
    }
  });
  for (const auto& run : result.runs) {
    if (!run.report) {
      ++result.not_applicable;
      continue;
    }
    for (const auto& c : run.report->checks) result.violations += c.violations;
    if (run.report->summary == Verdict::kPass) ++result.passed;
    if (run.report->summary == Verdict::kNotApplicable) ++result.not_applicable;
  }
  if (out) {
    ensure_dir(*out);
    json summary;
    summary["runs"] = json::array();
    for (std::size_t job = 0; job < result.runs.size(); ++job) {
      const RunOutcome& run = result.runs[job];
      if (run.trace) {
        write_text(*out / (run.label + trace_extension(config.format)),
                   trace_text(*run.trace, used[job], config.format));
      }
      if (run.report) write_text(*out / (run.label + ".bounds.json"), run.report->to_json());
      json entry = {{"seed", run.seed}, {"diverged", run.diverged}};
      if (run.report) entry["verdict"] = std::string(to_string(run.report->summary));
      summary["runs"].push_back(entry);
    }
    summary["violations"] = result.violations;
    summary["passed"] = result.passed;
    summary["not_applicable"] = result.not_applicable;
    write_text(*out / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

Projection run_project(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
  config.validate_for(ExperimentKind::kProject);
  const BehaviorDataset dataset = materialize_dataset(config, config.seeds.front());
  const std::string behavior = config.project_behavior.value_or(dataset.behavior(0).id);
  Projection projection = pca_project(dataset, behavior);
  if (out) {
    ensure_dir(*out);
    std::ostringstream csv;
    csv << "label,pc1,pc2\n";
    ChartSpec chart;
    chart.title = "PCA projection: " + behavior;
    chart.x_label = "PC1";
    chart.y_label = "PC2";
    Series plus{"positive", {}, {}, SeriesStyle::kPoints};
    Series minus{"negative", {}, {}, SeriesStyle::kPoints};
    for (const auto& p : projection.points) {
      csv << (p.label == Label::kPositive ? '+' : '-') << ',' << format_number(p.x) << ','
          << format_number(p.y) << '\n';
      Series& s = p.label == Label::kPositive ? plus : minus;
      s.x.push_back(p.x);
      s.y.push_back(p.y);
    }
    chart.series = {plus, minus};
    write_text(*out / "projection.csv", csv.str());
    json meta = {{"behavior", behavior},
                 {"rank", projection.rank},
                 {"rank_deficient", projection.rank_deficient},
                 {"singular_values", projection.basis.singular_values},
                 {"centroid_distance", projection.centroid_distance()}};
    write_text(*out / "projection.json", meta.dump(2) + "\n");
    render_chart(chart, *out / "projection.svg");
  }
  return projection;
}

}  // namespace dpodyn
