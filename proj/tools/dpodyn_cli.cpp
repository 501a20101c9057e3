#include "dpodyn/chart.hpp"
#include "dpodyn/dataset_io.hpp"
#include "dpodyn/errors.hpp"
#include "dpodyn/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format;
};

dpodyn::ExperimentConfig load(const Options& opts) {
  dpodyn::ExperimentConfig config = dpodyn::load_config(opts.config);
  if (opts.seed) config.seeds = {*opts.seed};
  if (!opts.format.empty()) config.format = opts.format;
  if (!opts.out.empty()) config.output_dir = opts.out;
  return config;
}

// Datasets are always written as JSON Lines; CSV is an import format only.
int run_generate(const dpodyn::ExperimentConfig& config) {
  config.validate_for(dpodyn::ExperimentKind::kGenerate);
  const std::filesystem::path out = config.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw dpodyn::Error(dpodyn::ErrorKind::kIo, "cannot create '" + out.string() + "'");
  for (std::uint64_t seed : config.seeds) {
    const auto dataset = dpodyn::materialize_dataset(config, seed);
    const auto path = out / ("dataset_seed" + std::to_string(seed) + ".jsonl");
    dpodyn::save_dataset(dataset, path);
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

int run_render(const Options& opts) {
  std::ifstream in(opts.config, std::ios::binary);
  if (!in) throw dpodyn::Error(dpodyn::ErrorKind::kIo, "cannot open '" + opts.config + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const dpodyn::ChartSpec spec = dpodyn::chart_from_json(buffer.str());
  const std::filesystem::path out = opts.out.empty() ? std::string("out") : opts.out;
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw dpodyn::Error(dpodyn::ErrorKind::kIo, "cannot create '" + out.string() + "'");
  dpodyn::render_chart(spec, out / "chart.svg");
  return kExitOk;
}

int dispatch(const std::string& command, const Options& opts) {
  using namespace dpodyn;
  if (command == "render") return run_render(opts);
  const ExperimentConfig config = load(opts);
  const std::filesystem::path out = config.output_dir;
  if (command == "generate") return run_generate(config);
  if (command == "train") {
    const TrainResult result = run_train(config, out);
    std::cout << "final loss " << format_number(result.trace.last().loss) << "\n";
    return kExitOk;
  }
  if (command == "sweep") {
    const SweepResult result = run_sweep(config, out);
    bool diverged = false;
    for (const auto& run : result.runs) {
      std::cout << run.label << " seed " << run.seed;
      if (run.diverged) {
        diverged = true;
        std::cout << " diverged: " << run.error << "\n";
      } else {
        std::cout << " final loss " << format_number(run.trace->last().loss) << "\n";
      }
    }
    return diverged ? kExitDiverged : kExitOk;
  }
  if (command == "priority") {
    const PriorityResult result = run_priority(config, out);
    if (result.degenerate) {
      std::cout << "priority undefined: mean improvement direction is zero\n";
    } else {
      for (std::size_t i = 0; i < result.report.behavior_ids.size(); ++i) {
        std::cout << result.report.behavior_ids[i] << " P=" << format_number(result.report.priority[i])
                  << "\n";
      }
      std::cout << "loss ordering " << (result.ordering_consistent ? "matches" : "differs from")
                << " priority ordering\n";
    }
    return kExitOk;
  }
  if (command == "misalign") {
    const MisalignResult result = run_misalign(config, out);
    for (const auto& run : result.runs) {
      auto show = [](const std::optional<std::int64_t>& s) {
        return s ? std::to_string(*s) : std::string("not reached");
      };
      std::cout << "seed " << run.seed << " base " << show(run.base_steps) << " aligned "
                << show(run.aligned_steps) << "\n";
    }
    return kExitOk;
  }
  if (command == "bounds") {
    const BoundsResult result = run_bounds(config, out);
    bool diverged = false;
    for (const auto& run : result.runs) diverged = diverged || run.diverged;
    std::cout << "passed " << result.passed << ", not applicable " << result.not_applicable
              << ", violations " << result.violations << "\n";
    return diverged ? kExitDiverged : kExitOk;
  }
  if (command == "project") {
    const Projection projection = run_project(config, out);
    std::cout << "rank " << projection.rank << ", centroid distance "
              << format_number(projection.centroid_distance()) << "\n";
    return kExitOk;
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced DPO dynamics: data generation, training and bound checks"};
  app.require_subcommand(1);
  Options opts;
  const char* names[] = {"generate", "train", "sweep", "priority", "misalign", "bounds", "project", "render"};
  for (const char* name : names) {
    auto* sub = app.add_subcommand(name);
    const bool render = std::string(name) == "render";
    sub->add_option("--config", opts.config, render ? "Chart JSON file" : "Experiment config (JSON)")
        ->required();
    sub->add_option("--out", opts.out, "Output directory");
    if (!render) {
      sub->add_option("--seed", opts.seed, "Single seed, overrides the config");
      sub->add_option("--format", opts.format, "Trace format")->check(CLI::IsMember({"csv", "json"}));
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, opts);
  } catch (const dpodyn::Error& e) {
    std::cerr << "error (" << dpodyn::to_string(e.kind()) << "): " << e.what() << "\n";
    switch (e.kind()) {
      case dpodyn::ErrorKind::kIo: return kExitIo;
      case dpodyn::ErrorKind::kDiverged: return kExitDiverged;
      default: return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
