#include "dpodyn/dataset_io.hpp"
#include "dpodyn/errors.hpp"
#include "dpodyn/experiments.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dpodyn;

namespace {

const char* kBase = R"({
  "data": {"generate": {"d": 32, "n_per_behavior": 40, "direction_seed": 3,
           "behaviors": [{"id": "b", "delta": 0.3}]}},
  "train": {"beta": 0.5, "eta": 0.5, "steps": 60, "record_every": 10},
  "seeds": [1, 2]
})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig base_with(const std::string& extra_json) {
  auto doc = nlohmann::json::parse(kBase);
  doc.update(nlohmann::json::parse(extra_json), true);
  return parse_config(doc.dump());
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dpodyn_exp_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("unknown config keys are rejected") {
  CHECK_THROWS_AS(parse_config(R"({"train": {"beta": 1, "betta": 2}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"train": {"beta": "high"}})"), Error);
  CHECK_THROWS_AS(parse_config("{oops"), Error);
  try {
    parse_config(R"({"data": {"generate": {"d": 4, "n_per_behavior": 2, "behaviors": [{"delta": 0, "sigma": 1}]}}})");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("sigma") != std::string::npos);
  }
}

TEST_CASE("config needs exactly one data source") {
  const ExperimentConfig none = parse_config(R"({"train": {"steps": 1}})");
  CHECK_THROWS_AS(none.validate_for(ExperimentKind::kTrain), Error);
  CHECK_THROWS_AS(parse_config(R"({"data": {"path": "x", "generate": {}}})"), Error);
}

TEST_CASE("beta' resolves against the dimension") {
  const ExperimentConfig c = base_with(R"({"train": {"beta_prime": 2.0, "eta": 0.1}})");
  CHECK(resolved_beta(c, 16) == 0.5);
}

TEST_CASE("sweep series start at ln 2 and match the axis length") {
  const ExperimentConfig c = base_with(R"({"sweep": {"axis": "delta", "values": [0.1, 0.3, 0.5]}})");
  const SweepResult r = run_sweep(c);
  CHECK(r.runs.size() == 6);
  CHECK(r.loss_chart.series.size() == 3);
  for (const auto& s : r.loss_chart.series) CHECK(std::abs(s.y.front() - std::log(2.0)) <= 1e-12);
  CHECK(r.runs[0].axis_value == 0.1);
  CHECK(r.runs[1].seed == 2);
}

TEST_CASE("eta = 0 in a sweep is flat at ln 2") {
  const ExperimentConfig c = base_with(R"({"sweep": {"axis": "eta", "values": [0.0]}})");
  const SweepResult r = run_sweep(c);
  for (double y : r.loss_chart.series[0].y) CHECK(std::abs(y - std::log(2.0)) <= 1e-12);
}

TEST_CASE("a single-value sweep equals a plain train run") {
  ExperimentConfig c = base_with(R"({"sweep": {"axis": "delta", "values": [0.3]}, "seeds": [1]})");
  const SweepResult sweep = run_sweep(c);
  const TrainResult plain = run_train(c);
  CHECK(trace_to_csv(*sweep.runs[0].trace) == trace_to_csv(plain.trace));
}

TEST_CASE("identity misalignment shift gives identical traces") {
  const ExperimentConfig c = base_with(R"({"misalign": {"kappa_sep": 1, "kappa_var": 1}})");
  const MisalignResult r = run_misalign(c);
  for (const auto& run : r.runs) {
    CHECK(trace_to_csv(run.base) == trace_to_csv(run.aligned));
    CHECK(run.base_steps == run.aligned_steps);
  }
}

TEST_CASE("identical behaviors have identical loss curves under joint training") {
  const ExperimentConfig gen = base_with("{}");
  const BehaviorDataset one = materialize_dataset(gen, 4);
  Behavior twin = one.behavior(0);
  twin.id = "twin";
  const auto dir = fresh_dir("twin");
  std::filesystem::create_directories(dir);
  save_dataset(BehaviorDataset::create(one.dim(), {one.behavior(0), twin}), dir / "twin.jsonl");
  const ExperimentConfig c =
      parse_config(R"({"data": {"path": ")" + (dir / "twin.jsonl").string() + R"("}, "train": {"steps": 20}})");
  const PriorityResult r = run_priority(c);
  REQUIRE(r.chart.series.size() == 2);
  CHECK(r.chart.series[0].y == r.chart.series[1].y);
  std::filesystem::remove_all(dir);
}

TEST_CASE("priority with one behavior is a config error") {
  const ExperimentConfig c = parse_config(kBase);
  CHECK_THROWS_AS(run_priority(c), Error);
}

TEST_CASE("bounds gate on the step-size hypothesis") {
  ExperimentConfig c = base_with(R"({"train": {"eta": 0.05, "steps": 30}, "bounds": {"beta_prime": 1.0}})");
  c.generate->behaviors[0].variance_plus = c.generate->behaviors[0].variance_minus = 0.01;
  const BoundsResult ok = run_bounds(c);
  CHECK(ok.passed == 2);
  CHECK(ok.violations == 0);

  c.train.eta = 1e3;
  const BoundsResult gated = run_bounds(c);
  CHECK(gated.passed == 0);
  CHECK(gated.not_applicable == 2);
}

TEST_CASE("bounds with a t = 0 only trace pass") {
  ExperimentConfig c = base_with(R"({"train": {"eta": 0.05, "steps": 0}})");
  c.generate->behaviors[0].variance_plus = c.generate->behaviors[0].variance_minus = 0.01;
  CHECK(run_bounds(c).passed == 2);
}

TEST_CASE("outputs are byte identical across reruns and job counts") {
  const ExperimentConfig c = base_with(R"({"sweep": {"axis": "beta", "values": [0.2, 0.8]}})");
  const auto a = fresh_dir("a");
  const auto b = fresh_dir("b");
  run_sweep(c, a);
  setenv("DPODYN_JOBS", "4", 1);
  run_sweep(c, b);
  unsetenv("DPODYN_JOBS");
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(files == 2 * 2 * 2 + 3);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("steps to threshold") {
  TrainTrace t;
  for (int s = 0; s < 4; ++s) {
    TraceRecord r;
    r.step = s * 10;
    r.loss = 0.7 - 0.2 * s;
    t.records.push_back(r);
  }
  CHECK(steps_to_threshold(t, 0.3) == 20);
  CHECK_FALSE(steps_to_threshold(t, 0.0).has_value());
}
