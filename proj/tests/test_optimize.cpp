#include <doctest.h>

#include <cmath>
#include <random>

#include "chillopt/enrich.hpp"
#include "chillopt/error.hpp"
#include "chillopt/optimize.hpp"
#include "chillopt/scenario.hpp"

using namespace chillopt;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

std::shared_ptr<const PlantModelGraph> small_graph() {
  static const auto g = [] {
    Scenario s;
    s.days = 6;
    s.enrichment = {{"n_windows", 3}, {"duration", 30}, {"seed", 2}};
    const auto plan = plan_from_json(s.enrichment, s.plant, s.days);
    const auto recs = clean_records(simulate(s, scenario_controller(s), s.days * kMinutesPerDay), 1);
    TrainOptions o;
    o.cross_validate = false;
    o.mlp.epochs = 1500;
    o.bounds_filter = [plan](const SensorRecord& r) { return plan.active(r.ts) != nullptr; };
    return std::make_shared<const PlantModelGraph>(train_graph(recs, o).graph);
  }();
  return g;
}

OptimizationProblem problem_at(const SensorRecord& r) {
  OptimizationProblem p;
  p.graph = small_graph();
  p.weather = r.weather;
  p.load_rt = r.load_rt;
  p.chsp = r.chsp;
  p.on = r.on;
  p.bounds = p.graph->bounds;
  p.start = r.control;
  return p;
}

}  // namespace

TEST_CASE("solver finds a separable quadratic minimum") {
  const ConstrainedFunction fn = [](const Eigen::VectorXd& x) {
    return Evaluation{(x.array() - 50.0).square().sum(), {}};
  };
  for (const Eigen::Vector3d x0 : {Eigen::Vector3d(20, 20, 20), Eigen::Vector3d(100, 30, 77), Eigen::Vector3d(50, 50, 50)}) {
    const auto r = minimize_linear_tr(fn, x0, Eigen::Vector3d::Constant(20), Eigen::Vector3d::Constant(100));
    CHECK((r.x.array() - 50.0).abs().maxCoeff() <= 0.1);
    CHECK(r.evals <= 200);
  }
}

TEST_CASE("solver handles a linear constraint and an infeasible start") {
  // min x + y subject to x + y >= 120 and x - y >= 0 in [20, 100]^2.
  const ConstrainedFunction fn = [](const Eigen::VectorXd& x) {
    return Evaluation{x[0] + 2 * x[1], {(x[0] + x[1] - 120.0) / 80.0, (x[0] - x[1]) / 80.0}};
  };
  const auto r = minimize_linear_tr(fn, Eigen::Vector2d(20, 20), Eigen::Vector2d(20, 20), Eigen::Vector2d(100, 100));
  CHECK(r.x[0] == doctest::Approx(100).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(20).epsilon(1e-2));
  CHECK(r.value.c[0] >= -1e-3);
}

TEST_CASE("solver reports an empty feasible set") {
  const ConstrainedFunction fn = [](const Eigen::VectorXd& x) {
    return Evaluation{x.sum(), {(x[0] - 150.0) / 10.0}};
  };
  CHECK(code_of([&] {
          minimize_linear_tr(fn, Eigen::Vector3d(50, 50, 50), Eigen::Vector3d::Constant(20), Eigen::Vector3d::Constant(100));
        }) == ErrorCode::NoFeasiblePoint);
}

TEST_CASE("solver never returns worse than a feasible start") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(20, 100);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d c(u(rng), u(rng), u(rng));
    const ConstrainedFunction fn = [c](const Eigen::VectorXd& x) {
      return Evaluation{std::sin(x[0] / 9.0) + std::cos(x[1] / 7.0) + 1e-4 * (x - c).squaredNorm(), {}};
    };
    const Eigen::Vector3d x0(u(rng), u(rng), u(rng));
    const auto r = minimize_linear_tr(fn, x0, Eigen::Vector3d::Constant(20), Eigen::Vector3d::Constant(100));
    CHECK(r.value.f <= fn(x0).f);
    CHECK((r.x.array() >= 20.0).all());
    CHECK((r.x.array() <= 100.0).all());
  }
}

TEST_CASE("control_step clamps toward the target") {
  CHECK(control_step({30, 30, 30}, {80, 32, 10}, 5) == ControlVector{35, 32, 25});
  CHECK(control_step({30, 30, 30}, {33, 27, 34}, 5) == ControlVector{33, 27, 34});
  ControlVector c{20, 90, 55};
  const ControlVector target{97, 21, 55.5};
  int steps = 0;
  while (!(c == target)) {
    c = control_step(c, target, 5);
    ++steps;
  }
  CHECK(steps == static_cast<int>(std::ceil(77.0 / 5.0)));
  CHECK(code_of([] { control_step({}, {}, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("solve on a trained graph matches the grid oracle") {
  Scenario s;
  s.days = 1;
  const auto recs = simulate(s, baseline_controller(s), kMinutesPerDay);
  for (Minute t : {200, 700, 1000}) {
    const auto p = problem_at(recs[static_cast<std::size_t>(t)]);
    const auto found = solve(p);
    const auto grid = grid_search(p, 2.0);
    CHECK(found.feasible);
    CHECK(found.predicted_kw <= 1.02 * grid.predicted_kw);
    CHECK(found.predicted_kw <= predict_graph(*p.graph, graph_input(recs[static_cast<std::size_t>(t)])).total_kw);
  }
}

TEST_CASE("unreachable temperature bound gives NoFeasiblePoint") {
  Scenario s;
  s.days = 1;
  const auto recs = simulate(s, baseline_controller(s), 300);
  auto p = problem_at(recs[100]);
  p.bounds.cwshdr = {0.0, 1.0};
  CHECK(code_of([&] { solve(p); }) == ErrorCode::NoFeasiblePoint);
}

TEST_CASE("realtime loop: zero ticks, bounded steps, no macro-control") {
  Scenario s;
  s.days = 1;
  OptimizerSettings settings;
  settings.period = 3;
  RealtimeOptimizer opt(small_graph(), settings);
  {
    SimulatedPlant plant(s);
    const auto log = realtime_loop(plant, opt, [](int) { return true; });
    CHECK(log.empty());
    CHECK(plant.records().size() == 1);
    CHECK(plant.records().back().control == s.initial_control);
  }
  SimulatedPlant plant(s);
  const auto log = realtime_loop(plant, opt, [](int ticks) { return ticks >= 40; });
  REQUIRE(log.size() == 40);
  ControlVector prev = s.initial_control;
  for (const auto& e : log) {
    CHECK(std::abs(e.applied.cwp_speed - prev.cwp_speed) <= 5.0 + 1e-12);
    CHECK(std::abs(e.applied.ct_speed - prev.ct_speed) <= 5.0 + 1e-12);
    CHECK(s.plant.ct_speed.contains(e.applied.ct_speed));
    prev = e.applied;
    // The record at the entry's minute ran with exactly the applied control.
    const auto& rec = plant.records()[static_cast<std::size_t>(e.ts)];
    CHECK(rec.control == e.applied);
    CHECK(rec.on == s.schedule.for_minute(e.ts).on);
  }
  for (const auto& [minute, source] : plant.sources()) CHECK(source == Source::Optimizer);
}

TEST_CASE("solver failure holds the previous controls") {
  Scenario s;
  s.days = 1;
  auto broken = std::make_shared<PlantModelGraph>(*small_graph());
  broken->bounds.cwshdr = {0.0, 1.0};
  RealtimeOptimizer opt(broken, {});
  const auto recs = simulate(s, baseline_controller(s), 10);
  const auto e = opt.tick(recs[5], recs[5].on, recs[5].chsp);
  CHECK(e.applied == recs[5].control);
  CHECK_FALSE(e.feasible);
  CHECK(e.error.find("NoFeasiblePoint") != std::string::npos);
  CHECK(e.ts == 6);
}

TEST_CASE("run log round trip") {
  std::vector<RunLogEntry> log(2);
  log[0].ts = 4;
  log[0].applied = {50.5, 60.25, 33};
  log[0].predicted_kw = 412.125;
  log[0].feasible = true;
  log[1].ts = 6;
  log[1].error = "NoFeasiblePoint: x";
  const auto path = std::filesystem::temp_directory_path() / "chillopt_test_runlog.jsonl";
  write_run_log(path, log);
  const auto back = read_run_log(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].applied == log[0].applied);
  CHECK(back[0].predicted_kw == log[0].predicted_kw);
  CHECK(back[1].error == log[1].error);
  const auto j = nlohmann::json(log[0]);
  CHECK(j.size() == 6);
  std::filesystem::remove(path);
}
