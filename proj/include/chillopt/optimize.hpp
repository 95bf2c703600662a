#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chillopt/enrich.hpp"
#include "chillopt/scenario.hpp"
#include "chillopt/schedule.hpp"
#include "chillopt/surrogate.hpp"

namespace chillopt {

// f(x) and constraint values c_j(x); c_j >= 0 is feasible.
struct Evaluation {
  double f = 0.0;
  std::vector<double> c;
};

using ConstrainedFunction = std::function<Evaluation(const Eigen::VectorXd&)>;

struct SolverOptions {
  double rho_begin = 10.0;
  double rho_end = 0.1;
  int max_evals = 200;
  double feasibility_tol = 1e-3;  // on max(-c_j)
};

struct SolverResult {
  Eigen::VectorXd x;
  Evaluation value;
  int evals = 0;
};

// Derivative-free minimization by linear approximation: f and every c_j are
// interpolated linearly on a simplex of n+1 evaluated points, each step solves
// the linearized problem inside an infinity-norm trust region of radius rho
// (least violation first, then least f), and rho shrinks from rho_begin to
// rho_end when steps stop paying off. Box bounds are kept exactly: every
// evaluated point lies inside [lower, upper]. Returns the best feasible point
// evaluated; throws NoFeasiblePoint if none was found.
SolverResult minimize_linear_tr(const ConstrainedFunction& fn, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const SolverOptions& options = {});

struct OptimizationProblem {
  std::shared_ptr<const PlantModelGraph> graph;
  Weather weather;
  double load_rt = 0.0;
  double chsp = 7.0;
  OnOff on;
  ControlRanges box;
  QuantityBounds bounds;
  ControlVector start;

  void validate() const;
};

struct OptimizationResult {
  ControlVector control;
  double predicted_kw = 0.0;
  double chfhdr = 0.0;
  double cwfhdr = 0.0;
  double cwshdr = 0.0;
  int evaluations = 0;
  bool feasible = false;
};

// Constraint values of a graph prediction: the predicted header flows and
// condenser temperature inside their bounds, scaled by each bound's span.
std::vector<double> quantity_constraints(const OptimizationProblem& p, const PowerBreakdown& b);

OptimizationResult solve(const OptimizationProblem& problem, const SolverOptions& options = {});

// Exhaustive search over a regular grid of the box (step in speed percent);
// the oracle the solver is checked against. Throws NoFeasiblePoint when no
// grid point satisfies the constraints.
OptimizationResult grid_search(const OptimizationProblem& problem, double step = 1.0);

// Moves each speed toward target by at most max_delta.
ControlVector control_step(const ControlVector& current, const ControlVector& target, double max_delta = 5.0);

struct RunLogEntry {
  Minute ts = 0;  // minute the applied control takes effect
  ControlVector applied;
  double predicted_kw = 0.0;  // graph prediction at the applied control
  double measured_kw = 0.0;   // total_kw of the record the tick read
  int solver_evals = 0;
  bool feasible = false;
  std::string error;  // set when the solver failed and controls were held
};

void to_json(nlohmann::json& j, const RunLogEntry& e);
void from_json(const nlohmann::json& j, RunLogEntry& e);

struct OptimizerSettings {
  Minute period = 2;  // minutes between updates, in [2, 3]
  double max_delta = 5.0;
  SolverOptions solver;
  ControlRanges box;

  void validate() const;
};

// One micro-control update: read the latest record, solve for the operating
// conditions of the coming minute, and step toward the solution.
class RealtimeOptimizer {
 public:
  RealtimeOptimizer(std::shared_ptr<const PlantModelGraph> graph, OptimizerSettings settings);

  const OptimizerSettings& settings() const { return settings_; }
  const PlantModelGraph& graph() const { return *graph_; }

  // on/chsp are those in force at latest.ts + 1. On solver failure the current
  // control is held and the entry carries the error.
  RunLogEntry tick(const SensorRecord& latest, const OnOff& on, double chsp) const;

 private:
  std::shared_ptr<const PlantModelGraph> graph_;
  OptimizerSettings settings_;
};

// Controller that ticks the optimizer every period minutes, holding speeds
// in between, with on/off and chsp from the operator schedule. Each tick is
// appended to `log` when given.
Controller optimizer_controller(std::shared_ptr<const RealtimeOptimizer> optimizer, OperatorSchedule schedule,
                                std::vector<RunLogEntry>* log = nullptr);

// What the loop needs from a plant: the latest reading, a way to apply speeds
// and a way to let `minutes` of plant time pass (false when the plant stops).
class PlantInterface {
 public:
  virtual ~PlantInterface() = default;
  virtual std::optional<SensorRecord> latest() = 0;
  // on/chsp the operator schedule has in force for minute t.
  virtual DayPlan plan_for(Minute t) = 0;
  virtual void apply(const ControlVector& control, Source source) = 0;
  virtual bool advance(Minute minutes) = 0;
};

// Simulator-backed plant: the scenario's weather, load and schedule.
class SimulatedPlant : public PlantInterface {
 public:
  explicit SimulatedPlant(const Scenario& scenario, Minute start = 0);

  std::optional<SensorRecord> latest() override;
  DayPlan plan_for(Minute t) override;
  void apply(const ControlVector& control, Source source) override;
  bool advance(Minute minutes) override;

  const std::vector<SensorRecord>& records() const { return records_; }
  // (minute, source) of every control change applied.
  const std::vector<std::pair<Minute, Source>>& sources() const { return sources_; }

 private:
  void step_once();

  std::shared_ptr<const Scenario> scenario_;
  Plant plant_;
  PlantState state_;
  std::vector<SensorRecord> records_;
  std::vector<std::pair<Minute, Source>> sources_;
};

// Runs ticks until stop(ticks_done) returns true or the plant stops.
std::vector<RunLogEntry> realtime_loop(PlantInterface& plant, const RealtimeOptimizer& optimizer,
                                       const std::function<bool(int)>& stop);

void write_run_log(const std::filesystem::path& path, const std::vector<RunLogEntry>& log);
std::vector<RunLogEntry> read_run_log(const std::filesystem::path& path);

}  // namespace chillopt
