#include "chillopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "chillopt/error.hpp"

namespace chillopt {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Point {
  VectorXd x;
  Evaluation v;
};

double violation(const std::vector<double>& c) {
  double m = 0.0;
  for (double cj : c) m = std::max(m, -cj);
  return m;
}

// min obj.z over {lo <= z <= hi, A z >= b}. The polytope is bounded, so an
// optimum sits on a vertex; with at most four variables the vertices are
// cheap to enumerate. Among equal objectives the shortest z wins.
std::optional<VectorXd> solve_lp(const VectorXd& obj, const MatrixXd& a, const VectorXd& b, const VectorXd& lo,
                                 const VectorXd& hi) {
  const Eigen::Index n = obj.size();
  const Eigen::Index m = a.rows();
  const Eigen::Index k = m + 2 * n;
  MatrixXd g(k, n);
  VectorXd h(k);
  g.topRows(m) = a;
  h.head(m) = b;
  g.middleRows(m, n) = MatrixXd::Identity(n, n);
  h.segment(m, n) = lo;
  g.bottomRows(n) = -MatrixXd::Identity(n, n);
  h.tail(n) = -hi;

  double scale = 1.0;
  for (Eigen::Index i = 0; i < k; ++i) scale = std::max(scale, std::abs(h[i]));
  const double tol = 1e-9 * scale;

  std::optional<VectorXd> best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(n));
  MatrixXd sub(n, n);
  VectorXd rhs(n);
  // Odometer over increasing index tuples.
  for (Eigen::Index i = 0; i < n; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    for (Eigen::Index i = 0; i < n; ++i) {
      sub.row(i) = g.row(pick[static_cast<std::size_t>(i)]);
      rhs[i] = h[pick[static_cast<std::size_t>(i)]];
    }
    Eigen::FullPivLU<MatrixXd> lu(sub);
    if (lu.rank() == n) {
      const VectorXd z = lu.solve(rhs);
      if (((g * z - h).array() >= -tol).all()) {
        const double o = obj.dot(z);
        const double eps = best ? 1e-12 * (1.0 + std::abs(best_obj)) : 0.0;
        if (!best || o < best_obj - eps || (o <= best_obj + eps && z.norm() < best->norm())) {
          best_obj = std::min(best_obj, o);
          best = z;
        }
      }
    }
    Eigen::Index i = n - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == k - n + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

// |det| of the columns divided by the product of their lengths: 1 for an
// orthogonal simplex, 0 for a flat one.
double flatness(const MatrixXd& d) {
  double denom = 1.0;
  for (Eigen::Index i = 0; i < d.cols(); ++i) denom *= std::max(d.col(i).norm(), 1e-300);
  return std::abs(d.determinant()) / denom;
}

class LinearTrustRegion {
 public:
  LinearTrustRegion(const ConstrainedFunction& fn, VectorXd lower, VectorXd upper, const SolverOptions& opt)
      : fn_(fn), lower_(std::move(lower)), upper_(std::move(upper)), opt_(opt) {}

  SolverResult run(const VectorXd& x0) {
    const Eigen::Index n = x0.size();
    rho_ = opt_.rho_begin;
    best_ = evaluate(x0.cwiseMax(lower_).cwiseMin(upper_));
    m_ = best_.v.c.size();
    for (Eigen::Index k = 0; k < n && budget(); ++k) vertices_.push_back(evaluate(best_.x + axis_step(k)));

    for (int guard = 0; budget() && static_cast<Eigen::Index>(vertices_.size()) == n && guard < 20 * opt_.max_evals;
         ++guard) {
      const MatrixXd d = offsets();
      if (!geometry_ok(d)) {
        improve_geometry();
        continue;
      }
      // Linear models through the simplex: f(x_b + s) ~ f_b + g.s
      const Eigen::PartialPivLU<MatrixXd> lu(d.transpose());
      VectorXd df(n);
      MatrixXd dc(n, static_cast<Eigen::Index>(m_));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = vertices_[static_cast<std::size_t>(i)].v;
        df[i] = v.f - best_.v.f;
        for (std::size_t j = 0; j < m_; ++j) dc(i, static_cast<Eigen::Index>(j)) = v.c[j] - best_.v.c[j];
      }
      const VectorXd g = lu.solve(df);
      const MatrixXd a = lu.solve(dc).transpose();  // m x n
      VectorXd c0(static_cast<Eigen::Index>(m_));
      for (std::size_t j = 0; j < m_; ++j) c0[static_cast<Eigen::Index>(j)] = best_.v.c[j];

      const VectorXd step = trust_region_step(g, a, c0);
      const double v0 = violation(best_.v.c);
      const double vd = m_ ? std::max(0.0, (-(c0 + a * step)).maxCoeff()) : 0.0;
      const double df_pred = g.dot(step);
      if (vd < v0 - 1e-12 && df_pred > 0.0) {
        const double needed = df_pred / (v0 - vd);
        if (mu_ < 1.5 * needed) {
          mu_ = 2.0 * needed;
          reselect_best();
          continue;
        }
      }
      const double pred = -df_pred + mu_ * (v0 - vd);
      if (step.lpNorm<Eigen::Infinity>() < 1e-3 * rho_ || pred <= 1e-13 * (1.0 + std::abs(best_.v.f))) {
        if (!shrink()) break;
        continue;
      }

      Point trial = evaluate(best_.x + step);
      const double ratio = (merit(best_) - merit(trial)) / pred;
      if (merit(trial) < merit(best_)) {
        // The old best joins the simplex in place of the vertex whose loss
        // keeps the simplex least flat.
        std::swap(trial, best_);
        replace_best_fit(std::move(trial));
      } else {
        replace_if_better(std::move(trial));
      }
      if (ratio < 0.1) {
        if (geometry_ok(offsets()) && far_vertex() < 0) {
          if (!shrink()) break;
        } else {
          improve_geometry();
        }
      }
    }

    polish();

    if (!best_feasible_) {
      fail(ErrorCode::NoFeasiblePoint, "no point within " + std::to_string(opt_.feasibility_tol) +
                                           " of the constraints after " + std::to_string(evals_) +
                                           " evaluations (least violation " + std::to_string(least_violation_) + ")");
    }
    return {best_feasible_->x, best_feasible_->v, evals_};
  }

 private:
  bool budget() const { return evals_ < opt_.max_evals; }

  // Coordinate moves of rho_end; the box-shaped linear step cannot fix one
  // coordinate at a time.
  void polish() {
    bool moved = true;
    while (moved && budget()) {
      moved = false;
      for (Eigen::Index k = 0; k < best_.x.size() && budget(); ++k) {
        for (const double sign : {1.0, -1.0}) {
          VectorXd x = best_.x;
          x[k] = std::clamp(x[k] + sign * opt_.rho_end, lower_[k], upper_[k]);
          if (x[k] == best_.x[k] || !budget()) continue;
          Point trial = evaluate(x);
          if (merit(trial) < merit(best_)) {
            best_ = std::move(trial);
            moved = true;
            break;
          }
        }
      }
    }
  }

  Point evaluate(const VectorXd& x) {
    ++evals_;
    Point p{x, fn_(x)};
    if (m_ && p.v.c.size() != m_) fail(ErrorCode::InvalidArgument, "constraint count changed between evaluations");
    if (!std::isfinite(p.v.f)) fail(ErrorCode::NonFinite, "objective is not finite");
    const double viol = violation(p.v.c);
    least_violation_ = std::min(least_violation_, viol);
    if (viol <= opt_.feasibility_tol && (!best_feasible_ || p.v.f < best_feasible_->v.f)) best_feasible_ = p;
    return p;
  }

  double merit(const Point& p) const { return p.v.f + mu_ * violation(p.v.c); }

  // rho along axis k, flipped or shortened to stay inside the box.
  VectorXd axis_step(Eigen::Index k) const {
    VectorXd s = VectorXd::Zero(best_.x.size());
    const double up = upper_[k] - best_.x[k];
    const double down = best_.x[k] - lower_[k];
    if (up >= rho_)
      s[k] = rho_;
    else if (down >= rho_)
      s[k] = -rho_;
    else
      s[k] = up >= down ? up : -down;
    return s;
  }

  MatrixXd offsets() const {
    const auto n = static_cast<Eigen::Index>(vertices_.size());
    MatrixXd d(best_.x.size(), n);
    for (Eigen::Index i = 0; i < n; ++i) d.col(i) = vertices_[static_cast<std::size_t>(i)].x - best_.x;
    return d;
  }

  Eigen::Index far_vertex() const {
    Eigen::Index worst = -1;
    double dist = 2.0 * rho_;
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      const double di = (vertices_[i].x - best_.x).lpNorm<Eigen::Infinity>();
      if (di > dist) {
        dist = di;
        worst = static_cast<Eigen::Index>(i);
      }
    }
    return worst;
  }

  bool geometry_ok(const MatrixXd& d) const { return far_vertex() < 0 && flatness(d) >= 0.1; }

  // Replaces a far vertex, or else the one whose replacement most improves
  // flatness, with best + rho along the axis that helps most.
  void improve_geometry() {
    MatrixXd d = offsets();
    const Eigen::Index far = far_vertex();
    double best_score = -1.0;
    Eigen::Index best_i = 0;
    VectorXd best_step;
    for (Eigen::Index i = 0; i < d.cols(); ++i) {
      if (far >= 0 && i != far) continue;
      for (Eigen::Index k = 0; k < d.rows(); ++k) {
        const VectorXd s = axis_step(k);
        if (s.norm() == 0.0) continue;
        MatrixXd trial = d;
        trial.col(i) = s;
        const double score = flatness(trial);
        if (score > best_score) {
          best_score = score;
          best_i = i;
          best_step = s;
        }
      }
    }
    if (best_score < 0.0) {
      vertices_.clear();  // box collapsed in every direction; nothing left to model
      return;
    }
    vertices_[static_cast<std::size_t>(best_i)] = evaluate(best_.x + best_step);
  }

  void replace_best_fit(Point p) {
    MatrixXd d = offsets();
    double best_score = -1.0;
    Eigen::Index best_i = 0;
    for (Eigen::Index i = 0; i < d.cols(); ++i) {
      MatrixXd trial = d;
      trial.col(i) = p.x - best_.x;
      // Prefer dropping far vertices, then keep the simplex least flat.
      const double far_bonus =
          (vertices_[static_cast<std::size_t>(i)].x - best_.x).lpNorm<Eigen::Infinity>() > 2.0 * rho_ ? 1.0 : 0.0;
      const double score = flatness(trial) + far_bonus;
      if (score > best_score) {
        best_score = score;
        best_i = i;
      }
    }
    vertices_[static_cast<std::size_t>(best_i)] = std::move(p);
  }

  void replace_if_better(Point p) {
    const MatrixXd d = offsets();
    const double current = flatness(d);
    double best_score = -1.0;
    Eigen::Index best_i = 0;
    for (Eigen::Index i = 0; i < d.cols(); ++i) {
      MatrixXd trial = d;
      trial.col(i) = p.x - best_.x;
      const double score = flatness(trial);
      if (score > best_score) {
        best_score = score;
        best_i = i;
      }
    }
    const bool drop_far =
        (vertices_[static_cast<std::size_t>(best_i)].x - best_.x).lpNorm<Eigen::Infinity>() > 2.0 * rho_;
    if (best_score >= 0.5 * current || drop_far) vertices_[static_cast<std::size_t>(best_i)] = std::move(p);
  }

  void reselect_best() {
    for (auto& v : vertices_)
      if (merit(v) < merit(best_)) std::swap(v, best_);
  }

  bool shrink() {
    if (rho_ <= opt_.rho_end) return false;
    rho_ = rho_ * 0.5 < 1.5 * opt_.rho_end ? opt_.rho_end : rho_ * 0.5;
    return true;
  }

  // Least linearized violation inside the trust region, then least f among
  // the steps that keep that violation.
  VectorXd trust_region_step(const VectorXd& g, const MatrixXd& a, const VectorXd& c0) const {
    const Eigen::Index n = g.size();
    const auto m = a.rows();
    const VectorXd lo = (lower_ - best_.x).cwiseMax(-rho_).cwiseMin(0.0);
    const VectorXd hi = (upper_ - best_.x).cwiseMin(rho_).cwiseMax(0.0);
    double slack = 0.0;
    if (m > 0 && c0.minCoeff() < 0.0) {
      VectorXd obj = VectorXd::Zero(n + 1);
      obj[n] = 1.0;
      MatrixXd a1(m, n + 1);
      a1.leftCols(n) = a;
      a1.col(n).setOnes();
      VectorXd lo1(n + 1), hi1(n + 1);
      lo1 << lo, 0.0;
      hi1 << hi, -c0.minCoeff() + 1.0;
      if (const auto z = solve_lp(obj, a1, -c0, lo1, hi1)) slack = (*z)[n];
      else slack = -c0.minCoeff();
    }
    const VectorXd b = -c0.array() - slack - 1e-12 * (1.0 + c0.array().abs());
    if (const auto z = solve_lp(g, a, b, lo, hi)) return *z;
    return VectorXd::Zero(n);
  }

  const ConstrainedFunction& fn_;
  VectorXd lower_;
  VectorXd upper_;
  SolverOptions opt_;
  double rho_ = 0.0;
  double mu_ = 0.0;
  std::size_t m_ = 0;
  int evals_ = 0;
  double least_violation_ = std::numeric_limits<double>::infinity();
  Point best_;
  std::vector<Point> vertices_;
  std::optional<Point> best_feasible_;
};

}  // namespace

SolverResult minimize_linear_tr(const ConstrainedFunction& fn, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const SolverOptions& options) {
  require(x0.size() >= 1 && x0.size() <= 3, "minimize_linear_tr: supports 1 to 3 variables");
  require(lower.size() == x0.size() && upper.size() == x0.size(), "minimize_linear_tr: bound sizes differ");
  require((lower.array() <= upper.array()).all(), "minimize_linear_tr: lower bound above upper bound");
  require(options.rho_begin >= options.rho_end && options.rho_end > 0, "minimize_linear_tr: bad trust radii");
  require(options.max_evals >= static_cast<int>(x0.size()) + 1, "minimize_linear_tr: evaluation budget too small");
  LinearTrustRegion solver(fn, lower, upper, options);
  return solver.run(x0);
}

void OptimizationProblem::validate() const {
  if (!graph) fail(ErrorCode::UntrainedModule, "optimization problem has no model graph");
  for (const Range* r : {&box.cwp_speed, &box.chwp_speed, &box.ct_speed})
    require(r->lo <= r->hi, "optimization box has lower bound above upper bound");
  for (const Range* r : {&bounds.chfhdr, &bounds.cwfhdr, &bounds.cwshdr})
    require(r->lo <= r->hi, "predicted-quantity bounds are inverted");
  require(box.cwp_speed.contains(start.cwp_speed) && box.chwp_speed.contains(start.chwp_speed) &&
              box.ct_speed.contains(start.ct_speed),
          "optimization start lies outside the box");
  require(load_rt >= 0.0, "load must be >= 0");
}

std::vector<double> quantity_constraints(const OptimizationProblem& p, const PowerBreakdown& b) {
  std::vector<double> c;
  auto add = [&c](double q, const Range& r) {
    const double span = std::max(r.span(), 1e-9);
    c.push_back((q - r.lo) / span);
    c.push_back((r.hi - q) / span);
  };
  if (count_on(p.on.chwp) > 0) add(b.chfhdr, p.bounds.chfhdr);
  if (count_on(p.on.cwp) > 0) add(b.cwfhdr, p.bounds.cwfhdr);
  if (count_on(p.on.ch) > 0) add(b.cwshdr, p.bounds.cwshdr);
  return c;
}

namespace {

ControlVector to_control(const Eigen::VectorXd& x) { return {x[0], x[1], x[2]}; }

PowerBreakdown predict_at(const OptimizationProblem& p, const ControlVector& c) {
  return predict_graph(*p.graph, GraphInput{c, p.weather, p.load_rt, p.chsp, p.on});
}

OptimizationResult result_at(const OptimizationProblem& p, const ControlVector& c, int evals, double tol) {
  const PowerBreakdown b = predict_at(p, c);
  OptimizationResult r;
  r.control = c;
  r.predicted_kw = b.total_kw;
  r.chfhdr = b.chfhdr;
  r.cwfhdr = b.cwfhdr;
  r.cwshdr = b.cwshdr;
  r.evaluations = evals;
  r.feasible = violation(quantity_constraints(p, b)) <= tol;
  return r;
}

}  // namespace

OptimizationResult solve(const OptimizationProblem& problem, const SolverOptions& options) {
  problem.validate();
  Eigen::Vector3d lower(problem.box.cwp_speed.lo, problem.box.chwp_speed.lo, problem.box.ct_speed.lo);
  Eigen::Vector3d upper(problem.box.cwp_speed.hi, problem.box.chwp_speed.hi, problem.box.ct_speed.hi);
  Eigen::Vector3d x0(problem.start.cwp_speed, problem.start.chwp_speed, problem.start.ct_speed);
  const ConstrainedFunction fn = [&problem](const Eigen::VectorXd& x) {
    const PowerBreakdown b = predict_at(problem, to_control(x));
    return Evaluation{b.total_kw, quantity_constraints(problem, b)};
  };
  const SolverResult s = minimize_linear_tr(fn, x0, lower, upper, options);
  return result_at(problem, to_control(s.x), s.evals, options.feasibility_tol);
}

OptimizationResult grid_search(const OptimizationProblem& problem, double step) {
  problem.validate();
  require(step > 0, "grid step must be > 0");
  const double tol = SolverOptions{}.feasibility_tol;
  auto axis = [step](const Range& r) {
    std::vector<double> v;
    const auto n = static_cast<long>(std::floor(r.span() / step + 1e-9));
    for (long i = 0; i <= n; ++i) v.push_back(r.lo + static_cast<double>(i) * step);
    if (v.back() < r.hi - 1e-9) v.push_back(r.hi);
    return v;
  };
  const auto xs = axis(problem.box.cwp_speed), ys = axis(problem.box.chwp_speed), zs = axis(problem.box.ct_speed);
  std::optional<ControlVector> best;
  double best_kw = std::numeric_limits<double>::infinity();
  int evals = 0;
  for (double x : xs)
    for (double y : ys)
      for (double z : zs) {
        const ControlVector c{x, y, z};
        const PowerBreakdown b = predict_at(problem, c);
        ++evals;
        if (b.total_kw < best_kw && violation(quantity_constraints(problem, b)) <= tol) {
          best_kw = b.total_kw;
          best = c;
        }
      }
  if (!best) fail(ErrorCode::NoFeasiblePoint, "no grid point satisfies the constraints");
  return result_at(problem, *best, evals, tol);
}

ControlVector control_step(const ControlVector& current, const ControlVector& target, double max_delta) {
  require(max_delta > 0, "max_delta must be > 0");
  auto move = [max_delta](double from, double to) { return from + std::clamp(to - from, -max_delta, max_delta); };
  return {move(current.cwp_speed, target.cwp_speed), move(current.chwp_speed, target.chwp_speed),
          move(current.ct_speed, target.ct_speed)};
}

void to_json(nlohmann::json& j, const RunLogEntry& e) {
  j = {{"ts", e.ts},
       {"applied", {{"cwp_speed", e.applied.cwp_speed}, {"chwp_speed", e.applied.chwp_speed}, {"ct_speed", e.applied.ct_speed}}},
       {"predicted_kw", e.predicted_kw},
       {"measured_kw", e.measured_kw},
       {"solver_evals", e.solver_evals},
       {"feasible", e.feasible}};
  if (!e.error.empty()) j["error"] = e.error;
}

void from_json(const nlohmann::json& j, RunLogEntry& e) {
  j.at("ts").get_to(e.ts);
  const auto& a = j.at("applied");
  a.at("cwp_speed").get_to(e.applied.cwp_speed);
  a.at("chwp_speed").get_to(e.applied.chwp_speed);
  a.at("ct_speed").get_to(e.applied.ct_speed);
  j.at("predicted_kw").get_to(e.predicted_kw);
  j.at("measured_kw").get_to(e.measured_kw);
  j.at("solver_evals").get_to(e.solver_evals);
  j.at("feasible").get_to(e.feasible);
  e.error = j.value("error", std::string{});
}

void OptimizerSettings::validate() const {
  require(period >= 2 && period <= 3, "optimizer period must be 2 or 3 minutes");
  require(max_delta > 0, "max_delta must be > 0");
}

RealtimeOptimizer::RealtimeOptimizer(std::shared_ptr<const PlantModelGraph> graph, OptimizerSettings settings)
    : graph_(std::move(graph)), settings_(std::move(settings)) {
  if (!graph_) fail(ErrorCode::UntrainedModule, "optimizer needs a model graph");
  settings_.validate();
}

RunLogEntry RealtimeOptimizer::tick(const SensorRecord& latest, const OnOff& on, double chsp) const {
  RunLogEntry e;
  e.ts = latest.ts + 1;
  e.measured_kw = latest.total_kw;
  e.applied = latest.control;
  OptimizationProblem p;
  p.graph = graph_;
  p.weather = latest.weather;
  p.load_rt = latest.load_rt;
  p.chsp = chsp;
  p.on = on;
  p.box = settings_.box;
  p.bounds = graph_->bounds;
  p.start = {p.box.cwp_speed.clamp(latest.control.cwp_speed), p.box.chwp_speed.clamp(latest.control.chwp_speed),
             p.box.ct_speed.clamp(latest.control.ct_speed)};
  try {
    const OptimizationResult r = solve(p, settings_.solver);
    const ControlVector next = control_step(latest.control, r.control, settings_.max_delta);
    e.applied = {p.box.cwp_speed.clamp(next.cwp_speed), p.box.chwp_speed.clamp(next.chwp_speed),
                 p.box.ct_speed.clamp(next.ct_speed)};
    e.solver_evals = r.evaluations;
    e.feasible = r.feasible;
  } catch (const Error& err) {
    e.applied = latest.control;
    e.error = err.what();
  }
  try {
    e.predicted_kw = predict_at(p, e.applied).total_kw;
  } catch (const Error&) {
    e.predicted_kw = std::numeric_limits<double>::quiet_NaN();
  }
  return e;
}

Controller optimizer_controller(std::shared_ptr<const RealtimeOptimizer> optimizer, OperatorSchedule schedule,
                                std::vector<RunLogEntry>* log) {
  auto held = std::make_shared<std::optional<ControlVector>>();
  return [optimizer = std::move(optimizer), schedule = std::move(schedule), log, held](const SensorRecord& rec) {
    const Minute next = rec.ts + 1;
    const DayPlan& plan = schedule.for_minute(next);
    if (!*held) *held = rec.control;
    if (next % optimizer->settings().period == 0) {
      RunLogEntry e = optimizer->tick(rec, plan.on, plan.chsp);
      *held = e.applied;
      if (log) log->push_back(std::move(e));
    }
    Command cmd;
    cmd.control = **held;
    cmd.on = plan.on;
    cmd.chsp = plan.chsp;
    cmd.source = Source::Optimizer;
    return cmd;
  };
}

SimulatedPlant::SimulatedPlant(const Scenario& scenario, Minute start)
    : scenario_(std::make_shared<const Scenario>(scenario)),
      plant_(scenario.plant, plant_seed(scenario, start)),
      state_(initial_state(scenario, start)) {
  step_once();
}

void SimulatedPlant::step_once() {
  const Minute t = state_.minute;
  const DayPlan& plan = scenario_->schedule.for_minute(t);
  state_.on = plan.on;
  state_.chsp = plan.chsp;
  try {
    records_.push_back(plant_.step(state_, weather_at(*scenario_, t), load_at(*scenario_, t)));
  } catch (const Error& e) {
    fail(e.code(), "minute " + std::to_string(t) + ": " + e.what());
  }
  ++state_.minute;
}

std::optional<SensorRecord> SimulatedPlant::latest() {
  if (records_.empty()) return std::nullopt;
  return records_.back();
}

DayPlan SimulatedPlant::plan_for(Minute t) { return scenario_->schedule.for_minute(t); }

void SimulatedPlant::apply(const ControlVector& control, Source source) {
  if (control == state_.control) return;
  state_.control = control;
  sources_.emplace_back(state_.minute, source);
}

bool SimulatedPlant::advance(Minute minutes) {
  for (Minute i = 0; i < minutes; ++i) step_once();
  return true;
}

std::vector<RunLogEntry> realtime_loop(PlantInterface& plant, const RealtimeOptimizer& optimizer,
                                       const std::function<bool(int)>& stop) {
  std::vector<RunLogEntry> log;
  for (int ticks = 0; !stop(ticks); ++ticks) {
    const auto latest = plant.latest();
    if (!latest) {
      if (!plant.advance(1)) break;
      continue;
    }
    const DayPlan plan = plant.plan_for(latest->ts + 1);
    RunLogEntry e = optimizer.tick(*latest, plan.on, plan.chsp);
    plant.apply(e.applied, Source::Optimizer);
    log.push_back(std::move(e));
    if (!plant.advance(optimizer.settings().period)) break;
  }
  return log;
}

void write_run_log(const std::filesystem::path& path, const std::vector<RunLogEntry>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write run log " + path.string());
  for (const auto& e : log) out << nlohmann::json(e).dump() << '\n';
}

std::vector<RunLogEntry> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open run log " + path.string());
  std::vector<RunLogEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<RunLogEntry>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Parse, path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace chillopt
