#include "chillopt/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "chillopt/baselining.hpp"
#include "chillopt/enrich.hpp"
#include "chillopt/error.hpp"
#include "chillopt/optimize.hpp"
#include "chillopt/plantd.hpp"
#include "chillopt/scenario.hpp"
#include "chillopt/surrogate.hpp"
#include "chillopt/telemetry.hpp"

namespace chillopt {
namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

Scenario scenario_or_default(const std::string& path) { return path.empty() ? Scenario{} : load_scenario(path); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot write " + path);
  f << text;
  if (!f) fail(ErrorCode::Io, "write failed for " + path);
}

nlohmann::json result_json(const OptimizationResult& r) {
  return {{"control", r.control},     {"predicted_kw", r.predicted_kw}, {"chfhdr", r.chfhdr},
          {"cwfhdr", r.cwfhdr},       {"cwshdr", r.cwshdr},             {"evaluations", r.evaluations},
          {"feasible", r.feasible}};
}

std::vector<SensorRecord> maybe_clean(const std::vector<SensorRecord>& recs, bool clean, std::uint64_t seed,
                                      std::ostream& err, const std::string& what) {
  if (!clean) return recs;
  CleaningReport rep;
  auto out = clean_records(recs, seed, &rep);
  err << what << ": kept " << out.size() << " of " << rep.input << " records (" << rep.dropped_dropout
      << " dropouts, " << rep.dropped_outlier << " outliers)\n";
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chiller plant simulator, model trainer, optimizer and control service", "plantd"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a scenario and write telemetry");
  std::string sim_scenario, sim_out, sim_controller = "scenario", sim_bundle, sim_run_log;
  std::optional<int> sim_days;
  std::optional<std::uint64_t> sim_seed;
  Minute sim_start = 0;
  sim->add_option("--scenario", sim_scenario, "Scenario JSON (default scenario when omitted)")->check(CLI::ExistingFile);
  sim->add_option("--days", sim_days, "Days to simulate (overrides the scenario)")->check(CLI::PositiveNumber);
  sim->add_option("--start", sim_start, "First simulated minute")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", sim_seed, "Scenario seed override");
  sim->add_option("--out", sim_out, "Telemetry JSON-lines output")->required();
  sim->add_option("--controller", sim_controller,
                  "scenario: fixed VSD plus the scenario's enrichment windows; fixed: fixed VSD only; ddo: optimizer")
      ->check(CLI::IsMember({"scenario", "fixed", "ddo"}));
  sim->add_option("--bundle", sim_bundle, "Model bundle for --controller ddo")->check(CLI::ExistingFile);
  sim->add_option("--run-log", sim_run_log, "Optimizer run log for --controller ddo");

  // enrich
  auto* en = app.add_subcommand("enrich", "Add enrichment windows to a scenario");
  std::string en_scenario, en_out, en_plan_out;
  int en_windows = 4;
  Minute en_duration = 30, en_redraw = 1;
  std::uint64_t en_seed = 1;
  en->add_option("--scenario", en_scenario, "Input scenario (default scenario when omitted)")->check(CLI::ExistingFile);
  en->add_option("--out", en_out, "Scenario JSON output")->required();
  en->add_option("--windows", en_windows, "Windows per day")->check(CLI::PositiveNumber);
  en->add_option("--duration", en_duration, "Window length in minutes")->check(CLI::PositiveNumber);
  en->add_option("--redraw", en_redraw, "Minutes between redraws inside a window")->check(CLI::PositiveNumber);
  en->add_option("--seed", en_seed, "Window placement seed");
  en->add_option("--plan-out", en_plan_out, "Also write the expanded window list");

  // train
  auto* tr = app.add_subcommand("train", "Fit the plant model graph and report cross-validated MAPE");
  std::string tr_telemetry, tr_out, tr_report, tr_report_json, tr_scenario;
  std::size_t tr_k = 5, tr_days = 3;
  int tr_epochs = 5000;
  bool tr_no_cv = false, tr_no_clean = false;
  std::uint64_t tr_seed = 0;
  tr->add_option("--telemetry", tr_telemetry, "Telemetry JSON-lines")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Model bundle output")->required();
  tr->add_option("--report", tr_report, "Write the MAPE table here too");
  tr->add_option("--report-json", tr_report_json, "MAPE table as JSON");
  tr->add_option("--scenario", tr_scenario,
                 "Scenario with an enrichment plan; flow and temperature bounds then come from window records")
      ->check(CLI::ExistingFile);
  tr->add_option("--folds", tr_k, "Number of folds")->check(CLI::PositiveNumber);
  tr->add_option("--days-per-fold", tr_days, "Days per fold")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", tr_epochs, "MLP epochs")->check(CLI::PositiveNumber);
  tr->add_option("--seed", tr_seed, "Cleaning seed");
  tr->add_flag("--no-cv", tr_no_cv, "Skip cross-validation");
  tr->add_flag("--no-clean", tr_no_clean, "Train on the raw records");

  // optimize
  auto* op = app.add_subcommand("optimize", "Solve once for the operating point of a telemetry record");
  std::string op_bundle, op_telemetry;
  std::optional<Minute> op_at;
  std::optional<double> op_db, op_rh, op_load, op_chsp;
  op->add_option("--bundle", op_bundle, "Model bundle")->required()->check(CLI::ExistingFile);
  op->add_option("--telemetry", op_telemetry, "Telemetry JSON-lines")->required()->check(CLI::ExistingFile);
  op->add_option("--at", op_at, "Record timestamp (latest when omitted)");
  op->add_option("--db", op_db, "Dry bulb override, degC");
  op->add_option("--rh", op_rh, "Relative humidity override, percent");
  op->add_option("--load", op_load, "Cooling load override, RT");
  op->add_option("--chsp", op_chsp, "Chilled water setpoint override, degC");

  // serve
  auto* sv = app.add_subcommand("serve", "Run the control service (PLANTD_CONFIG overrides --config)");
  std::string sv_config = "plantd.json";
  bool sv_exit = false;
  sv->add_option("--config", sv_config, "Service config JSON");
  sv->add_flag("--exit-when-done", sv_exit, "Return once the simulated clock stops");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Fit a baseline on un-optimized telemetry and score another run");
  std::string ev_baseline, ev_optimized, ev_model, ev_model_out, ev_report;
  int ev_epochs = 5000;
  bool ev_no_clean = false;
  ev->add_option("--baseline", ev_baseline, "Un-optimized telemetry")->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Use this baseline model instead of fitting one")->check(CLI::ExistingFile);
  ev->add_option("--optimized", ev_optimized, "Telemetry to score")->required()->check(CLI::ExistingFile);
  ev->add_option("--model-out", ev_model_out, "Save the fitted baseline model");
  ev->add_option("--report", ev_report, "Savings report JSON output");
  ev->add_option("--epochs", ev_epochs, "MLP epochs")->check(CLI::PositiveNumber);
  ev->add_flag("--no-clean", ev_no_clean, "Use the raw records");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "plantd: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return 2;
  }

  try {
    if (*sim) {
      Scenario s = scenario_or_default(sim_scenario);
      if (sim_days) s.days = *sim_days;
      if (sim_seed) s.seed = *sim_seed;
      s.validate();
      const Minute duration = Minute{s.days} * kMinutesPerDay;
      std::vector<RunLogEntry> log;
      Controller c;
      if (sim_controller == "scenario") {
        c = scenario_controller(s);
      } else if (sim_controller == "fixed") {
        c = baseline_controller(s);
      } else {
        if (sim_bundle.empty()) {
          err << "plantd: --controller ddo needs --bundle\n";
          return 2;
        }
        auto graph = std::make_shared<const PlantModelGraph>(load_bundle(sim_bundle));
        auto opt = std::make_shared<const RealtimeOptimizer>(graph, OptimizerSettings{});
        c = optimizer_controller(opt, s.schedule, &log);
      }
      const auto recs = simulate(s, c, duration, sim_start);
      write_telemetry(sim_out, recs);
      if (!sim_run_log.empty()) write_run_log(sim_run_log, log);
      out << "wrote " << recs.size() << " records to " << sim_out << "\n";
      return 0;
    }
    if (*en) {
      Scenario s = scenario_or_default(en_scenario);
      s.enrichment = {{"n_windows", en_windows}, {"duration", en_duration}, {"seed", en_seed}, {"redraw_period", en_redraw}};
      s.validate();
      save_scenario(s, en_out);
      const EnrichmentPlan plan = plan_from_json(s.enrichment, s.plant, s.days);
      if (!en_plan_out.empty()) write_text(en_plan_out, nlohmann::json(plan).dump(2) + "\n");
      out << "scenario " << en_out << ": " << plan.windows.size() << " enrichment windows over " << s.days
          << " days\n";
      return 0;
    }
    if (*tr) {
      const auto raw = read_telemetry(tr_telemetry);
      const auto recs = maybe_clean(raw, !tr_no_clean, tr_seed, err, "cleaning");
      TrainOptions o;
      o.k = tr_k;
      o.days_per_fold = tr_days;
      o.mlp.epochs = tr_epochs;
      o.cross_validate = !tr_no_cv;
      if (!tr_scenario.empty()) {
        const Scenario s = load_scenario(tr_scenario);
        if (!s.enrichment.is_null()) {
          const EnrichmentPlan plan = plan_from_json(s.enrichment, s.plant, s.days);
          o.bounds_filter = [plan](const SensorRecord& r) { return plan.active(r.ts) != nullptr; };
        }
      }
      const TrainResult r = train_graph(recs, o);
      save_bundle(r.graph, tr_out);
      const std::string table = format_report(r.report);
      out << table;
      if (!tr_report.empty()) write_text(tr_report, table);
      if (!tr_report_json.empty()) write_text(tr_report_json, nlohmann::json(r.report).dump(2) + "\n");
      return 0;
    }
    if (*op) {
      const auto recs = read_telemetry(op_telemetry);
      if (recs.empty()) fail(ErrorCode::InsufficientData, "telemetry is empty");
      const SensorRecord* rec = &recs.back();
      if (op_at) {
        rec = nullptr;
        for (const auto& r : recs)
          if (r.ts == *op_at) rec = &r;
        if (!rec) fail(ErrorCode::InvalidArgument, "no record at minute " + std::to_string(*op_at));
      }
      OptimizationProblem p;
      p.graph = std::make_shared<const PlantModelGraph>(load_bundle(op_bundle));
      p.weather = {op_db.value_or(rec->weather.db), op_rh.value_or(rec->weather.rh)};
      p.load_rt = op_load.value_or(rec->load_rt);
      p.chsp = op_chsp.value_or(rec->chsp);
      p.on = rec->on;
      p.bounds = p.graph->bounds;
      p.start = {p.box.cwp_speed.clamp(rec->control.cwp_speed), p.box.chwp_speed.clamp(rec->control.chwp_speed),
                 p.box.ct_speed.clamp(rec->control.ct_speed)};
      out << result_json(solve(p)).dump(2) << "\n";
      return 0;
    }
    if (*sv) {
      const auto path = resolve_config_path(sv_config);
      Service service(load_service_config(path));
      g_interrupted = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.start();
      out << "plantd listening on " << service.config().host << ":" << service.port() << "\n" << std::flush;
      bool announced = false;
      while (!g_interrupted) {
        if (!service.running()) {
          if (sv_exit) break;
          if (!announced) {
            const auto st = service.status();
            out << "simulated clock stopped at minute " << st.at("minute").get<Minute>();
            if (!st.at("error").is_null()) out << " (" << st.at("error").get<std::string>() << ")";
            out << "; API still up\n" << std::flush;
            announced = true;
          }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      }
      service.stop();
      return 0;
    }
    if (*ev) {
      BaselineModel model;
      if (!ev_model.empty()) {
        model = load_baseline(ev_model);
      } else {
        if (ev_baseline.empty()) {
          err << "plantd: evaluate needs --baseline or --model\n";
          return 2;
        }
        const auto base = maybe_clean(read_telemetry(ev_baseline), !ev_no_clean, 0, err, "baseline");
        MlpOptions o;
        o.epochs = ev_epochs;
        model = fit_baseline(base, o);
      }
      if (!ev_model_out.empty()) save_baseline(model, ev_model_out);
      const auto opt = maybe_clean(read_telemetry(ev_optimized), !ev_no_clean, 0, err, "optimized");
      const SavingsReport rep = savings(model, opt);
      const std::string text = nlohmann::json(rep).dump(2) + "\n";
      if (!ev_report.empty()) write_text(ev_report, text);
      out << text;
      out << "mean saving: " << std::fixed << std::setprecision(2) << rep.mean_saving_pct << "%\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "plantd: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "plantd: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace chillopt
