#include "chillopt/plantd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <httplib.h>

#include "chillopt/error.hpp"

namespace chillopt {
namespace {

std::filesystem::path resolve(const nlohmann::json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  std::filesystem::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

Minute resume_minute(const RecordStore& store) {
  const auto last = store.latest();
  return last ? last->ts + 1 : 0;
}

std::unique_ptr<RecordStore> open_store(const ServiceConfig& c) {
  c.validate();
  return std::make_unique<RecordStore>(c.telemetry);
}

}  // namespace

void ServiceConfig::validate() const {
  require(!telemetry.empty(), "service config needs a telemetry path");
  const auto dir = telemetry.parent_path();
  require(dir.empty() || std::filesystem::is_directory(dir), "telemetry directory does not exist: " + dir.string());
  for (const auto* p : {&scenario, &bundle, &baseline})
    if (!p->empty() && !std::filesystem::exists(*p)) fail(ErrorCode::Io, "no such file: " + p->string());
  optimizer.validate();
  require(enrichment_duration > 0, "enrichment duration must be > 0");
  require(enrichment_redraw > 0, "enrichment redraw period must be > 0");
  require(speed >= 0.0 && std::isfinite(speed), "speed must be >= 0");
  require(port >= 0 && port <= 65535, "port out of range");
  require(!max_minutes || *max_minutes >= 1, "max_minutes must be >= 1");
  require(!ddo_enabled || !bundle.empty(), "DDO needs a model bundle");
}

ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ServiceConfig c;
  try {
    c.scenario = resolve(j, "scenario", base_dir);
    c.telemetry = resolve(j, "telemetry", base_dir);
    c.bundle = resolve(j, "bundle", base_dir);
    c.baseline = resolve(j, "baseline", base_dir);
    c.run_log = resolve(j, "run_log", base_dir);
    c.control_log = resolve(j, "control_log", base_dir);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.period = o.value("period", c.optimizer.period);
      c.optimizer.max_delta = o.value("max_delta", c.optimizer.max_delta);
      c.optimizer.solver.max_evals = o.value("max_evals", c.optimizer.solver.max_evals);
      if (o.contains("box")) o.at("box").get_to(c.optimizer.box);
    }
    if (j.contains("fixed_vsd")) {
      const auto& f = j.at("fixed_vsd");
      if (f.contains("setpoint")) f.at("setpoint").get_to(c.fixed_vsd.setpoint);
      c.fixed_vsd.trim = f.value("trim", c.fixed_vsd.trim);
    }
    if (j.contains("enrichment")) {
      const auto& e = j.at("enrichment");
      c.enrichment_duration = e.value("duration", c.enrichment_duration);
      c.enrichment_redraw = e.value("redraw_period", c.enrichment_redraw);
      c.enrichment_seed = e.value("seed", c.enrichment_seed);
      if (e.contains("ranges")) e.at("ranges").get_to(c.enrichment_ranges);
    }
    if (j.contains("listen")) {
      const auto listen = j.at("listen").get<std::string>();
      const auto colon = listen.rfind(':');
      require(colon != std::string::npos, "listen must be host:port");
      c.host = listen.substr(0, colon);
      c.port = std::stoi(listen.substr(colon + 1));
    }
    if (j.contains("speed")) {
      const auto& s = j.at("speed");
      if (s.is_string()) {
        require(s.get<std::string>() == "instant", "speed must be a number or \"instant\"");
        c.speed = 0.0;
      } else {
        c.speed = s.get<double>();
      }
    }
    c.ddo_enabled = j.value("ddo_enabled", c.ddo_enabled);
    if (j.contains("max_minutes") && !j.at("max_minutes").is_null()) c.max_minutes = j.at("max_minutes").get<Minute>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("service config: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorCode::Parse, std::string("service config: ") + e.what());
  }
  c.validate();
  return c;
}

std::filesystem::path resolve_config_path(const std::filesystem::path& path) {
  if (const char* env = std::getenv("PLANTD_CONFIG"); env && *env) return env;
  return path;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open service config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return service_config_from_json(j, path.parent_path());
}

void to_json(nlohmann::json& j, const ControlChange& c) {
  j = {{"ts", c.ts}, {"source", to_string(c.source)}, {"what", c.what}, {"value", c.value}};
}

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      scenario_(config_.scenario.empty() ? Scenario{} : load_scenario(config_.scenario)),
      store_(open_store(config_)),
      plant_(scenario_.plant, plant_seed(scenario_, resume_minute(*store_))) {
  if (!config_.bundle.empty())
    optimizer_ = std::make_shared<const RealtimeOptimizer>(
        std::make_shared<const PlantModelGraph>(load_bundle(config_.bundle)), config_.optimizer);
  if (!config_.baseline.empty()) baseline_ = load_baseline(config_.baseline);
  fixed_vsd_ = fixed_vsd_controller(scenario_, config_.fixed_vsd);
  ddo_ = config_.ddo_enabled;
  schedule_ = scenario_.schedule;

  if (!scenario_.enrichment.is_null()) {
    enrichment_ = plan_from_json(scenario_.enrichment, scenario_.plant, scenario_.days);
  } else {
    enrichment_.ranges = config_.enrichment_ranges;
    enrichment_.redraw_period = config_.enrichment_redraw;
  }
  enrichment_.validate(scenario_.plant);

  const Minute start = resume_minute(*store_);
  state_ = initial_state(scenario_, start);
  if (const auto last = store_->latest()) state_.control = last->control;
  end_ = config_.max_minutes ? start + *config_.max_minutes : Minute{scenario_.days} * kMinutesPerDay;

  if (!config_.run_log.empty()) {
    run_log_out_.open(config_.run_log, std::ios::app);
    if (!run_log_out_) fail(ErrorCode::Io, "cannot open run log " + config_.run_log.string());
  }
  if (!config_.control_log.empty()) {
    control_log_out_.open(config_.control_log, std::ios::app);
    if (!control_log_out_) fail(ErrorCode::Io, "cannot open control log " + config_.control_log.string());
  }
  // A fresh service has one record to show.
  if (start == 0 && end_ > 0) {
    std::lock_guard lk(mu_);
    step_locked();
  }
}

Service::~Service() { stop(); }

void Service::log_change(ControlChange c) {
  if (control_log_out_.is_open()) {
    control_log_out_ << nlohmann::json(c).dump() << '\n';
    control_log_out_.flush();
  }
  control_log_.push_back(std::move(c));
}

bool Service::step_locked() {
  const Minute t = state_.minute;
  if (t >= end_ || !error_.empty()) return false;
  const DayPlan& plan = schedule_.for_minute(t);
  const double chsp = chsp_override_.value_or(plan.chsp);
  if (plan.on != state_.on) log_change({t, Source::Operator, "on", plan.on});
  if (chsp != state_.chsp) log_change({t, Source::Operator, "chsp", chsp});
  state_.on = plan.on;
  state_.chsp = chsp;

  SensorRecord rec;
  try {
    rec = plant_.step(state_, weather_at(scenario_, t), load_at(scenario_, t));
    store_->append(rec);
  } catch (const Error& e) {
    error_ = "minute " + std::to_string(t) + ": " + e.what();
    return false;
  }

  const Minute next = t + 1;
  ControlVector control = state_.control;
  Source source = Source::Operator;
  if (const Window* w = enrichment_.active(next)) {
    control = draw_at(enrichment_, *w, next, config_.enrichment_seed);
    source = Source::Enrichment;
  } else if (ddo_) {
    source = Source::Optimizer;
    if (next % config_.optimizer.period == 0) {
      const DayPlan& np = schedule_.for_minute(next);
      RunLogEntry e = optimizer_->tick(rec, np.on, chsp_override_.value_or(np.chsp));
      control = e.applied;
      if (run_log_out_.is_open()) {
        run_log_out_ << nlohmann::json(e).dump() << '\n';
        run_log_out_.flush();
      }
      last_solve_ = e;
      run_log_.push_back(std::move(e));
    }
  } else {
    control = *fixed_vsd_(rec).control;
  }
  if (control != state_.control) {
    log_change({next, source, "speeds", control});
    state_.control = control;
  }
  state_.minute = next;
  return true;
}

bool Service::advance(Minute minutes) {
  std::lock_guard lk(mu_);
  for (Minute i = 0; i < minutes; ++i)
    if (!step_locked()) return false;
  return true;
}

Minute Service::now() const {
  std::lock_guard lk(mu_);
  return state_.minute;
}

void Service::set_schedule(const OperatorSchedule& schedule) {
  require(!schedule.days.empty(), "schedule needs at least one day");
  validate_schedule(schedule, scenario_.plant, scenario_.load.peak_rt * (1.0 + 3.0 * scenario_.load.variation));
  std::lock_guard lk(mu_);
  schedule_ = schedule;
  chsp_override_.reset();
}

void Service::set_chsp(double chsp) {
  require(std::isfinite(chsp) && chsp >= 4.0 && chsp <= 15.0, "chsp must lie in [4, 15] degC");
  std::lock_guard lk(mu_);
  chsp_override_ = chsp;
}

Window Service::open_enrichment_window(Minute duration) {
  require(duration >= 1 && duration <= kMinutesPerDay, "duration_min must lie in [1, 1440]");
  std::lock_guard lk(mu_);
  // Speeds for state_.minute are already decided.
  const Window w{state_.minute + 1, duration};
  for (const Window& o : enrichment_.windows)
    require(o.end() <= w.start || w.end() <= o.start, "window overlaps an enrichment window in force");
  const auto at = std::upper_bound(enrichment_.windows.begin(), enrichment_.windows.end(), w,
                                   [](const Window& a, const Window& b) { return a.start < b.start; });
  enrichment_.windows.insert(at, w);
  return w;
}

void Service::set_ddo(bool enabled) {
  if (enabled && !optimizer_) fail(ErrorCode::UntrainedModule, "no model bundle configured");
  std::lock_guard lk(mu_);
  ddo_ = enabled;
}

nlohmann::json Service::status() const {
  std::lock_guard lk(mu_);
  const Window* w = enrichment_.active(state_.minute);
  nlohmann::json j = {
      {"minute", state_.minute},
      {"ddo_enabled", ddo_},
      {"optimizer_available", optimizer_ != nullptr},
      {"baseline_available", baseline_.has_value()},
      {"last_solve", last_solve_ ? nlohmann::json(*last_solve_) : nlohmann::json(nullptr)},
      {"schedule", schedule_},
      {"chsp", chsp_override_.value_or(schedule_.for_minute(state_.minute).chsp)},
      {"chsp_override", chsp_override_ ? nlohmann::json(*chsp_override_) : nlohmann::json(nullptr)},
      {"control", state_.control},
      {"on", state_.on},
      {"enrichment_window", w ? nlohmann::json(*w) : nlohmann::json(nullptr)},
      {"end_minute", end_},
      {"running", running_.load()},
      {"error", error_.empty() ? nlohmann::json(nullptr) : nlohmann::json(error_)},
  };
  return j;
}

SavingsReport Service::savings() const {
  if (!baseline_) fail(ErrorCode::UntrainedModule, "no baseline model configured");
  return chillopt::savings(*baseline_, store_->snapshot());
}

std::vector<RunLogEntry> Service::run_log() const {
  std::lock_guard lk(mu_);
  return run_log_;
}

std::vector<ControlChange> Service::control_log() const {
  std::lock_guard lk(mu_);
  return control_log_;
}

namespace {

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    const bool client = e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::Parse;
    send_json(res, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}}, client ? 400 : 409);
  } catch (const nlohmann::json::exception& e) {
    send_json(res, {{"error", "Parse"}, {"message", e.what()}}, 400);
  }
}

nlohmann::json body_of(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("request body: ") + e.what());
  }
}

Minute query_minute(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) fail(ErrorCode::InvalidArgument, std::string("missing query parameter ") + key);
  const std::string v = req.get_param_value(key);
  std::size_t used = 0;
  Minute m = 0;
  try {
    m = std::stoll(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) fail(ErrorCode::InvalidArgument, std::string("bad integer for ") + key);
  return m;
}

}  // namespace

void Service::bind(httplib::Server& server) {
  server.Get("/telemetry/latest", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = latest();
      if (!r) {
        send_json(res, {{"error", "NotFound"}, {"message", "no telemetry yet"}}, 404);
        return;
      }
      send_json(res, *r);
    });
  });
  server.Get("/telemetry/range", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Minute from = query_minute(req, "from");
      const Minute to = query_minute(req, "to");
      require(from <= to, "from must not exceed to");
      send_json(res, range(from, to));
    });
  });
  server.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, status()); });
  });
  server.Get("/savings", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, savings()); });
  });
  server.Post("/schedule", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = body_of(req).get<OperatorSchedule>();
      set_schedule(s);
      send_json(res, s);
    });
  });
  server.Post("/setpoint", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const double chsp = body_of(req).at("chsp").get<double>();
      set_chsp(chsp);
      send_json(res, {{"chsp", chsp}});
    });
  });
  server.Post("/enrichment/window", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto j = req.body.empty() ? nlohmann::json::object() : body_of(req);
      send_json(res, open_enrichment_window(j.value("duration_min", config_.enrichment_duration)));
    });
  });
  server.Post("/ddo", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const bool enabled = body_of(req).at("enabled").get<bool>();
      set_ddo(enabled);
      send_json(res, {{"enabled", enabled}});
    });
  });
}

void Service::clock_loop() {
  using clock = std::chrono::steady_clock;
  const auto per_minute = config_.speed > 0.0
                              ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(60.0 / config_.speed))
                              : clock::duration::zero();
  auto due = clock::now();
  std::unique_lock lk(mu_);
  while (!stopping_) {
    if (!step_locked()) break;
    if (per_minute > clock::duration::zero()) {
      due += per_minute;
      cv_.wait_until(lk, due, [this] { return stopping_.load(); });
    } else {
      // Let API calls in between minutes.
      lk.unlock();
      std::this_thread::yield();
      lk.lock();
    }
  }
  clock_done_ = true;
  running_ = false;
  cv_.notify_all();
}

void Service::start(bool run_clock) {
  require(!server_, "service already started");
  server_ = std::make_unique<httplib::Server>();
  bind(*server_);
  if (config_.port == 0) {
    bound_port_ = server_->bind_to_any_port(config_.host);
    if (bound_port_ < 0) fail(ErrorCode::Io, "cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port))
      fail(ErrorCode::Io, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    bound_port_ = config_.port;
  }
  http_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  if (run_clock) {
    running_ = true;
    clock_thread_ = std::thread([this] { clock_loop(); });
  }
}

void Service::stop() {
  stopping_ = true;
  cv_.notify_all();
  if (clock_thread_.joinable()) clock_thread_.join();
  if (server_) server_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  running_ = false;
}

void Service::wait() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [this] { return clock_done_ || stopping_.load(); });
}

}  // namespace chillopt
