#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "chillopt/baselining.hpp"
#include "chillopt/enrich.hpp"
#include "chillopt/optimize.hpp"
#include "chillopt/scenario.hpp"
#include "chillopt/telemetry.hpp"

namespace httplib {
class Server;
}

namespace chillopt {

struct ServiceConfig {
  std::filesystem::path scenario;  // default scenario when empty
  std::filesystem::path telemetry;
  std::filesystem::path bundle;    // DDO unavailable when empty
  std::filesystem::path baseline;  // GET /savings unavailable when empty
  std::filesystem::path run_log;
  std::filesystem::path control_log;
  OptimizerSettings optimizer;
  FixedVsdSettings fixed_vsd;  // speeds while DDO is off
  Minute enrichment_duration = 30;
  ControlRanges enrichment_ranges;
  Minute enrichment_redraw = 1;
  std::uint64_t enrichment_seed = 0xe1;
  std::string host = "127.0.0.1";
  int port = 8080;
  // Simulated minutes per wall-clock minute; 0 runs as fast as possible.
  double speed = 60.0;
  bool ddo_enabled = false;
  std::optional<Minute> max_minutes;  // stop the clock after this many minutes

  void validate() const;
};

// Relative paths are taken relative to base_dir.
ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
// PLANTD_CONFIG, when set, wins over `path`.
std::filesystem::path resolve_config_path(const std::filesystem::path& path);
ServiceConfig load_service_config(const std::filesystem::path& path);

struct ControlChange {
  Minute ts = 0;  // first minute it applies to
  Source source = Source::Operator;
  std::string what;  // "speeds", "on" or "chsp"
  nlohmann::json value;
};

void to_json(nlohmann::json& j, const ControlChange& c);

// One simulated plant driven by the operator (schedule, chsp, enrichment
// windows, DDO switch) and the optimizer. All mutations take one lock, so
// control application is linearizable; reads work on copies.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }

  // Simulated minutes; false once the clock has stopped.
  bool advance(Minute minutes = 1);
  Minute now() const;

  std::optional<SensorRecord> latest() const { return store_->latest(); }
  std::vector<SensorRecord> range(Minute from, Minute to) const { return store_->range(from, to); }
  std::vector<SensorRecord> records() const { return store_->snapshot(); }

  void set_schedule(const OperatorSchedule& schedule);
  void set_chsp(double chsp);
  Window open_enrichment_window(Minute duration);
  void set_ddo(bool enabled);

  nlohmann::json status() const;
  SavingsReport savings() const;
  std::vector<RunLogEntry> run_log() const;
  std::vector<ControlChange> control_log() const;

  // Routes of the HTTP API.
  void bind(httplib::Server& server);

  // HTTP listener plus, with run_clock, the clock thread; stop() or the
  // destructor ends both.
  void start(bool run_clock = true);
  void stop();
  // Port actually bound (useful with port 0).
  int port() const { return bound_port_; }
  bool running() const { return running_; }
  // Blocks until the clock stops (max_minutes reached or a plant error).
  void wait();

 private:
  bool step_locked();
  void log_change(ControlChange c);
  void clock_loop();

  ServiceConfig config_;
  Scenario scenario_;
  std::unique_ptr<RecordStore> store_;
  std::shared_ptr<const RealtimeOptimizer> optimizer_;
  std::optional<BaselineModel> baseline_;
  Controller fixed_vsd_;

  mutable std::mutex mu_;
  Plant plant_;
  PlantState state_;
  OperatorSchedule schedule_;
  std::optional<double> chsp_override_;
  EnrichmentPlan enrichment_;
  bool ddo_ = false;
  std::optional<RunLogEntry> last_solve_;
  std::vector<RunLogEntry> run_log_;
  std::vector<ControlChange> control_log_;
  std::ofstream run_log_out_;
  std::ofstream control_log_out_;
  Minute end_ = 0;
  std::string error_;
  bool clock_done_ = false;
  std::condition_variable cv_;

  std::unique_ptr<httplib::Server> server_;
  std::thread clock_thread_;
  std::thread http_thread_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  int bound_port_ = 0;
};

}  // namespace chillopt
