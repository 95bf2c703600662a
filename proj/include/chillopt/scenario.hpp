#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "chillopt/schedule.hpp"
#include "chillopt/simplant.hpp"

namespace chillopt {

// Diurnal weather: the daily swing is scaled by smooth seeded noise, so the
// maximum dry bulb is hit exactly at `peak_minute` and never exceeded.
struct WeatherProfile {
  double db_min = 24.0;
  double db_max = 36.0;
  double rh_min = 50.0;
  double rh_max = 95.0;
  double peak_minute = 840.0;  // 14:00
  double noise = 0.05;         // relative perturbation of the swing
};

// Occupancy-driven cooling load: flat night base, sin^2 daytime hump.
struct LoadProfile {
  double peak_rt = 900.0;
  double night_fraction = 0.55;
  double day_start = 360.0;   // 06:00
  double day_end = 1140.0;    // 19:00
  double variation = 0.03;    // relative, slowly varying
};

struct Scenario {
  std::uint64_t seed = 1;
  int days = 15;
  WeatherProfile weather;
  LoadProfile load;
  PlantConfig plant;
  OperatorSchedule schedule;
  ControlVector initial_control{85.0, 85.0, 30.0};
  nlohmann::json enrichment;  // enrichment plan, null when absent

  Scenario();
  void validate() const;
};

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

// Smooth value noise: standard-normal knots (clipped to +-3) every
// `knot_spacing` minutes, linearly interpolated. Random access in t.
double smooth_noise(std::uint64_t seed, std::uint64_t stream, double t, double knot_spacing);

Weather weather_at(const Scenario& s, Minute t);
double load_at(const Scenario& s, Minute t);

PlantState initial_state(const Scenario& s, Minute start = 0);

// Seed of the plant's sensor-noise stream for a run starting at `start`.
std::uint64_t plant_seed(const Scenario& s, Minute start);

// One record per minute over [start, start + duration). The plant noise stream
// is seeded from (scenario seed, start), so paired runs see identical noise.
std::vector<SensorRecord> simulate(const Scenario& s, const Controller& controller, Minute duration,
                                   Minute start = 0);

// Conventional operation: fixed VSD setpoints with a small load-following trim.
struct FixedVsdSettings {
  ControlVector setpoint{85.0, 85.0, 30.0};
  double trim = 1.0;  // percent speed at the extremes of the load band
};

Controller fixed_vsd_controller(const Scenario& s, FixedVsdSettings settings = {});

// fixed_vsd_controller wrapped with the scenario's operator schedule.
Controller baseline_controller(const Scenario& s, FixedVsdSettings settings = {});

}  // namespace chillopt
