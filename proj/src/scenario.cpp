#include "chillopt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "chillopt/enrich.hpp"
#include "chillopt/error.hpp"

namespace chillopt {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double knot_value(std::uint64_t seed, std::uint64_t stream, std::int64_t k) {
  const std::uint64_t base =
      splitmix64(splitmix64(seed ^ (stream * 0x632be59bd9b4e019ULL)) ^ static_cast<std::uint64_t>(k));
  const double u1 = hash_unit(splitmix64(base));
  const double u2 = hash_unit(splitmix64(base + 1));
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return std::clamp(z, -3.0, 3.0);
}

}  // namespace

Scenario::Scenario() : schedule(rotating_schedule(plant)) {}

void Scenario::validate() const {
  require(days >= 1, "scenario days must be >= 1");
  require(weather.db_min <= weather.db_max, "db_min must not exceed db_max");
  require(weather.rh_min >= 0.0 && weather.rh_max <= 100.0 && weather.rh_min <= weather.rh_max,
          "relative humidity bounds must lie in [0,100]");
  require(weather.noise >= 0.0, "weather noise must be >= 0");
  require(load.peak_rt > 0.0, "peak load must be > 0");
  require(load.night_fraction > 0.0 && load.night_fraction <= 1.0, "night_fraction must be in (0,1]");
  require(load.day_start < load.day_end && load.day_start >= 0 && load.day_end <= 1440,
          "day window must lie inside one day");
  require(load.variation >= 0.0 && load.variation < 0.3, "load variation must be in [0,0.3)");
  plant.validate();
  validate_schedule(schedule, plant, load.peak_rt * (1.0 + 3.0 * load.variation));
  require(plant.cwp_speed.contains(initial_control.cwp_speed) &&
              plant.chwp_speed.contains(initial_control.chwp_speed) &&
              plant.ct_speed.contains(initial_control.ct_speed),
          "initial control outside speed bounds");
  if (!enrichment.is_null()) plan_from_json(enrichment, plant, days);
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = {
      {"seed", s.seed},
      {"days", s.days},
      {"weather",
       {{"db_min", s.weather.db_min},
        {"db_max", s.weather.db_max},
        {"rh_min", s.weather.rh_min},
        {"rh_max", s.weather.rh_max},
        {"peak_minute", s.weather.peak_minute},
        {"noise", s.weather.noise}}},
      {"load",
       {{"peak_rt", s.load.peak_rt},
        {"night_fraction", s.load.night_fraction},
        {"day_start", s.load.day_start},
        {"day_end", s.load.day_end},
        {"variation", s.load.variation}}},
      {"plant", s.plant},
      {"schedule", s.schedule},
      {"initial_control", s.initial_control},
  };
  if (!s.enrichment.is_null()) j["enrichment"] = s.enrichment;
}

void from_json(const nlohmann::json& j, Scenario& s) {
  s = Scenario{};
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
  if (j.contains("days")) j.at("days").get_to(s.days);
  if (j.contains("weather")) {
    const auto& w = j.at("weather");
    s.weather.db_min = w.value("db_min", s.weather.db_min);
    s.weather.db_max = w.value("db_max", s.weather.db_max);
    s.weather.rh_min = w.value("rh_min", s.weather.rh_min);
    s.weather.rh_max = w.value("rh_max", s.weather.rh_max);
    s.weather.peak_minute = w.value("peak_minute", s.weather.peak_minute);
    s.weather.noise = w.value("noise", s.weather.noise);
  }
  if (j.contains("load")) {
    const auto& l = j.at("load");
    s.load.peak_rt = l.value("peak_rt", s.load.peak_rt);
    s.load.night_fraction = l.value("night_fraction", s.load.night_fraction);
    s.load.day_start = l.value("day_start", s.load.day_start);
    s.load.day_end = l.value("day_end", s.load.day_end);
    s.load.variation = l.value("variation", s.load.variation);
  }
  if (j.contains("plant")) {
    from_json(j.at("plant"), s.plant);
    s.schedule = rotating_schedule(s.plant);
  }
  if (j.contains("schedule")) j.at("schedule").get_to(s.schedule);
  if (j.contains("initial_control")) j.at("initial_control").get_to(s.initial_control);
  if (j.contains("enrichment")) s.enrichment = j.at("enrichment");
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open scenario " + path.string());
  Scenario s;
  try {
    s = nlohmann::json::parse(in).get<Scenario>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write scenario " + path.string());
  out << nlohmann::json(s).dump(2) << '\n';
}

double smooth_noise(std::uint64_t seed, std::uint64_t stream, double t, double knot_spacing) {
  const double u = t / knot_spacing;
  const double k0 = std::floor(u);
  const double frac = u - k0;
  const auto k = static_cast<std::int64_t>(k0);
  return (1.0 - frac) * knot_value(seed, stream, k) + frac * knot_value(seed, stream, k + 1);
}

Weather weather_at(const Scenario& s, Minute t) {
  require(t >= 0, "weather_at: t must be >= 0");
  const WeatherProfile& w = s.weather;
  const double phase =
      std::cos(2.0 * std::numbers::pi * (static_cast<double>(t % kMinutesPerDay) - w.peak_minute) / kMinutesPerDay);
  const double swing = 0.5 * (1.0 - phase);  // 0 at the afternoon peak, 1 before dawn
  const double td = static_cast<double>(t);
  const double db_swing = std::clamp(swing * (1.0 + w.noise * smooth_noise(s.seed, 1, td, 60.0)), 0.0, 1.0);
  const double rh_swing = std::clamp(swing * (1.0 + w.noise * smooth_noise(s.seed, 2, td, 60.0)), 0.0, 1.0);
  return Weather{w.db_max - (w.db_max - w.db_min) * db_swing, w.rh_min + (w.rh_max - w.rh_min) * rh_swing};
}

double load_at(const Scenario& s, Minute t) {
  require(t >= 0, "load_at: t must be >= 0");
  const LoadProfile& l = s.load;
  const double m = static_cast<double>(t % kMinutesPerDay);
  double f = l.night_fraction;
  if (m > l.day_start && m < l.day_end) {
    const double x = std::sin(std::numbers::pi * (m - l.day_start) / (l.day_end - l.day_start));
    f += (1.0 - l.night_fraction) * x * x;
  }
  const double n = l.variation * smooth_noise(s.seed, 3, static_cast<double>(t), 60.0);
  return std::clamp(l.peak_rt * f * (1.0 + n), 1e-6, s.plant.design_capacity_rt());
}

PlantState initial_state(const Scenario& s, Minute start) {
  PlantState st;
  const DayPlan& plan = s.schedule.for_minute(start);
  st.on = plan.on;
  st.chsp = plan.chsp;
  st.control = s.initial_control;
  st.minute = start;
  return st;
}

std::uint64_t plant_seed(const Scenario& s, Minute start) {
  return s.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(start);
}

std::vector<SensorRecord> simulate(const Scenario& s, const Controller& controller, Minute duration,
                                   Minute start) {
  require(duration >= 1, "simulate: duration must be >= 1");
  require(start >= 0, "simulate: start must be >= 0");
  Plant plant(s.plant, plant_seed(s, start));
  PlantState state = initial_state(s, start);
  std::vector<SensorRecord> out;
  out.reserve(static_cast<std::size_t>(duration));
  for (Minute t = start; t < start + duration; ++t) {
    state.minute = t;
    try {
      out.push_back(plant.step(state, weather_at(s, t), load_at(s, t)));
    } catch (const Error& e) {
      fail(e.code(), "minute " + std::to_string(t) + ": " + e.what());
    }
    if (!controller) continue;
    const Command cmd = controller(out.back());
    if (cmd.control) state.control = *cmd.control;
    if (cmd.on) state.on = *cmd.on;
    if (cmd.chsp) state.chsp = *cmd.chsp;
  }
  return out;
}

Controller fixed_vsd_controller(const Scenario& s, FixedVsdSettings settings) {
  const double nf = s.load.night_fraction;
  const double peak = s.load.peak_rt;
  const PlantConfig& pc = s.plant;
  return [settings, nf, peak, pc](const SensorRecord& rec) {
    // -1 at the night base load, +1 at peak.
    const double band = nf < 1.0 ? std::clamp((2.0 * rec.load_rt / peak - 1.0 - nf) / (1.0 - nf), -1.0, 1.0) : 0.0;
    const double d = settings.trim * band;
    Command cmd;
    cmd.control = ControlVector{pc.cwp_speed.clamp(settings.setpoint.cwp_speed + d),
                                pc.chwp_speed.clamp(settings.setpoint.chwp_speed + d),
                                pc.ct_speed.clamp(settings.setpoint.ct_speed + d)};
    cmd.source = Source::Baseline;
    return cmd;
  };
}

Controller baseline_controller(const Scenario& s, FixedVsdSettings settings) {
  return scheduled(s.schedule, fixed_vsd_controller(s, settings));
}

}  // namespace chillopt
