#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace chillopt {

using Minute = std::int64_t;

inline constexpr double kKwPerRt = 3.517;
inline constexpr Minute kMinutesPerDay = 1440;

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  double span() const { return hi - lo; }
  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
  bool operator==(const Range&) const = default;
};

struct Weather {
  double db = 0.0;  // dry bulb, degC
  double rh = 0.0;  // relative humidity, percent
  bool operator==(const Weather&) const = default;
};

// VSD speeds in percent. The decision vector of the optimizer.
struct ControlVector {
  double cwp_speed = 0.0;
  double chwp_speed = 0.0;
  double ct_speed = 0.0;
  bool operator==(const ControlVector&) const = default;
};

using Flags = std::vector<std::uint8_t>;

inline std::size_t count_on(const Flags& f) {
  std::size_t n = 0;
  for (auto v : f) n += v != 0;
  return n;
}

// Macro-control: which units run. Set by the operator, never by the optimizer.
struct OnOff {
  Flags ch;
  Flags ct;
  Flags cwp;
  Flags chwp;

  bool all_off() const {
    return count_on(ch) + count_on(ct) + count_on(cwp) + count_on(chwp) == 0;
  }
  bool operator==(const OnOff&) const = default;
};

struct SensorRecord {
  Minute ts = 0;
  Weather weather;
  ControlVector control;
  OnOff on;
  double chfhdr = 0.0;   // L/s
  double cwfhdr = 0.0;   // L/s
  double cwshdr = 0.0;   // degC
  double chsp = 0.0;     // degC
  double load_rt = 0.0;  // RT
  std::vector<double> chkw;
  std::vector<double> ctkw;
  std::vector<double> cwpkw;
  std::vector<double> chwpkw;
  double total_kw = 0.0;

  bool operator==(const SensorRecord&) const = default;
};

void to_json(nlohmann::json& j, const Range& r);
void from_json(const nlohmann::json& j, Range& r);
void to_json(nlohmann::json& j, const ControlVector& c);
void from_json(const nlohmann::json& j, ControlVector& c);
void to_json(nlohmann::json& j, const OnOff& o);
void from_json(const nlohmann::json& j, OnOff& o);

// Telemetry line schema; keys are fixed.
void to_json(nlohmann::json& j, const SensorRecord& r);
void from_json(const nlohmann::json& j, SensorRecord& r);

}  // namespace chillopt
