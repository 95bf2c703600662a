#pragma once

#include <vector>

#include <json.hpp>

#include "chillopt/simplant.hpp"

namespace chillopt {

struct DayPlan {
  OnOff on;
  double chsp = 7.0;
  bool operator==(const DayPlan&) const = default;
};

// Macro-control decided by the operator a day at a time. Day d of the
// simulated clock uses days[d % days.size()].
struct OperatorSchedule {
  std::vector<DayPlan> days;

  const DayPlan& for_minute(Minute t) const;
  bool operator==(const OperatorSchedule&) const = default;
};

// Duty rotation: `units_on` of each equipment type run, shifting by one unit
// per day so every unit accumulates run time.
OperatorSchedule rotating_schedule(const PlantConfig& config, std::size_t units_on = 2,
                                   double chsp = 7.0);

// Every day must leave a running set able to serve `peak_rt`.
void validate_schedule(const OperatorSchedule& schedule, const PlantConfig& config, double peak_rt);

// Applies the schedule's on/off and chsp for the minute the command targets,
// on top of whatever the inner controller decided about speeds.
Controller scheduled(OperatorSchedule schedule, Controller inner);

void to_json(nlohmann::json& j, const DayPlan& d);
void from_json(const nlohmann::json& j, DayPlan& d);
void to_json(nlohmann::json& j, const OperatorSchedule& s);
void from_json(const nlohmann::json& j, OperatorSchedule& s);

}  // namespace chillopt
