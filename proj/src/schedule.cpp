#include "chillopt/schedule.hpp"

#include <string>

#include "chillopt/error.hpp"

namespace chillopt {

const DayPlan& OperatorSchedule::for_minute(Minute t) const {
  require(!days.empty(), "operator schedule is empty");
  const Minute day = (t >= 0 ? t : 0) / kMinutesPerDay;
  return days[static_cast<std::size_t>(day) % days.size()];
}

OperatorSchedule rotating_schedule(const PlantConfig& config, std::size_t units_on, double chsp) {
  auto rotate = [units_on](std::size_t n, std::size_t day) {
    Flags f(n, 0);
    const std::size_t k = std::min(units_on, n);
    for (std::size_t j = 0; j < k; ++j) f[(day + j) % n] = 1;
    return f;
  };
  std::size_t cycle = std::max({config.n_ch(), config.n_ct(), config.n_cwp(), config.n_chwp()});
  OperatorSchedule s;
  for (std::size_t d = 0; d < cycle; ++d) {
    DayPlan p;
    p.on.ch = rotate(config.n_ch(), d);
    p.on.ct = rotate(config.n_ct(), d);
    p.on.cwp = rotate(config.n_cwp(), d);
    p.on.chwp = rotate(config.n_chwp(), d);
    p.chsp = chsp;
    s.days.push_back(std::move(p));
  }
  return s;
}

void validate_schedule(const OperatorSchedule& schedule, const PlantConfig& config, double peak_rt) {
  require(!schedule.days.empty(), "operator schedule is empty");
  for (std::size_t d = 0; d < schedule.days.size(); ++d) {
    const DayPlan& p = schedule.days[d];
    const std::string where = "schedule day " + std::to_string(d) + ": ";
    require(p.chsp >= 5.0 && p.chsp <= 10.0, where + "chsp must lie in [5,10]");
    PlantState probe;
    probe.on = p.on;
    probe.chsp = p.chsp;
    probe.control = {config.cwp_speed.hi, config.chwp_speed.hi, config.ct_speed.hi};
    try {
      (void)evaluate(config, probe, Weather{30.0, 70.0}, peak_rt);
    } catch (const Error& e) {
      fail(ErrorCode::InvalidArgument, where + e.what());
    }
    require(count_on(p.on.ct) > 0, where + "no cooling tower running");
  }
}

Controller scheduled(OperatorSchedule schedule, Controller inner) {
  return [schedule = std::move(schedule), inner = std::move(inner)](const SensorRecord& rec) {
    Command cmd = inner ? inner(rec) : Command{};
    const DayPlan& plan = schedule.for_minute(rec.ts + 1);
    if (plan.on != rec.on) cmd.on = plan.on;
    if (plan.chsp != rec.chsp) cmd.chsp = plan.chsp;
    return cmd;
  };
}

void to_json(nlohmann::json& j, const DayPlan& d) {
  to_json(j, d.on);
  j["chsp"] = d.chsp;
}

void from_json(const nlohmann::json& j, DayPlan& d) {
  from_json(j, d.on);
  d.chsp = j.value("chsp", 7.0);
}

void to_json(nlohmann::json& j, const OperatorSchedule& s) { j = {{"days", s.days}}; }

void from_json(const nlohmann::json& j, OperatorSchedule& s) { j.at("days").get_to(s.days); }

}  // namespace chillopt
