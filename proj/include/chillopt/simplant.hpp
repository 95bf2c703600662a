#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "chillopt/types.hpp"

namespace chillopt {

// COP = c0 - c1*(cwshdr - chsp) - c2*(PLR - plr_opt)^2
//       + c3*ln(condenser flow / rated) + c4*ln(evaporator flow / rated)
struct ChillerCurve {
  double c0 = 6.5;
  double c1 = 0.15;  // per degC of lift
  double c2 = 2.0;
  double c3 = 0.3;
  double c4 = 0.3;
  double plr_opt = 0.8;
  Range cop_clip{2.0, 8.0};
};

// approach = a0 + a1 * Q_rej / (n_ct_on * s_ct * a_ref)
struct TowerCurve {
  double a0 = 2.0;      // degC
  double a1 = 1.2;      // degC
  double a_ref = 2050;  // kW of rejected heat per tower at full fan speed
  Range approach_clip{1.5, 12.0};
};

struct PlantConfig {
  std::vector<double> chiller_capacity_rt{500, 500, 500};
  std::vector<double> ct_rated_kw{30, 31, 29};
  std::vector<double> cwp_rated_kw{45, 46, 44};
  std::vector<double> chwp_rated_kw{37, 38, 36};
  double cwp_rated_flow = 100.0;  // L/s per pump at full speed
  double chwp_rated_flow = 80.0;  // L/s per pump at full speed
  ChillerCurve chiller;
  TowerCurve tower;
  double noise = 0.01;          // relative sigma of every sensor reading
  double outlier_rate = 0.001;  // probability per record of one corrupted power reading
  Range cwp_speed{20, 100};
  Range chwp_speed{20, 100};
  Range ct_speed{20, 100};
  double max_delta_t = 7.0;  // chilled-water range the evaporator can carry, degC

  std::size_t n_ch() const { return chiller_capacity_rt.size(); }
  std::size_t n_ct() const { return ct_rated_kw.size(); }
  std::size_t n_cwp() const { return cwp_rated_kw.size(); }
  std::size_t n_chwp() const { return chwp_rated_kw.size(); }
  double design_capacity_rt() const;

  void validate() const;
};

void to_json(nlohmann::json& j, const PlantConfig& c);
// Applies the keys present in j on top of the current values of c.
void from_json(const nlohmann::json& j, PlantConfig& c);

struct PlantState {
  OnOff on;
  ControlVector control;
  double chsp = 7.0;
  Minute minute = 0;
};

// Noise-free plant response, including internals not exposed in telemetry.
struct PlantPhysics {
  double chfhdr = 0.0;
  double cwfhdr = 0.0;
  double wet_bulb = 0.0;
  double approach = 0.0;
  double cwshdr = 0.0;
  double q_rej_kw = 0.0;
  std::vector<double> cop;
  std::vector<double> chkw;
  std::vector<double> ctkw;
  std::vector<double> cwpkw;
  std::vector<double> chwpkw;
  double total_kw = 0.0;
};

double wet_bulb(const Weather& w);

// Pump/fan power under the cube law for a speed in percent.
inline double affinity_power(double rated_kw, double speed_pct) {
  const double s = speed_pct / 100.0;
  return rated_kw * s * s * s;
}

// Throws EquipmentOff / LoadInfeasible when the running set cannot serve load.
PlantPhysics evaluate(const PlantConfig& config, const PlantState& state, const Weather& weather,
                      double load_rt);

// The "real plant": physics plus seeded sensor noise and occasional outliers.
class Plant {
 public:
  Plant(PlantConfig config, std::uint64_t seed);

  const PlantConfig& config() const { return config_; }

  SensorRecord step(const PlantState& state, const Weather& weather, double load_rt);

 private:
  double noisy(double v);

  PlantConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

// Who issued a control change; every applied command carries exactly one.
enum class Source { Operator, Enrichment, Optimizer, Baseline };

const char* to_string(Source s);

struct Command {
  std::optional<ControlVector> control;
  std::optional<OnOff> on;
  std::optional<double> chsp;
  Source source = Source::Baseline;
};

// Called once per simulated minute with the record just produced; the
// returned command takes effect for the next minute.
using Controller = std::function<Command(const SensorRecord&)>;

}  // namespace chillopt
