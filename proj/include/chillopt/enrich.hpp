#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "chillopt/simplant.hpp"

namespace chillopt {

struct Scenario;

struct Window {
  Minute start = 0;
  Minute duration = 30;

  Minute end() const { return start + duration; }
  bool contains(Minute t) const { return t >= start && t < end(); }
  bool operator==(const Window&) const = default;
};

struct ControlRanges {
  Range cwp_speed{20, 100};
  Range chwp_speed{20, 100};
  Range ct_speed{20, 100};
  bool operator==(const ControlRanges&) const = default;
};

ControlRanges ranges_of(const PlantConfig& config);

struct EnrichmentPlan {
  std::vector<Window> windows;  // absolute simulated minutes, sorted
  ControlRanges ranges;
  Minute redraw_period = 1;

  // Windows sorted, non-overlapping, positive; ranges inside the plant's speed bounds.
  void validate(const PlantConfig& config) const;
  const Window* active(Minute t) const;
};

// n windows of `duration` placed uniformly at random in [0, day_length),
// non-overlapping. Ranges are left at their defaults.
EnrichmentPlan plan_windows(Minute day_length, int n_windows, Minute duration, std::uint64_t seed);

// plan_windows repeated for each of `days` days, each day drawn independently.
EnrichmentPlan daily_plan(const PlantConfig& config, int days, int n_windows, Minute duration,
                          std::uint64_t seed, Minute first_day = 0);

// Independent uniform draw per speed. On/off is not part of the result.
ControlVector perturb(const ControlRanges& ranges, std::mt19937_64& rng);

// The perturbed control in force at minute t inside window w. Draws are keyed
// by (seed, window start, redraw slot), so the result is independent of call order.
ControlVector draw_at(const EnrichmentPlan& plan, const Window& w, Minute t, std::uint64_t seed);

// Inside a window: base's on/off and chsp with perturbed speeds. Outside: base.
Controller enrichment_controller(EnrichmentPlan plan, Controller base, std::uint64_t seed);

// Accepts either {"windows": [{start, duration}], "ranges": {...}, "redraw_period"}
// or the generator form {"n_windows", "duration", "seed", "redraw_period"}, which
// is expanded over every simulated day.
EnrichmentPlan plan_from_json(const nlohmann::json& j, const PlantConfig& config, int days);

void to_json(nlohmann::json& j, const Window& w);
void from_json(const nlohmann::json& j, Window& w);
void to_json(nlohmann::json& j, const ControlRanges& r);
void from_json(const nlohmann::json& j, ControlRanges& r);
void to_json(nlohmann::json& j, const EnrichmentPlan& p);

// The scenario's baseline controller, with enrichment windows when the
// scenario carries a plan.
Controller scenario_controller(const Scenario& s);

}  // namespace chillopt
