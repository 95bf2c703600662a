#include "chillopt/enrich.hpp"

#include <algorithm>
#include <string>

#include "chillopt/error.hpp"
#include "chillopt/scenario.hpp"

namespace chillopt {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

void require_within(const Range& r, const Range& bounds, const char* name) {
  require(r.lo <= r.hi, std::string("enrichment range for ") + name + " is inverted");
  require(r.lo >= bounds.lo && r.hi <= bounds.hi,
          std::string("enrichment range for ") + name + " exceeds the plant's speed bounds");
}

}  // namespace

ControlRanges ranges_of(const PlantConfig& config) {
  return {config.cwp_speed, config.chwp_speed, config.ct_speed};
}

void EnrichmentPlan::validate(const PlantConfig& config) const {
  require(redraw_period >= 1, "enrichment redraw period must be >= 1 minute");
  require_within(ranges.cwp_speed, config.cwp_speed, "cwp_speed");
  require_within(ranges.chwp_speed, config.chwp_speed, "chwp_speed");
  require_within(ranges.ct_speed, config.ct_speed, "ct_speed");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    require(windows[i].duration > 0, "enrichment window duration must be > 0");
    require(windows[i].start >= 0, "enrichment window start must be >= 0");
    if (i > 0)
      require(windows[i].start >= windows[i - 1].end(),
              "enrichment windows overlap at minute " + std::to_string(windows[i].start));
  }
}

const Window* EnrichmentPlan::active(Minute t) const {
  auto it = std::upper_bound(windows.begin(), windows.end(), t,
                             [](Minute v, const Window& w) { return v < w.start; });
  if (it == windows.begin()) return nullptr;
  --it;
  return it->contains(t) ? &*it : nullptr;
}

EnrichmentPlan plan_windows(Minute day_length, int n_windows, Minute duration, std::uint64_t seed) {
  require(n_windows >= 0, "n_windows must be >= 0");
  require(duration > 0 && day_length > 0, "duration and day length must be > 0");
  EnrichmentPlan plan;
  if (n_windows == 0) return plan;
  const Minute slack = day_length - static_cast<Minute>(n_windows) * duration;
  if (slack < 0)
    fail(ErrorCode::DoesNotFit, std::to_string(n_windows) + " windows of " + std::to_string(duration) +
                                    " minutes do not fit in " + std::to_string(day_length));
  // Sorted uniform offsets in the free time, then each window shifted past
  // the ones before it: a uniform draw over all non-overlapping placements.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Minute> pick(0, slack);
  std::vector<Minute> offsets(static_cast<std::size_t>(n_windows));
  for (auto& o : offsets) o = pick(rng);
  std::sort(offsets.begin(), offsets.end());
  for (std::size_t i = 0; i < offsets.size(); ++i)
    plan.windows.push_back({offsets[i] + static_cast<Minute>(i) * duration, duration});
  return plan;
}

EnrichmentPlan daily_plan(const PlantConfig& config, int days, int n_windows, Minute duration,
                          std::uint64_t seed, Minute first_day) {
  require(days >= 0, "days must be >= 0");
  EnrichmentPlan plan;
  plan.ranges = ranges_of(config);
  for (int d = 0; d < days; ++d) {
    const Minute day = first_day + d;
    const auto one = plan_windows(kMinutesPerDay, n_windows, duration, mix(seed, static_cast<std::uint64_t>(day)));
    for (auto w : one.windows) {
      w.start += day * kMinutesPerDay;
      plan.windows.push_back(w);
    }
  }
  return plan;
}

ControlVector perturb(const ControlRanges& ranges, std::mt19937_64& rng) {
  auto draw = [&rng](const Range& r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  ControlVector c;
  c.cwp_speed = draw(ranges.cwp_speed);
  c.chwp_speed = draw(ranges.chwp_speed);
  c.ct_speed = draw(ranges.ct_speed);
  return c;
}

ControlVector draw_at(const EnrichmentPlan& plan, const Window& w, Minute t, std::uint64_t seed) {
  const auto slot = static_cast<std::uint64_t>((t - w.start) / plan.redraw_period);
  std::mt19937_64 rng(mix(mix(seed, static_cast<std::uint64_t>(w.start)), slot));
  return perturb(plan.ranges, rng);
}

Controller enrichment_controller(EnrichmentPlan plan, Controller base, std::uint64_t seed) {
  return [plan = std::move(plan), base = std::move(base), seed](const SensorRecord& rec) {
    Command cmd = base(rec);
    const Minute next = rec.ts + 1;
    if (const Window* w = plan.active(next)) {
      cmd.control = draw_at(plan, *w, next, seed);
      cmd.source = Source::Enrichment;
    }
    return cmd;
  };
}

void to_json(nlohmann::json& j, const Window& w) { j = {{"start", w.start}, {"duration", w.duration}}; }

void from_json(const nlohmann::json& j, Window& w) {
  j.at("start").get_to(w.start);
  w.duration = j.value("duration", Minute{30});
}

void to_json(nlohmann::json& j, const ControlRanges& r) {
  j = {{"cwp_speed", r.cwp_speed}, {"chwp_speed", r.chwp_speed}, {"ct_speed", r.ct_speed}};
}

void from_json(const nlohmann::json& j, ControlRanges& r) {
  if (j.contains("cwp_speed")) j.at("cwp_speed").get_to(r.cwp_speed);
  if (j.contains("chwp_speed")) j.at("chwp_speed").get_to(r.chwp_speed);
  if (j.contains("ct_speed")) j.at("ct_speed").get_to(r.ct_speed);
}

void to_json(nlohmann::json& j, const EnrichmentPlan& p) {
  j = {{"windows", p.windows}, {"ranges", p.ranges}, {"redraw_period", p.redraw_period}};
}

EnrichmentPlan plan_from_json(const nlohmann::json& j, const PlantConfig& config, int days) {
  EnrichmentPlan plan;
  try {
    if (j.contains("windows")) {
      plan.windows = j.at("windows").get<std::vector<Window>>();
      std::sort(plan.windows.begin(), plan.windows.end(),
                [](const Window& a, const Window& b) { return a.start < b.start; });
      plan.ranges = ranges_of(config);
    } else {
      plan = daily_plan(config, days, j.value("n_windows", 3), j.value("duration", Minute{30}),
                        j.value("seed", std::uint64_t{0}));
    }
    if (j.contains("ranges")) j.at("ranges").get_to(plan.ranges);
    plan.redraw_period = j.value("redraw_period", Minute{1});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("enrichment plan: ") + e.what());
  }
  plan.validate(config);
  return plan;
}

Controller scenario_controller(const Scenario& s) {
  if (s.enrichment.is_null()) return baseline_controller(s);
  const EnrichmentPlan plan = plan_from_json(s.enrichment, s.plant, s.days);
  return scheduled(s.schedule, enrichment_controller(plan, fixed_vsd_controller(s), mix(s.seed, 0xe1)));
}

}  // namespace chillopt
