#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "chillopt/enrich.hpp"
#include "chillopt/error.hpp"
#include "chillopt/scenario.hpp"

using namespace chillopt;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

// One-sample Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

Scenario enriched_day() {
  Scenario s;
  s.days = 1;
  s.enrichment = {{"n_windows", 3}, {"duration", 30}, {"seed", 4}};
  return s;
}

}  // namespace

TEST_CASE("plan_windows places disjoint windows inside the day") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto plan = plan_windows(1440, 3, 30, seed);
    REQUIRE(plan.windows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(plan.windows[i].duration == 30);
      CHECK(plan.windows[i].start >= 0);
      CHECK(plan.windows[i].end() <= 1440);
      if (i > 0) CHECK(plan.windows[i].start >= plan.windows[i - 1].end());
    }
  }
  CHECK(plan_windows(1440, 0, 30, 1).windows.empty());
  CHECK(code_of([] { plan_windows(1440, 49, 30, 1); }) == ErrorCode::DoesNotFit);
  CHECK(plan_windows(1440, 48, 30, 1).windows.back().end() == 1440);
}

TEST_CASE("window starts spread over the whole day") {
  std::vector<double> firsts;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) firsts.push_back(plan_windows(1440, 1, 30, seed).windows[0].start);
  CHECK(*std::min_element(firsts.begin(), firsts.end()) < 30);
  CHECK(*std::max_element(firsts.begin(), firsts.end()) > 1380);
  CHECK(ks_uniform(firsts, 0, 1411) < 1.628 / std::sqrt(2000.0));
}

TEST_CASE("perturb draws uniformly and independently") {
  ControlRanges r;
  std::mt19937_64 rng(9);
  std::vector<double> a, b, c;
  for (int i = 0; i < 10000; ++i) {
    const auto v = perturb(r, rng);
    a.push_back(v.cwp_speed);
    b.push_back(v.chwp_speed);
    c.push_back(v.ct_speed);
  }
  const double crit = 1.628 / std::sqrt(10000.0);
  for (const auto* xs : {&a, &b, &c}) {
    CHECK(*std::min_element(xs->begin(), xs->end()) < 22);
    CHECK(*std::max_element(xs->begin(), xs->end()) > 98);
    CHECK(ks_uniform(*xs, 20, 100) < crit);
  }
  double cov = 0;
  for (int i = 0; i < 10000; ++i) cov += (a[i] - 60) * (c[i] - 60);
  CHECK(std::abs(cov / 10000 / (80.0 * 80.0 / 12.0)) < 0.05);

  ControlRanges fixed{{50, 50}, {50, 50}, {50, 50}};
  const auto v = perturb(fixed, rng);
  CHECK(v.cwp_speed == 50);
  CHECK(v.chwp_speed == 50);
  CHECK(v.ct_speed == 50);
}

TEST_CASE("empty plan delegates to the base controller") {
  Scenario s;
  s.days = 1;
  const auto base = simulate(s, baseline_controller(s), 300);
  EnrichmentPlan empty;
  const auto wrapped = simulate(s, scheduled(s.schedule, enrichment_controller(empty, fixed_vsd_controller(s), 3)), 300);
  REQUIRE(base.size() == wrapped.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(nlohmann::json(base[i]) == nlohmann::json(wrapped[i]));
}

TEST_CASE("windows perturb controls, boundaries delegate, on/off untouched") {
  Scenario s;
  s.days = 1;
  EnrichmentPlan plan;
  plan.windows = {{100, 30}};
  const auto base = simulate(s, baseline_controller(s), 200);
  const auto enr = simulate(s, scheduled(s.schedule, enrichment_controller(plan, fixed_vsd_controller(s), 3)), 200);
  int differing = 0;
  for (Minute t = 0; t < 200; ++t) {
    const auto& b = base[t];
    const auto& e = enr[t];
    CHECK(b.on == e.on);
    CHECK(b.chsp == e.chsp);
    const bool same = b.control == e.control;
    if (t >= 100 && t < 130) {
      differing += !same;
    } else if (t < 100) {
      CHECK(same);
    }
    CHECK(s.plant.cwp_speed.contains(e.control.cwp_speed));
    CHECK(s.plant.ct_speed.contains(e.control.ct_speed));
  }
  CHECK(differing == 30);
  // First minute past the window is back under the base controller.
  CHECK(enr[130].control == base[130].control);
}

TEST_CASE("controller emits Enrichment as the source inside windows only") {
  Scenario s;
  EnrichmentPlan plan;
  plan.windows = {{10, 5}};
  int calls = 0;
  auto ctl = enrichment_controller(plan, [&](const SensorRecord&) {
    ++calls;
    return Command{ControlVector{60, 60, 60}, std::nullopt, std::nullopt, Source::Baseline};
  }, 1);
  SensorRecord r;
  r.ts = 8;
  CHECK(ctl(r).source == Source::Baseline);
  r.ts = 9;
  CHECK(ctl(r).source == Source::Enrichment);
  r.ts = 13;
  CHECK(ctl(r).source == Source::Enrichment);
  r.ts = 14;
  CHECK(ctl(r).source == Source::Baseline);
  CHECK(calls == 4);
}

TEST_CASE("redraw period holds each draw for its slot") {
  EnrichmentPlan plan;
  plan.windows = {{0, 30}};
  plan.redraw_period = 5;
  const Window& w = plan.windows[0];
  for (Minute t = 0; t < 30; ++t) CHECK(draw_at(plan, w, t, 7) == draw_at(plan, w, t - t % 5, 7));
  CHECK_FALSE(draw_at(plan, w, 0, 7) == draw_at(plan, w, 5, 7));
}

TEST_CASE("one enriched day covers at least 90 percent of every range") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario s = enriched_day();
    s.seed = seed;
    s.enrichment["seed"] = seed;
    const auto recs = simulate(s, scenario_controller(s), kMinutesPerDay);
    auto coverage = [&](auto field, const Range& r) {
      double lo = 1e9, hi = -1e9;
      for (const auto& rec : recs) {
        lo = std::min(lo, rec.control.*field);
        hi = std::max(hi, rec.control.*field);
      }
      return (hi - lo) / r.span();
    };
    CHECK(coverage(&ControlVector::cwp_speed, s.plant.cwp_speed) >= 0.9);
    CHECK(coverage(&ControlVector::chwp_speed, s.plant.chwp_speed) >= 0.9);
    CHECK(coverage(&ControlVector::ct_speed, s.plant.ct_speed) >= 0.9);
  }
}

TEST_CASE("plan json forms") {
  PlantConfig pc;
  const auto gen = plan_from_json({{"n_windows", 2}, {"duration", 20}, {"seed", 1}}, pc, 4);
  CHECK(gen.windows.size() == 8);
  for (std::size_t i = 0; i < gen.windows.size(); ++i) CHECK(gen.windows[i].start / 1440 == static_cast<Minute>(i / 2));
  const auto expl = plan_from_json(nlohmann::json::parse(R"({"windows": [{"start": 500, "duration": 10}, {"start": 20}],
                                                          "ranges": {"ct_speed": [30, 60]}, "redraw_period": 2})"),
                                   pc, 1);
  REQUIRE(expl.windows.size() == 2);
  CHECK(expl.windows[0] == Window{20, 30});
  CHECK(expl.ranges.ct_speed == Range{30, 60});
  CHECK(expl.redraw_period == 2);
  CHECK(code_of([&] { plan_from_json(nlohmann::json::parse(R"({"windows": [{"start": 0}, {"start": 10}]})"), pc, 1); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { plan_from_json(nlohmann::json::parse(R"({"ranges": {"ct_speed": [10, 60]}})"), pc, 1); }) ==
        ErrorCode::InvalidArgument);
  const auto back = plan_from_json(nlohmann::json(expl), pc, 1);
  CHECK(back.windows == expl.windows);
  CHECK(back.ranges == expl.ranges);
}
