#include <doctest.h>

#include <cmath>
#include <numeric>

#include "chillopt/error.hpp"
#include "chillopt/scenario.hpp"
#include "chillopt/simplant.hpp"

using namespace chillopt;

namespace {

PlantConfig quiet_config() {
  PlantConfig c;
  c.noise = 0.0;
  c.outlier_rate = 0.0;
  return c;
}

PlantState two_of_three(ControlVector control = {70, 70, 60}) {
  PlantState st;
  st.on = {{1, 1, 0}, {1, 1, 0}, {1, 1, 0}, {1, 1, 0}};
  st.control = control;
  st.chsp = 7.0;
  return st;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("weather peaks at the scenario maximum and repeats daily without noise") {
  Scenario s;
  for (Minute day = 0; day < 5; ++day) {
    const Weather w = weather_at(s, 840 + day * kMinutesPerDay);
    CHECK(w.db == doctest::Approx(s.weather.db_max).epsilon(1e-12));
    CHECK(w.rh == doctest::Approx(s.weather.rh_min).epsilon(1e-12));
  }
  for (Minute t = 0; t < 3 * kMinutesPerDay; t += 7) {
    const Weather w = weather_at(s, t);
    CHECK(w.db >= s.weather.db_min);
    CHECK(w.db <= s.weather.db_max);
    CHECK(w.rh >= 0.0);
    CHECK(w.rh <= 100.0);
  }

  s.weather.noise = 0.0;
  for (Minute t : {0, 13, 500, 1111}) CHECK(weather_at(s, t) == weather_at(s, t + kMinutesPerDay));
}

TEST_CASE("weather regression fixture at t=0") {
  const Weather w = weather_at(Scenario{}, 0);
  CHECK(w.db == doctest::Approx(25.043198576037376).epsilon(1e-12));
  CHECK(w.rh == doctest::Approx(92.556162708580715).epsilon(1e-12));
}

TEST_CASE("load stays positive, bounded and slowly varying") {
  Scenario s;
  const double cap = s.plant.design_capacity_rt();
  double max_step = 0.0;
  double prev = load_at(s, 0);
  for (Minute t = 1; t <= 3 * kMinutesPerDay; ++t) {
    const double l = load_at(s, t);
    CHECK(l > 0.0);
    CHECK(l <= cap);
    max_step = std::max(max_step, std::abs(l - prev));
    prev = l;
  }
  CHECK(max_step <= 0.01 * s.load.peak_rt);

  // 03:00 sits on the night base.
  const double night = load_at(s, 180);
  CHECK(night == doctest::Approx(s.load.peak_rt * s.load.night_fraction).epsilon(3.5 * s.load.variation));
}

TEST_CASE("cube law holds exactly for pumps and fans") {
  const PlantConfig c = quiet_config();
  Plant plant(c, 7);
  PlantState st = two_of_three({50, 60, 70});
  const SensorRecord half = plant.step(st, {30, 70}, 600);
  st.control.cwp_speed = 100;
  const SensorRecord full = plant.step(st, {30, 70}, 600);
  CHECK(half.cwpkw[0] / full.cwpkw[0] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(half.cwpkw[1] / full.cwpkw[1] == doctest::Approx(0.125).epsilon(1e-15));

  for (double s1 : {20.0, 37.5, 64.0, 100.0}) {
    for (double s2 : {20.0, 55.0, 90.0}) {
      PlantState a = two_of_three({s1, s1, s1});
      PlantState b = two_of_three({s2, s2, s2});
      const PlantPhysics pa = evaluate(c, a, {30, 70}, 500);
      const PlantPhysics pb = evaluate(c, b, {30, 70}, 500);
      const double ratio = std::pow(s1 / s2, 3);
      for (std::size_t i = 0; i < 2; ++i) {
        CHECK(pa.ctkw[i] / pb.ctkw[i] == doctest::Approx(ratio).epsilon(1e-14));
        CHECK(pa.cwpkw[i] / pb.cwpkw[i] == doctest::Approx(ratio).epsilon(1e-14));
        CHECK(pa.chwpkw[i] / pb.chwpkw[i] == doctest::Approx(ratio).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("heat balance and additivity hold by construction") {
  const PlantConfig c = quiet_config();
  for (double load : {300.0, 650.0, 950.0}) {
    for (double ct : {20.0, 50.0, 100.0}) {
      const PlantPhysics p = evaluate(c, two_of_three({70, 70, ct}), {33, 60}, load);
      CHECK(p.q_rej_kw == kKwPerRt * load + total(p.chkw));
      CHECK(p.total_kw == doctest::Approx(total(p.chkw) + total(p.ctkw) + total(p.cwpkw) + total(p.chwpkw)));
    }
  }
  Plant plant(PlantConfig{}, 3);
  const SensorRecord r = plant.step(two_of_three(), {30, 70}, 700);
  CHECK(r.total_kw == total(r.chkw) + total(r.ctkw) + total(r.cwpkw) + total(r.chwpkw));
}

TEST_CASE("off equipment contributes no power and no flow") {
  const PlantConfig c = quiet_config();
  Plant plant(c, 1);
  PlantState st = two_of_three();
  st.on = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  const SensorRecord r = plant.step(st, {30, 70}, 0.0);
  CHECK(r.chfhdr == 0.0);
  CHECK(r.cwfhdr == 0.0);
  CHECK(total(r.chwpkw) == 0.0);
  CHECK(r.total_kw == 0.0);

  const SensorRecord r2 = plant.step(two_of_three(), {30, 70}, 500);
  CHECK(r2.chkw[2] == 0.0);
  CHECK(r2.ctkw[2] == 0.0);
  CHECK(r2.cwpkw[2] == 0.0);
  CHECK(r2.chwpkw[2] == 0.0);
}

TEST_CASE("tower fan speed trades fan power against chiller power") {
  const PlantConfig c = quiet_config();
  for (double load : {450.0, 700.0, 950.0}) {
    for (Weather w : {Weather{24, 95}, Weather{30, 70}, Weather{36, 50}}) {
      double prev_cws = 1e9, prev_ch = 1e9, prev_ct = -1;
      for (double s = 20.0; s <= 100.0; s += 1.0) {
        const PlantPhysics p = evaluate(c, two_of_three({70, 70, s}), w, load);
        CHECK(p.cwshdr < prev_cws);
        CHECK(total(p.chkw) < prev_ch);
        CHECK(total(p.ctkw) > prev_ct);
        prev_cws = p.cwshdr;
        prev_ch = total(p.chkw);
        prev_ct = total(p.ctkw);
      }
      // Central differences on the admissible interior.
      const double h = 1e-3;
      for (double s = 21.0; s < 100.0; s += 3.0) {
        const PlantPhysics up = evaluate(c, two_of_three({70, 70, s + h}), w, load);
        const PlantPhysics dn = evaluate(c, two_of_three({70, 70, s - h}), w, load);
        CHECK((total(up.ctkw) - total(dn.ctkw)) / (2 * h) > 0.0);
        CHECK((total(up.chkw) - total(dn.chkw)) / (2 * h) < 0.0);
      }
    }
  }
}

TEST_CASE("step rejects equipment sets that cannot serve the load") {
  const PlantConfig c = quiet_config();
  Plant plant(c, 1);
  PlantState st = two_of_three();
  st.on.ch = {0, 0, 0};
  try {
    (void)plant.step(st, {30, 70}, 100);
    FAIL("expected EquipmentOff");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EquipmentOff);
  }

  st = two_of_three();
  st.on.chwp = {1, 0, 0};  // 80 L/s at full speed carries ~667 RT at 7 K
  try {
    (void)plant.step(st, {30, 70}, 900);
    FAIL("expected LoadInfeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LoadInfeasible);
  }
  CHECK_NOTHROW((void)plant.step(st, {30, 70}, 600));

  st = two_of_three();
  try {
    (void)plant.step(st, {30, 70}, 1200);  // two chillers, 1000 RT
    FAIL("expected LoadInfeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LoadInfeasible);
  }
}

TEST_CASE("simulate produces one deterministic record per minute") {
  Scenario s;
  const auto a = simulate(s, baseline_controller(s), kMinutesPerDay);
  REQUIRE(a.size() == 1440);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].ts == static_cast<Minute>(i));
  const auto b = simulate(s, baseline_controller(s), kMinutesPerDay);
  CHECK(a == b);

  s.seed = 2;
  const auto c = simulate(s, baseline_controller(s), 10);
  CHECK(c[5].total_kw != a[5].total_kw);
}

TEST_CASE("fifteen days at one record per minute") {
  Scenario s;
  const auto recs = simulate(s, baseline_controller(s), 15 * kMinutesPerDay);
  CHECK(recs.size() == 21600);
  // Same order of magnitude as a 12,520-sample two-week corpus.
  CHECK(recs.size() > 12520);
  CHECK(recs.size() < 2 * 12520);
}

TEST_CASE("simulate reports step errors with the offending minute") {
  Scenario s;
  Controller kill_chillers = [](const SensorRecord& rec) {
    Command cmd;
    if (rec.ts == 41) cmd.on = OnOff{{0, 0, 0}, rec.on.ct, rec.on.cwp, rec.on.chwp};
    return cmd;
  };
  try {
    (void)simulate(s, kill_chillers, 100);
    FAIL("expected EquipmentOff");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EquipmentOff);
    CHECK(std::string(e.what()).find("minute 42") != std::string::npos);
  }
  CHECK_THROWS_AS((void)simulate(s, kill_chillers, 0), Error);
}

TEST_CASE("schedule rotation keeps two units per type running") {
  Scenario s;
  REQUIRE(s.schedule.days.size() == 3);
  for (Minute day = 0; day < 6; ++day) {
    const DayPlan& p = s.schedule.for_minute(day * kMinutesPerDay + 5);
    CHECK(count_on(p.on.ch) == 2);
    CHECK(count_on(p.on.ct) == 2);
  }
  CHECK(s.schedule.for_minute(0).on.ch != s.schedule.for_minute(kMinutesPerDay).on.ch);

  OperatorSchedule bad = s.schedule;
  bad.days[1].on.ch = {1, 0, 0};
  CHECK_THROWS_AS(validate_schedule(bad, s.plant, 900), Error);
}

TEST_CASE("scenario json round trip") {
  Scenario s;
  s.seed = 99;
  s.load.peak_rt = 800;
  s.plant.noise = 0.02;
  const nlohmann::json j = s;
  const Scenario back = j.get<Scenario>();
  CHECK(back.seed == 99);
  CHECK(back.load.peak_rt == 800);
  CHECK(back.plant.noise == 0.02);
  CHECK(back.schedule == s.schedule);
  CHECK(nlohmann::json(back) == j);

  const Scenario partial = nlohmann::json::parse(R"({"seed": 5, "days": 2, "plant": {"noise": 0}})").get<Scenario>();
  CHECK(partial.days == 2);
  CHECK(partial.plant.noise == 0.0);
  CHECK(partial.plant.chwp_rated_flow == 80.0);
}
