#include "chillopt/simplant.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "chillopt/error.hpp"

namespace chillopt {
namespace {

constexpr double kWaterHeatCapacity = 4.186;  // kJ/(kg K), 1 L ~ 1 kg

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_flags(const Flags& f, std::size_t n, const char* what) {
  if (f.size() != n)
    fail(ErrorCode::InvalidArgument, std::string(what) + " flag count does not match plant");
}

void check_speed(double v, const Range& r, const char* what) {
  if (!(v >= r.lo - 1e-9 && v <= r.hi + 1e-9))
    fail(ErrorCode::InvalidArgument, std::string(what) + " speed outside bounds");
}

}  // namespace

double PlantConfig::design_capacity_rt() const { return sum(chiller_capacity_rt); }

void PlantConfig::validate() const {
  auto positive = [](const std::vector<double>& v, const char* what) {
    if (v.empty()) fail(ErrorCode::InvalidArgument, std::string(what) + ": no units");
    for (double x : v)
      if (!(x > 0.0)) fail(ErrorCode::InvalidArgument, std::string(what) + ": rating must be > 0");
  };
  positive(chiller_capacity_rt, "chiller capacity");
  positive(ct_rated_kw, "tower rating");
  positive(cwp_rated_kw, "condenser pump rating");
  positive(chwp_rated_kw, "chilled pump rating");
  require(cwp_rated_flow > 0 && chwp_rated_flow > 0, "rated flows must be > 0");
  require(noise >= 0.0, "noise must be >= 0");
  require(outlier_rate >= 0.0 && outlier_rate <= 1.0, "outlier_rate must be in [0,1]");
  for (const Range* r : {&cwp_speed, &chwp_speed, &ct_speed}) {
    require(r->lo >= 20.0 && r->hi <= 100.0 && r->lo <= r->hi, "speed bounds must lie in [20,100]");
  }
  require(tower.a_ref > 0 && max_delta_t > 0, "tower reference and max delta-T must be > 0");
}

void to_json(nlohmann::json& j, const PlantConfig& c) {
  j = {
      {"chiller_capacity_rt", c.chiller_capacity_rt},
      {"ct_rated_kw", c.ct_rated_kw},
      {"cwp_rated_kw", c.cwp_rated_kw},
      {"chwp_rated_kw", c.chwp_rated_kw},
      {"cwp_rated_flow", c.cwp_rated_flow},
      {"chwp_rated_flow", c.chwp_rated_flow},
      {"chiller",
       {{"c0", c.chiller.c0},
        {"c1", c.chiller.c1},
        {"c2", c.chiller.c2},
        {"c3", c.chiller.c3},
        {"c4", c.chiller.c4},
        {"plr_opt", c.chiller.plr_opt},
        {"cop_clip", c.chiller.cop_clip}}},
      {"tower",
       {{"a0", c.tower.a0},
        {"a1", c.tower.a1},
        {"a_ref", c.tower.a_ref},
        {"approach_clip", c.tower.approach_clip}}},
      {"noise", c.noise},
      {"outlier_rate", c.outlier_rate},
      {"cwp_speed", c.cwp_speed},
      {"chwp_speed", c.chwp_speed},
      {"ct_speed", c.ct_speed},
      {"max_delta_t", c.max_delta_t},
  };
}

void from_json(const nlohmann::json& j, PlantConfig& c) {
  auto opt = [&j](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  opt("chiller_capacity_rt", c.chiller_capacity_rt);
  opt("ct_rated_kw", c.ct_rated_kw);
  opt("cwp_rated_kw", c.cwp_rated_kw);
  opt("chwp_rated_kw", c.chwp_rated_kw);
  opt("cwp_rated_flow", c.cwp_rated_flow);
  opt("chwp_rated_flow", c.chwp_rated_flow);
  if (j.contains("chiller")) {
    const auto& ch = j.at("chiller");
    auto copt = [&ch](const char* key, auto& out) {
      if (ch.contains(key)) ch.at(key).get_to(out);
    };
    copt("c0", c.chiller.c0);
    copt("c1", c.chiller.c1);
    copt("c2", c.chiller.c2);
    copt("c3", c.chiller.c3);
    copt("c4", c.chiller.c4);
    copt("plr_opt", c.chiller.plr_opt);
    copt("cop_clip", c.chiller.cop_clip);
  }
  if (j.contains("tower")) {
    const auto& t = j.at("tower");
    auto topt = [&t](const char* key, auto& out) {
      if (t.contains(key)) t.at(key).get_to(out);
    };
    topt("a0", c.tower.a0);
    topt("a1", c.tower.a1);
    topt("a_ref", c.tower.a_ref);
    topt("approach_clip", c.tower.approach_clip);
  }
  opt("noise", c.noise);
  opt("outlier_rate", c.outlier_rate);
  opt("cwp_speed", c.cwp_speed);
  opt("chwp_speed", c.chwp_speed);
  opt("ct_speed", c.ct_speed);
  opt("max_delta_t", c.max_delta_t);
}

double wet_bulb(const Weather& w) { return w.db - (100.0 - w.rh) / 5.0; }

PlantPhysics evaluate(const PlantConfig& config, const PlantState& state, const Weather& weather,
                      double load_rt) {
  const OnOff& on = state.on;
  check_flags(on.ch, config.n_ch(), "chiller");
  check_flags(on.ct, config.n_ct(), "tower");
  check_flags(on.cwp, config.n_cwp(), "condenser pump");
  check_flags(on.chwp, config.n_chwp(), "chilled pump");
  check_speed(state.control.cwp_speed, config.cwp_speed, "condenser pump");
  check_speed(state.control.chwp_speed, config.chwp_speed, "chilled pump");
  check_speed(state.control.ct_speed, config.ct_speed, "tower fan");
  require(load_rt >= 0.0, "cooling load must be >= 0");

  const std::size_t n_ch_on = count_on(on.ch);
  const std::size_t n_ct_on = count_on(on.ct);
  const std::size_t n_cwp_on = count_on(on.cwp);
  const std::size_t n_chwp_on = count_on(on.chwp);

  if (load_rt > 0.0) {
    if (n_ch_on == 0) fail(ErrorCode::EquipmentOff, "load > 0 with no chiller running");
    if (n_chwp_on == 0 || n_cwp_on == 0)
      fail(ErrorCode::LoadInfeasible, "load > 0 with no water circulation");
    double capacity = 0.0;
    for (std::size_t i = 0; i < config.n_ch(); ++i)
      if (on.ch[i]) capacity += config.chiller_capacity_rt[i];
    if (load_rt > capacity) fail(ErrorCode::LoadInfeasible, "load exceeds running chiller capacity");
    const double max_flow =
        static_cast<double>(n_chwp_on) * config.chwp_rated_flow * config.chwp_speed.hi / 100.0;
    if (load_rt * kKwPerRt > kWaterHeatCapacity * max_flow * config.max_delta_t)
      fail(ErrorCode::LoadInfeasible, "chilled water flow at max speed cannot carry load");
  }

  PlantPhysics p;
  p.ctkw.assign(config.n_ct(), 0.0);
  p.cwpkw.assign(config.n_cwp(), 0.0);
  p.chwpkw.assign(config.n_chwp(), 0.0);
  p.chkw.assign(config.n_ch(), 0.0);
  p.cop.assign(config.n_ch(), 0.0);

  for (std::size_t i = 0; i < config.n_ct(); ++i)
    if (on.ct[i]) p.ctkw[i] = affinity_power(config.ct_rated_kw[i], state.control.ct_speed);
  for (std::size_t i = 0; i < config.n_cwp(); ++i)
    if (on.cwp[i]) p.cwpkw[i] = affinity_power(config.cwp_rated_kw[i], state.control.cwp_speed);
  for (std::size_t i = 0; i < config.n_chwp(); ++i)
    if (on.chwp[i]) p.chwpkw[i] = affinity_power(config.chwp_rated_kw[i], state.control.chwp_speed);

  // Affinity: flow proportional to speed.
  p.chfhdr = static_cast<double>(n_chwp_on) * config.chwp_rated_flow * state.control.chwp_speed / 100.0;
  p.cwfhdr = static_cast<double>(n_cwp_on) * config.cwp_rated_flow * state.control.cwp_speed / 100.0;
  p.wet_bulb = wet_bulb(weather);

  const ChillerCurve& cc = config.chiller;
  const TowerCurve& tc = config.tower;
  const double share_rt = n_ch_on > 0 ? load_rt / static_cast<double>(n_ch_on) : 0.0;
  const double cw_share = n_ch_on > 0 ? p.cwfhdr / static_cast<double>(n_ch_on) : 0.0;
  const double ch_share = n_ch_on > 0 ? p.chfhdr / static_cast<double>(n_ch_on) : 0.0;
  const double flow_terms = (n_ch_on > 0 && load_rt > 0.0)
                                ? cc.c3 * std::log(cw_share / config.cwp_rated_flow) +
                                      cc.c4 * std::log(ch_share / config.chwp_rated_flow)
                                : 0.0;

  auto approach_for = [&](double q_rej) {
    if (n_ct_on == 0) return tc.approach_clip.hi;
    const double s = state.control.ct_speed / 100.0;
    return tc.approach_clip.clamp(tc.a0 + tc.a1 * q_rej / (static_cast<double>(n_ct_on) * s * tc.a_ref));
  };
  auto chiller_power = [&](double cwshdr) {
    for (std::size_t i = 0; i < config.n_ch(); ++i) {
      if (!on.ch[i]) {
        p.cop[i] = 0.0;
        p.chkw[i] = 0.0;
        continue;
      }
      const double plr = share_rt / config.chiller_capacity_rt[i];
      const double dp = plr - cc.plr_opt;
      const double cop = cc.cop_clip.clamp(cc.c0 - cc.c1 * (cwshdr - state.chsp) - cc.c2 * dp * dp + flow_terms);
      p.cop[i] = cop;
      p.chkw[i] = share_rt * kKwPerRt / cop;
    }
    return sum(p.chkw);
  };

  // Rejected heat and condenser temperature depend on each other; the map is
  // a contraction for any sane tower sizing, so plain iteration converges.
  const double q_load = load_rt * kKwPerRt;
  double q = q_load * 1.3;
  for (int it = 0; it < 200; ++it) {
    p.approach = approach_for(q);
    p.cwshdr = p.wet_bulb + p.approach;
    const double q_next = q_load + chiller_power(p.cwshdr);
    const bool done = std::abs(q_next - q) <= 1e-13 * std::max(1.0, q);
    q = q_next;
    if (done) break;
  }
  p.q_rej_kw = q_load + sum(p.chkw);
  p.total_kw = sum(p.chkw) + sum(p.ctkw) + sum(p.cwpkw) + sum(p.chwpkw);
  return p;
}

Plant::Plant(PlantConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {
  config_.validate();
}

double Plant::noisy(double v) {
  // Always draw, so the random stream does not depend on which units run.
  const double eps = gauss_(rng_);
  return v * (1.0 + config_.noise * eps);
}

SensorRecord Plant::step(const PlantState& state, const Weather& weather, double load_rt) {
  const PlantPhysics p = evaluate(config_, state, weather, load_rt);

  SensorRecord r;
  r.ts = state.minute;
  r.weather = weather;
  r.control = state.control;
  r.on = state.on;
  r.chsp = state.chsp;
  r.load_rt = load_rt;
  r.chfhdr = noisy(p.chfhdr);
  r.cwfhdr = noisy(p.cwfhdr);
  r.cwshdr = noisy(p.cwshdr);
  auto noisy_all = [this](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = noisy(v[i]);
    return out;
  };
  r.chkw = noisy_all(p.chkw);
  r.ctkw = noisy_all(p.ctkw);
  r.cwpkw = noisy_all(p.cwpkw);
  r.chwpkw = noisy_all(p.chwpkw);

  // Gross sensor faults: one power reading scaled far off, or dropped to zero.
  const double u_fault = unit_(rng_);
  const double u_pick = unit_(rng_);
  const double u_kind = unit_(rng_);
  if (u_fault < config_.outlier_rate) {
    std::vector<double*> readings;
    for (auto* v : {&r.chkw, &r.ctkw, &r.cwpkw, &r.chwpkw})
      for (double& x : *v)
        if (x != 0.0) readings.push_back(&x);
    if (!readings.empty()) {
      auto idx = static_cast<std::size_t>(u_pick * static_cast<double>(readings.size()));
      idx = std::min(idx, readings.size() - 1);
      *readings[idx] = u_kind < 0.25 ? 0.0 : *readings[idx] * (2.0 + 8.0 * u_kind);
    }
  }

  r.total_kw = sum(r.chkw) + sum(r.ctkw) + sum(r.cwpkw) + sum(r.chwpkw);
  return r;
}

const char* to_string(Source s) {
  switch (s) {
    case Source::Operator: return "operator";
    case Source::Enrichment: return "enrichment";
    case Source::Optimizer: return "optimizer";
    case Source::Baseline: return "baseline";
  }
  return "unknown";
}

}  // namespace chillopt
