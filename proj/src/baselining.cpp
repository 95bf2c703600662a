#include "chillopt/baselining.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "chillopt/error.hpp"

namespace chillopt {

std::vector<double> baseline_features(const SensorRecord& r) { return {r.weather.db, r.weather.rh, r.load_rt}; }

double BaselineModel::estimate(const SensorRecord& r) const {
  const auto f = baseline_features(r);
  return mlp.predict(f);
}

BaselineModel fit_baseline(std::span<const SensorRecord> records, Minute from, Minute to,
                           const MlpOptions& options) {
  require(from < to, "fit_baseline: empty period");
  std::vector<const SensorRecord*> rows;
  std::set<Minute> days;
  for (const auto& r : records) {
    if (r.ts < from || r.ts >= to) continue;
    rows.push_back(&r);
    days.insert(r.ts / kMinutesPerDay);
  }
  if (days.size() < 3)
    fail(ErrorCode::InsufficientData,
         "baseline needs at least 3 days of records, got " + std::to_string(days.size()));

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = baseline_features(*rows[i]);
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < 3; ++k) x(ii, k) = f[static_cast<std::size_t>(k)];
    y(ii) = rows[i]->total_kw;
  }
  BaselineModel m;
  m.mlp = fit_mlp(x, y, kBaselineInputs, "total_kw", options);
  m.from = from;
  m.to = to;
  m.n_records = rows.size();
  return m;
}

BaselineModel fit_baseline(std::span<const SensorRecord> records, const MlpOptions& options) {
  require(!records.empty(), "fit_baseline: no records");
  return fit_baseline(records, records.front().ts, records.back().ts + 1, options);
}

SavingsReport savings_from_estimates(std::span<const SensorRecord> records, std::span<const double> estimated_kw) {
  require(!records.empty(), "savings: no records");
  require(records.size() == estimated_kw.size(), "savings: one estimate per record");
  SavingsReport rep;
  double est_rt = 0.0;  // load summed alongside, for kW/RT
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SensorRecord& r = records[i];
    const Minute day = r.ts / kMinutesPerDay;
    if (rep.days.empty() || rep.days.back().day != day) {
      require(rep.days.empty() || rep.days.back().day < day, "savings: records out of order");
      rep.days.push_back(DaySaving{day});
      est_rt = 0.0;
    }
    DaySaving& d = rep.days.back();
    if (!std::isfinite(estimated_kw[i])) fail(ErrorCode::NonFinite, "non-finite baseline estimate");
    d.estimated_kwh += estimated_kw[i] / 60.0;
    d.measured_kwh += r.total_kw / 60.0;
    est_rt += r.load_rt / 60.0;
    d.estimated_kw_per_rt = est_rt > 0.0 ? d.estimated_kwh / est_rt : 0.0;
    d.measured_kw_per_rt = est_rt > 0.0 ? d.measured_kwh / est_rt : 0.0;
  }
  double sum = 0.0;
  for (DaySaving& d : rep.days) {
    if (d.estimated_kwh == 0.0) fail(ErrorCode::ZeroActual, "zero estimated energy on day " + std::to_string(d.day));
    d.saving_pct = 100.0 * (d.estimated_kwh - d.measured_kwh) / d.estimated_kwh;
    sum += d.saving_pct;
  }
  rep.mean_saving_pct = sum / static_cast<double>(rep.days.size());
  return rep;
}

SavingsReport savings(const BaselineModel& model, std::span<const SensorRecord> records) {
  std::vector<double> est;
  est.reserve(records.size());
  for (const auto& r : records) est.push_back(model.estimate(r));
  return savings_from_estimates(records, est);
}

void to_json(nlohmann::json& j, const BaselineModel& m) {
  j = {{"schema_version", 1}, {"model", m.mlp}, {"from", m.from}, {"to", m.to}, {"n_records", m.n_records}};
}

void from_json(const nlohmann::json& j, BaselineModel& m) {
  if (j.value("schema_version", -1) != 1) fail(ErrorCode::Parse, "unsupported baseline schema_version");
  j.at("model").get_to(m.mlp);
  require(m.mlp.inputs == kBaselineInputs, "baseline model must use inputs db, rh, load_rt");
  j.at("from").get_to(m.from);
  j.at("to").get_to(m.to);
  j.at("n_records").get_to(m.n_records);
}

void to_json(nlohmann::json& j, const DaySaving& d) {
  j = {{"date", d.day},
       {"estimated_kwh", d.estimated_kwh},
       {"measured_kwh", d.measured_kwh},
       {"saving_pct", d.saving_pct},
       {"estimated_kw_per_rt", d.estimated_kw_per_rt},
       {"measured_kw_per_rt", d.measured_kw_per_rt}};
}

void to_json(nlohmann::json& j, const SavingsReport& r) {
  j = {{"days", r.days}, {"mean_saving_pct", r.mean_saving_pct}};
}

void save_baseline(const BaselineModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write baseline " + path.string());
  out << nlohmann::json(m).dump(1) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

BaselineModel load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open baseline " + path.string());
  try {
    return nlohmann::json::parse(in).get<BaselineModel>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace chillopt
