#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chillopt/surrogate.hpp"
#include "chillopt/types.hpp"

namespace chillopt {

// Counterfactual total power from weather and cooling load only. Control
// speeds are deliberately absent from the inputs.
struct BaselineModel {
  MlpModel mlp;
  Minute from = 0;  // training period, [from, to)
  Minute to = 0;
  std::size_t n_records = 0;

  double estimate(const SensorRecord& r) const;
};

inline const std::vector<std::string> kBaselineInputs{"db", "rh", "load_rt"};

std::vector<double> baseline_features(const SensorRecord& r);

// Fits on the records with from <= ts < to, which must be un-optimized
// operation spanning at least 3 days.
BaselineModel fit_baseline(std::span<const SensorRecord> records, Minute from, Minute to,
                           const MlpOptions& options = {});
// Whole input as the period.
BaselineModel fit_baseline(std::span<const SensorRecord> records, const MlpOptions& options = {});

struct DaySaving {
  Minute day = 0;  // simulated-clock day number; midnight boundaries
  double estimated_kwh = 0.0;
  double measured_kwh = 0.0;
  double saving_pct = 0.0;
  double estimated_kw_per_rt = 0.0;
  double measured_kw_per_rt = 0.0;
};

struct SavingsReport {
  std::vector<DaySaving> days;
  double mean_saving_pct = 0.0;
};

// Percent by which measured energy undercuts the estimate, per day.
SavingsReport savings(const BaselineModel& model, std::span<const SensorRecord> records);

// Same aggregation given per-record estimates; records are one minute each.
SavingsReport savings_from_estimates(std::span<const SensorRecord> records, std::span<const double> estimated_kw);

void to_json(nlohmann::json& j, const BaselineModel& m);
void from_json(const nlohmann::json& j, BaselineModel& m);
void to_json(nlohmann::json& j, const DaySaving& d);
void to_json(nlohmann::json& j, const SavingsReport& r);

void save_baseline(const BaselineModel& m, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

}  // namespace chillopt
