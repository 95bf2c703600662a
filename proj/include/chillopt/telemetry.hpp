#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "chillopt/types.hpp"

namespace chillopt {

// Append-only, time-ordered record store. When backed by a file, each record
// is written as one JSON line and flushed before append() returns.
class RecordStore {
 public:
  RecordStore() = default;
  // Loads whatever the file already holds, then appends to it.
  explicit RecordStore(const std::filesystem::path& path);

  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  void append(const SensorRecord& record);

  std::size_t size() const;
  std::optional<SensorRecord> latest() const;
  std::vector<SensorRecord> snapshot() const;
  // Records with from <= ts < to.
  std::vector<SensorRecord> range(Minute from, Minute to) const;

 private:
  mutable std::shared_mutex mu_;
  std::vector<SensorRecord> records_;
  std::ofstream out_;
};

std::string to_line(const SensorRecord& r);
// A trailing line without a newline is a write in progress and is skipped.
std::vector<SensorRecord> read_telemetry(const std::filesystem::path& path);
void write_telemetry(const std::filesystem::path& path, std::span<const SensorRecord> records);

struct Fold {
  Minute first_day = 0;  // simulated-clock day numbers, inclusive
  Minute last_day = 0;
  std::size_t begin = 0;  // record indices [begin, end)
  std::size_t end = 0;
};

using FoldSplit = std::vector<Fold>;

// k folds of `days_per_fold` consecutive whole days, chronological, starting
// at the first record's day. Records must be time-ordered.
FoldSplit kfold_by_days(std::span<const SensorRecord> records, std::size_t k, std::size_t days_per_fold);

// Mean absolute percentage error, in percent.
double mape(std::span<const double> actual, std::span<const double> predicted);

struct RansacOptions {
  int degree = 3;
  double inlier_tol = 0.0;
  int iterations = 200;
  std::uint64_t seed = 0;
  // Residuals measured as |y - yhat| / |yhat| instead of in y units.
  bool relative = false;
};

struct RansacResult {
  std::vector<std::uint8_t> inliers;
  std::vector<double> coefficients;  // refit on the consensus set, ascending powers
  std::size_t inlier_count = 0;
};

RansacResult ransac_filter(std::span<const double> xs, std::span<const double> ys, const RansacOptions& opt);

// 3 x robust sigma. The least-median fit among the global least-squares fit
// and 200 random minimal samples picks the likely inliers; sigma is then
// 1.4826 x median |residual| of a least-squares refit on them.
double ransac_default_tolerance(std::span<const double> xs, std::span<const double> ys, int degree,
                                bool relative, std::uint64_t seed = 0);

struct CleaningReport {
  std::size_t input = 0;
  std::size_t dropped_dropout = 0;
  std::size_t dropped_outlier = 0;
};

// Removes sensor dropouts (zero power on a running unit) and gross outliers
// (RANSAC on speed->power per pump/fan, load->power per chiller).
std::vector<SensorRecord> clean_records(std::span<const SensorRecord> records, std::uint64_t seed = 0,
                                        CleaningReport* report = nullptr);

}  // namespace chillopt
