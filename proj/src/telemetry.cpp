#include "chillopt/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "chillopt/error.hpp"
#include "chillopt/polyfit.hpp"

namespace chillopt {

RecordStore::RecordStore(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) records_ = read_telemetry(path);
  out_.open(path, std::ios::app);
  if (!out_) fail(ErrorCode::Io, "cannot open telemetry file " + path.string());
}

void RecordStore::append(const SensorRecord& record) {
  std::unique_lock lock(mu_);
  if (!records_.empty() && record.ts <= records_.back().ts)
    fail(ErrorCode::OutOfOrder, "timestamp " + std::to_string(record.ts) + " after " +
                                    std::to_string(records_.back().ts));
  if (out_.is_open()) {
    out_ << to_line(record) << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::Io, "telemetry write failed");
  }
  records_.push_back(record);
}

std::size_t RecordStore::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::optional<SensorRecord> RecordStore::latest() const {
  std::shared_lock lock(mu_);
  if (records_.empty()) return std::nullopt;
  return records_.back();
}

std::vector<SensorRecord> RecordStore::snapshot() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::vector<SensorRecord> RecordStore::range(Minute from, Minute to) const {
  std::shared_lock lock(mu_);
  auto lo = std::lower_bound(records_.begin(), records_.end(), from,
                             [](const SensorRecord& r, Minute t) { return r.ts < t; });
  auto hi = std::lower_bound(lo, records_.end(), to, [](const SensorRecord& r, Minute t) { return r.ts < t; });
  return {lo, hi};
}

std::string to_line(const SensorRecord& r) { return nlohmann::json(r).dump(); }

std::vector<SensorRecord> read_telemetry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open telemetry file " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<SensorRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    ++line_no;
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SensorRecord>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (out.size() > 1 && out.back().ts <= out[out.size() - 2].ts)
      fail(ErrorCode::OutOfOrder, path.string() + ":" + std::to_string(line_no));
  }
  return out;
}

void write_telemetry(const std::filesystem::path& path, std::span<const SensorRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write telemetry file " + path.string());
  for (const auto& r : records) out << to_line(r) << '\n';
}

FoldSplit kfold_by_days(std::span<const SensorRecord> records, std::size_t k, std::size_t days_per_fold) {
  require(k >= 1 && days_per_fold >= 1, "kfold_by_days: k and days_per_fold must be >= 1");
  if (records.empty()) fail(ErrorCode::InsufficientData, "no records");
  const Minute first_day = records.front().ts / kMinutesPerDay;
  const Minute last_day = records.back().ts / kMinutesPerDay;
  const auto needed = static_cast<Minute>(k * days_per_fold);
  if (last_day - first_day + 1 < needed)
    fail(ErrorCode::InsufficientData, "records span " + std::to_string(last_day - first_day + 1) +
                                          " days, need " + std::to_string(needed));
  FoldSplit split;
  std::size_t idx = 0;
  for (std::size_t f = 0; f < k; ++f) {
    Fold fold;
    fold.first_day = first_day + static_cast<Minute>(f * days_per_fold);
    fold.last_day = fold.first_day + static_cast<Minute>(days_per_fold) - 1;
    while (idx < records.size() && records[idx].ts / kMinutesPerDay < fold.first_day) ++idx;
    fold.begin = idx;
    while (idx < records.size() && records[idx].ts / kMinutesPerDay <= fold.last_day) ++idx;
    fold.end = idx;
    split.push_back(fold);
  }
  return split;
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
  require(actual.size() == predicted.size(), "mape: lengths differ");
  require(!actual.empty(), "mape: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0) fail(ErrorCode::ZeroActual, "mape: actual value " + std::to_string(i) + " is zero");
    acc += std::abs((actual[i] - predicted[i]) / actual[i]);
  }
  return 100.0 * acc / static_cast<double>(actual.size());
}

namespace {

double residual(double y, double yhat, bool relative) {
  const double r = std::abs(y - yhat);
  if (!relative) return r;
  return r / std::max(std::abs(yhat), 1e-12);
}

std::size_t mark_inliers(std::span<const double> xs, std::span<const double> ys, std::span<const double> coef,
                         const RansacOptions& opt, std::vector<std::uint8_t>& mask) {
  std::size_t count = 0;
  mask.assign(xs.size(), 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (residual(ys[i], eval_poly(coef, xs[i]), opt.relative) <= opt.inlier_tol) {
      mask[i] = 1;
      ++count;
    }
  }
  return count;
}

// Least squares in the residual sense RANSAC is using.
std::vector<double> refit(std::span<const double> xs, std::span<const double> ys, int degree, bool relative) {
  if (!relative) return least_squares_poly(xs, ys, degree);
  std::vector<double> w(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) w[i] = 1.0 / std::max(std::abs(ys[i]), 1e-12);
  return least_squares_poly(xs, ys, degree, w);
}

std::pair<std::vector<double>, std::vector<double>> select(std::span<const double> xs, std::span<const double> ys,
                                                           const std::vector<std::uint8_t>& mask) {
  std::vector<double> sx, sy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (mask[i]) {
      sx.push_back(xs[i]);
      sy.push_back(ys[i]);
    }
  }
  return {sx, sy};
}

}  // namespace

RansacResult ransac_filter(std::span<const double> xs, std::span<const double> ys, const RansacOptions& opt) {
  require(xs.size() == ys.size(), "ransac: xs and ys differ in length");
  require(opt.degree >= 0 && opt.iterations >= 1, "ransac: bad options");
  const auto minimal = static_cast<std::size_t>(opt.degree + 1);
  require(xs.size() > minimal, "ransac: need more than degree + 1 points");
  require(opt.inlier_tol > 0.0, "ransac: inlier tolerance must be > 0");

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> idx(xs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  std::vector<double> sx(minimal), sy(minimal);
  std::vector<std::uint8_t> mask, best_mask;
  std::size_t best = 0;
  for (int it = 0; it < opt.iterations; ++it) {
    // Partial Fisher-Yates draws a minimal sample without replacement.
    for (std::size_t j = 0; j < minimal; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
      std::swap(idx[j], idx[pick(rng)]);
      sx[j] = xs[idx[j]];
      sy[j] = ys[idx[j]];
    }
    std::vector<double> coef;
    try {
      coef = least_squares_poly(sx, sy, opt.degree);
    } catch (const Error&) {
      continue;  // repeated x in the sample
    }
    const std::size_t count = mark_inliers(xs, ys, coef, opt, mask);
    if (count > best) {
      best = count;
      best_mask = mask;
    }
  }
  if (2 * best < xs.size())
    fail(ErrorCode::Degenerate, "ransac: no model reached 50% inliers (best " + std::to_string(best) + " of " +
                                    std::to_string(xs.size()) + ")");

  // Refit on the consensus set with a threshold that starts wide and shrinks
  // to the tolerance, then until the set stops changing. Minimal samples come
  // mostly from where the data is dense, so the first consensus model can
  // miss sparse but genuine points elsewhere in the range.
  RansacResult result;
  result.inliers = best_mask;
  result.inlier_count = best;
  const double widen[] = {3.0, 2.0, 1.5};
  for (int round = 0; round < 13; ++round) {
    auto [ix, iy] = select(xs, ys, result.inliers);
    std::vector<double> coef;
    try {
      coef = refit(ix, iy, opt.degree, opt.relative);
    } catch (const Error&) {
      break;
    }
    RansacOptions step = opt;
    if (round < 3) step.inlier_tol *= widen[round];
    std::vector<std::uint8_t> mask;
    const std::size_t count = mark_inliers(xs, ys, coef, step, mask);
    if (count <= minimal) break;
    result.coefficients = std::move(coef);
    const bool same = mask == result.inliers;
    result.inliers = std::move(mask);
    result.inlier_count = count;
    if (same && round >= 3) break;
  }
  if (result.coefficients.empty()) {
    auto [ix, iy] = select(xs, ys, best_mask);
    result.coefficients = refit(ix, iy, opt.degree, opt.relative);
  }
  return result;
}

double ransac_default_tolerance(std::span<const double> xs, std::span<const double> ys, int degree,
                                bool relative, std::uint64_t seed) {
  require(xs.size() == ys.size(), "ransac_default_tolerance: lengths differ");
  const auto minimal = static_cast<std::size_t>(degree + 1);
  require(xs.size() > minimal, "ransac_default_tolerance: need more than degree + 1 points");
  std::vector<double> r(xs.size());
  auto median_residual = [&](std::span<const double> coef) {
    for (std::size_t i = 0; i < xs.size(); ++i) r[i] = residual(ys[i], eval_poly(coef, xs[i]), relative);
    auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
    std::nth_element(r.begin(), mid, r.end());
    return *mid;
  };

  // Least median of squares over minimal samples, seeded with the global fit,
  // so that a minority of gross outliers does not inflate the estimate.
  std::vector<double> best_coef = refit(xs, ys, degree, relative);
  double best = median_residual(best_coef);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(xs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<double> sx(minimal), sy(minimal);
  for (int it = 0; it < 200; ++it) {
    for (std::size_t j = 0; j < minimal; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
      std::swap(idx[j], idx[pick(rng)]);
      sx[j] = xs[idx[j]];
      sy[j] = ys[idx[j]];
    }
    try {
      auto coef = least_squares_poly(sx, sy, degree);
      const double m = median_residual(coef);
      if (m < best) {
        best = m;
        best_coef = std::move(coef);
      }
    } catch (const Error&) {
    }
  }

  // The minimum over samples is biased low: refit on the points within
  // 2.5 preliminary sigmas and take the median residual of that fit.
  const double n = static_cast<double>(xs.size());
  const double s0 = 1.4826 * (1.0 + 5.0 / (n - static_cast<double>(minimal))) * best;
  std::vector<double> ix, iy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (residual(ys[i], eval_poly(best_coef, xs[i]), relative) <= 2.5 * s0) {
      ix.push_back(xs[i]);
      iy.push_back(ys[i]);
    }
  }
  if (ix.size() <= minimal) return 3.0 * s0;
  try {
    const auto coef = refit(ix, iy, degree, relative);
    std::vector<double> ri(ix.size());
    for (std::size_t i = 0; i < ix.size(); ++i) ri[i] = residual(iy[i], eval_poly(coef, ix[i]), relative);
    auto mid = ri.begin() + static_cast<std::ptrdiff_t>(ri.size() / 2);
    std::nth_element(ri.begin(), mid, ri.end());
    return 3.0 * 1.4826 * *mid;
  } catch (const Error&) {
    return 3.0 * s0;
  }
}

namespace {

constexpr double kChillerTolerance = 0.2;

Eigen::ArrayXd relative_residual(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  return (predicted - actual).array().abs() / predicted.array().abs().max(1e-12);
}
constexpr double kMinRelativeTolerance = 0.02;

void filter_series(std::span<const SensorRecord> records, std::vector<std::uint8_t>& keep,
                   double (*x_of)(const SensorRecord&), const std::vector<double> SensorRecord::*readings,
                   const Flags OnOff::*flags, std::uint64_t seed) {
  if (records.empty()) return;
  const std::size_t units = (records.front().*readings).size();
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<double> xs, ys;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (!keep[i] || u >= (r.on.*flags).size() || !(r.on.*flags)[u]) continue;
      xs.push_back(x_of(r));
      ys.push_back((r.*readings)[u]);
      rows.push_back(i);
    }
    if (xs.size() < 20) continue;
    RansacOptions opt;
    opt.relative = true;
    opt.seed = seed + u;
    try {
      opt.inlier_tol = std::max(kMinRelativeTolerance, ransac_default_tolerance(xs, ys, 3, true, seed + u));
      const RansacResult res = ransac_filter(xs, ys, opt);
      for (std::size_t j = 0; j < rows.size(); ++j)
        if (!res.inliers[j]) keep[rows[j]] = 0;
    } catch (const Error&) {
      // Too few distinct operating points to judge; leave the series as is.
    }
  }
}

// Chiller efficiency (RT of load share per kW) regressed on lift, part load
// and header flows, in the spirit of DOE-2 style chiller curves. A fault
// scales power by 2 or more, far outside the fit's relative residuals.
std::vector<double> chiller_features(const SensorRecord& r) {
  const double lift = r.cwshdr - r.chsp;
  const double share = r.load_rt / static_cast<double>(std::max<std::size_t>(count_on(r.on.ch), 1));
  return {1.0,
          lift,
          lift * lift,
          share,
          share * share,
          std::log(std::max(r.cwfhdr, 1e-6)),
          std::log(std::max(r.chfhdr, 1e-6))};
}

double chiller_efficiency(const SensorRecord& r, std::size_t u) {
  return r.load_rt / static_cast<double>(std::max<std::size_t>(count_on(r.on.ch), 1)) / r.chkw[u];
}

void filter_chillers(std::span<const SensorRecord> records, std::vector<std::uint8_t>& keep, std::uint64_t seed) {
  if (records.empty()) return;
  const std::size_t units = records.front().chkw.size();
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (keep[i] && u < r.on.ch.size() && r.on.ch[u] && r.load_rt > 0.0 && r.chkw[u] > 0.0) rows.push_back(i);
    }
    const Eigen::Index p = 7;
    if (rows.size() < 20 * static_cast<std::size_t>(p)) continue;
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = records[rows[static_cast<std::size_t>(i)]];
      const auto f = chiller_features(r);
      for (Eigen::Index c = 0; c < p; ++c) x(i, c) = f[static_cast<std::size_t>(c)];
      y[i] = chiller_efficiency(r, u);
    }
    // Column scaling keeps the minimal-sample solves well conditioned.
    const Eigen::VectorXd scale = x.cwiseAbs().colwise().maxCoeff().transpose().cwiseMax(1e-12);
    x = x * scale.cwiseInverse().asDiagonal();

    std::mt19937_64 rng(seed + u);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::MatrixXd xs(2 * p, p);
    Eigen::VectorXd ys(2 * p);
    Eigen::Index best = -1;
    Eigen::VectorXd best_beta;
    for (int it = 0; it < 200; ++it) {
      // Twice the minimal sample: exact fits on 7 noisy points extrapolate poorly.
      for (Eigen::Index j = 0; j < 2 * p; ++j) {
        const Eigen::Index k = pick(rng);
        xs.row(j) = x.row(k);
        ys[j] = y[k];
      }
      const auto qr = xs.colPivHouseholderQr();
      if (qr.rank() < p) continue;
      const Eigen::VectorXd beta = qr.solve(ys);
      const Eigen::Index count = (relative_residual(x * beta, y) <= kChillerTolerance).count();
      if (count > best) {
        best = count;
        best_beta = beta;
      }
    }
    if (best < n / 2) continue;
    // Refit on the consensus set, then mark.
    Eigen::Array<bool, Eigen::Dynamic, 1> in = relative_residual(x * best_beta, y) <= kChillerTolerance;
    Eigen::MatrixXd xi(in.count(), p);
    Eigen::VectorXd yi(in.count());
    for (Eigen::Index i = 0, k = 0; i < n; ++i)
      if (in[i]) {
        xi.row(k) = x.row(i);
        yi[k++] = y[i];
      }
    const Eigen::VectorXd beta = xi.colPivHouseholderQr().solve(yi);
    const Eigen::ArrayXd res = relative_residual(x * beta, y);
    for (Eigen::Index i = 0; i < n; ++i)
      if (res[i] > kChillerTolerance) keep[rows[static_cast<std::size_t>(i)]] = 0;
  }
}

}  // namespace

std::vector<SensorRecord> clean_records(std::span<const SensorRecord> records, std::uint64_t seed,
                                        CleaningReport* report) {
  std::vector<std::uint8_t> keep(records.size(), 1);
  std::size_t dropouts = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto bad = [](const std::vector<double>& kw, const Flags& on) {
      for (std::size_t u = 0; u < kw.size() && u < on.size(); ++u)
        if (on[u] && !(kw[u] > 0.0 && std::isfinite(kw[u]))) return true;
      return false;
    };
    if (bad(r.chkw, r.on.ch) && r.load_rt > 0.0) keep[i] = 0;
    if (bad(r.ctkw, r.on.ct) || bad(r.cwpkw, r.on.cwp) || bad(r.chwpkw, r.on.chwp)) keep[i] = 0;
    if (!keep[i]) ++dropouts;
  }

  filter_series(records, keep, [](const SensorRecord& r) { return r.control.ct_speed; }, &SensorRecord::ctkw,
                &OnOff::ct, seed + 100);
  filter_series(records, keep, [](const SensorRecord& r) { return r.control.cwp_speed; }, &SensorRecord::cwpkw,
                &OnOff::cwp, seed + 200);
  filter_series(records, keep, [](const SensorRecord& r) { return r.control.chwp_speed; }, &SensorRecord::chwpkw,
                &OnOff::chwp, seed + 300);
  filter_chillers(records, keep, seed + 400);

  std::vector<SensorRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (keep[i]) out.push_back(records[i]);
  if (report) {
    report->input = records.size();
    report->dropped_dropout = dropouts;
    report->dropped_outlier = records.size() - dropouts - out.size();
  }
  return out;
}

}  // namespace chillopt
