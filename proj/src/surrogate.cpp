#include "chillopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "chillopt/error.hpp"
#include "chillopt/polyfit.hpp"

namespace chillopt {

namespace {

constexpr int kPolyDegree = 3;
constexpr std::size_t kMinPolyPoints = 8;
constexpr std::size_t kMinMlpRows = 200;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::uint64_t module_seed(std::uint64_t seed, std::uint64_t module) {
  std::uint64_t x = seed ^ (module * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Re-throws a module error with the module's name in front.
template <class F>
auto named(const std::string& module, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.code(), module + ": " + e.what());
  }
}

}  // namespace

PolyModel fit_poly(std::span<const double> xs, std::span<const double> ys, std::string input, std::string output) {
  require(xs.size() == ys.size(), "fit_poly: xs and ys differ in length");
  require(xs.size() >= kMinPolyPoints, "fit_poly: need at least 8 points, got " + std::to_string(xs.size()));
  PolyModel m;
  m.coefficients = least_squares_poly(xs, ys, kPolyDegree);
  if (!all_finite(m.coefficients)) fail(ErrorCode::NonFinite, "fit_poly: non-finite coefficients");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  m.x_range = {*lo, *hi};
  m.input = std::move(input);
  m.output = std::move(output);
  return m;
}

PolyPrediction predict_poly(const PolyModel& model, double x) {
  return {eval_poly(model.coefficients, x), !model.x_range.contains(x)};
}

std::size_t mlp_param_count(std::size_t n_inputs, int hidden) {
  const auto h = static_cast<std::size_t>(hidden);
  return h * n_inputs + 2 * h + 1;
}

double MlpModel::predict(std::span<const double> x) const {
  require(x.size() == inputs.size(), "mlp " + output + ": expected " + std::to_string(inputs.size()) + " features");
  const std::size_t d = inputs.size();
  const auto h = static_cast<std::size_t>(hidden);
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  double xs[16];
  require(d <= 16, "mlp: too many inputs");
  for (std::size_t i = 0; i < d; ++i) xs[i] = (x[i] - in_mean[i]) / in_scale[i];
  double y = b2;
  for (std::size_t j = 0; j < h; ++j) {
    double z = b1[j];
    for (std::size_t i = 0; i < d; ++i) z += w1[j * d + i] * xs[i];
    y += w2[j] * logistic(z);
  }
  return y * out_scale + out_mean;
}

double mlp_loss(const Eigen::VectorXd& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int hidden,
                Eigen::VectorXd* grad) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index d = x.cols();
  const Eigen::Index h = hidden;
  const auto n = static_cast<double>(x.rows());
  require(params.size() == static_cast<Eigen::Index>(mlp_param_count(static_cast<std::size_t>(d), hidden)),
          "mlp_loss: parameter vector has the wrong size");
  Eigen::Map<const RowMajor> w1(params.data(), h, d);
  const auto b1 = params.segment(h * d, h);
  const auto w2 = params.segment(h * d + h, h);
  const double b2 = params[h * d + 2 * h];

  Eigen::MatrixXd a = (x * w1.transpose()).rowwise() + b1.transpose();
  a = (1.0 + (-a.array()).exp()).inverse().matrix();
  const Eigen::VectorXd r = ((a * w2).array() + b2).matrix() - y;
  const double loss = r.squaredNorm() / n;
  if (grad) {
    grad->resize(params.size());
    const Eigen::VectorXd g = (2.0 / n) * r;
    const Eigen::MatrixXd dz = ((g * w2.transpose()).array() * a.array() * (1.0 - a.array())).matrix();
    Eigen::Map<RowMajor>(grad->data(), h, d) = dz.transpose() * x;
    grad->segment(h * d, h) = dz.colwise().sum().transpose();
    grad->segment(h * d + h, h) = a.transpose() * g;
    (*grad)[h * d + 2 * h] = g.sum();
  }
  return loss;
}

MlpModel fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> inputs,
                 std::string output, const MlpOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  require(static_cast<std::size_t>(d) == inputs.size(), "fit_mlp: feature names do not match columns");
  require(y.size() == n, "fit_mlp: target length differs from row count");
  require(static_cast<std::size_t>(n) >= kMinMlpRows,
          "fit_mlp: need at least 200 rows, got " + std::to_string(n));
  require(opt.hidden >= 1 && opt.epochs >= 1 && opt.learning_rate > 0 && opt.momentum >= 0 && opt.momentum < 1,
          "fit_mlp: bad options");
  require(opt.validation_fraction > 0 && opt.validation_fraction < 0.5, "fit_mlp: validation fraction must be in (0, 0.5)");
  if (!x.allFinite() || !y.allFinite()) fail(ErrorCode::NonFinite, "fit_mlp: non-finite training data");

  MlpModel m;
  m.inputs = std::move(inputs);
  m.output = std::move(output);
  m.hidden = opt.hidden;
  auto scale_of = [](double sd, double mean) { return sd > 1e-12 * (std::abs(mean) + 1.0) ? sd : 1.0; };
  Eigen::MatrixXd xs(n, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double mean = x.col(c).mean();
    const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
    m.in_mean.push_back(mean);
    m.in_scale.push_back(scale_of(sd, mean));
    xs.col(c) = (x.col(c).array() - mean) / m.in_scale.back();
  }
  m.out_mean = y.mean();
  m.out_scale = scale_of(std::sqrt((y.array() - m.out_mean).square().mean()), m.out_mean);
  const Eigen::VectorXd ys = (y.array() - m.out_mean) / m.out_scale;

  std::mt19937_64 rng(opt.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(opt.validation_fraction * n)));
  const Eigen::Index n_train = n - n_val;
  Eigen::MatrixXd xt(n_train, d), xv(n_val, d);
  Eigen::VectorXd yt(n_train), yv(n_val);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    if (i < n_train) {
      xt.row(i) = xs.row(src);
      yt[i] = ys[src];
    } else {
      xv.row(i - n_train) = xs.row(src);
      yv[i - n_train] = ys[src];
    }
  }

  const auto n_params = static_cast<Eigen::Index>(mlp_param_count(static_cast<std::size_t>(d), opt.hidden));
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_params);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index h = opt.hidden;
  for (Eigen::Index i = 0; i < h * d; ++i) p[i] = gauss(rng) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < h; ++i) p[h * d + h + i] = gauss(rng) / std::sqrt(static_cast<double>(h));

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_params);
  Eigen::VectorXd g;
  Eigen::VectorXd best = p;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double val = mlp_loss(p, xv, yv, opt.hidden);
    const double loss = mlp_loss(p, xt, yt, opt.hidden, &g);
    if (!std::isfinite(loss) || !std::isfinite(val) || !g.allFinite())
      fail(ErrorCode::NonFinite, "fit_mlp " + m.output + ": loss diverged at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = p;
      stall = 0;
    } else if (++stall >= opt.patience) {
      break;
    }
    v = opt.momentum * v - opt.learning_rate * g;
    p += v;
  }
  const double last_val = mlp_loss(p, xv, yv, opt.hidden);
  if (std::isfinite(last_val) && last_val < best_val) best = p;
  m.params.assign(best.data(), best.data() + best.size());
  return m;
}

std::vector<double> chfm_features(const ControlVector& c, const OnOff& on) {
  std::vector<double> f{c.chwp_speed};
  for (auto b : on.chwp) f.push_back(b);
  return f;
}

std::vector<double> cwfm_features(const ControlVector& c, const OnOff& on) {
  std::vector<double> f{c.cwp_speed};
  for (auto b : on.cwp) f.push_back(b);
  return f;
}

std::vector<double> cwtm_features(const ControlVector& c, const OnOff& on, const Weather& w) {
  std::vector<double> f{c.ct_speed};
  for (auto b : on.ct) f.push_back(b);
  f.push_back(w.db);
  f.push_back(w.rh);
  return f;
}

std::vector<double> ch_features(double chfhdr, double cwfhdr, double cwshdr, double load_rt, double chsp) {
  return {chfhdr, cwfhdr, cwshdr, load_rt, chsp};
}

namespace {

std::vector<std::string> unit_names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

std::vector<std::string> chfm_names(std::size_t n) {
  auto v = unit_names("on_chwp", n);
  v.insert(v.begin(), "chwp_speed");
  return v;
}

std::vector<std::string> cwfm_names(std::size_t n) {
  auto v = unit_names("on_cwp", n);
  v.insert(v.begin(), "cwp_speed");
  return v;
}

std::vector<std::string> cwtm_names(std::size_t n) {
  auto v = unit_names("on_ct", n);
  v.insert(v.begin(), "ct_speed");
  v.push_back("db");
  v.push_back("rh");
  return v;
}

const std::vector<std::string> kChNames{"chfhdr", "cwfhdr", "cwshdr", "load_rt", "chsp"};

const PolyModel& need(const std::optional<PolyModel>& m, const std::string& name) {
  if (!m) fail(ErrorCode::UntrainedModule, name + " has no trained model");
  return *m;
}

const MlpModel& need(const std::optional<MlpModel>& m, const std::string& name) {
  if (!m) fail(ErrorCode::UntrainedModule, name + " has no trained model");
  return *m;
}

template <class T>
const std::optional<T>& unit(const std::vector<std::optional<T>>& v, std::size_t i) {
  static const std::optional<T> none;
  return i < v.size() ? v[i] : none;
}

bool any_on(const Flags& f) { return count_on(f) > 0; }

}  // namespace

GraphInput graph_input(const SensorRecord& r) { return {r.control, r.weather, r.load_rt, r.chsp, r.on}; }

PowerBreakdown predict_graph(const PlantModelGraph& g, const GraphInput& in) {
  PowerBreakdown p;
  p.chkw.assign(in.on.ch.size(), 0.0);
  p.ctkw.assign(in.on.ct.size(), 0.0);
  p.cwpkw.assign(in.on.cwp.size(), 0.0);
  p.chwpkw.assign(in.on.chwp.size(), 0.0);
  if (in.on.all_off()) return p;

  if (any_on(in.on.chwp)) p.chfhdr = need(g.chfm, "CHFM").predict(chfm_features(in.control, in.on));
  if (any_on(in.on.cwp)) p.cwfhdr = need(g.cwfm, "CWFM").predict(cwfm_features(in.control, in.on));
  if (any_on(in.on.ch)) p.cwshdr = need(g.cwtm, "CWTM").predict(cwtm_features(in.control, in.on, in.weather));

  auto siso = [&](const std::vector<std::optional<PolyModel>>& models, const Flags& on, double speed,
                  const char* prefix, std::vector<double>& out) {
    for (std::size_t i = 0; i < on.size(); ++i) {
      if (!on[i]) continue;
      const auto pred = predict_poly(need(unit(models, i), prefix + std::to_string(i + 1)), speed);
      out[i] = pred.value;
      p.extrapolated = p.extrapolated || pred.extrapolated;
    }
  };
  siso(g.chwp, in.on.chwp, in.control.chwp_speed, "CHWP", p.chwpkw);
  siso(g.cwp, in.on.cwp, in.control.cwp_speed, "CWP", p.cwpkw);
  siso(g.ct, in.on.ct, in.control.ct_speed, "CT", p.ctkw);

  const auto chf = ch_features(p.chfhdr, p.cwfhdr, p.cwshdr, in.load_rt, in.chsp);
  for (std::size_t i = 0; i < in.on.ch.size(); ++i)
    if (in.on.ch[i]) p.chkw[i] = need(unit(g.ch, i), "CH" + std::to_string(i + 1)).predict(chf);

  double total = 0.0;
  for (const auto* v : {&p.chkw, &p.ctkw, &p.cwpkw, &p.chwpkw}) total = std::accumulate(v->begin(), v->end(), total);
  p.total_kw = total;
  return p;
}

namespace {

struct MlpData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

template <class Row>
MlpData gather(std::span<const SensorRecord> records, std::size_t d, Row&& row) {
  std::vector<double> flat;
  std::vector<double> ys;
  for (const auto& r : records) {
    double y;
    std::vector<double> f;
    if (!row(r, f, y)) continue;
    flat.insert(flat.end(), f.begin(), f.end());
    ys.push_back(y);
  }
  MlpData out;
  out.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(d));
  out.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return out;
}

std::optional<PolyModel> fit_unit(std::span<const SensorRecord> records, std::size_t u, const Flags OnOff::*flags,
                                  double ControlVector::*speed, const std::vector<double> SensorRecord::*kw,
                                  const std::string& name, const std::string& speed_name) {
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    if (u < (r.on.*flags).size() && (r.on.*flags)[u]) {
      xs.push_back(r.control.*speed);
      ys.push_back((r.*kw)[u]);
    }
  }
  if (xs.empty()) return std::nullopt;  // never ran
  return named(name, [&] { return fit_poly(xs, ys, speed_name, name); });
}

}  // namespace

PlantModelGraph fit_graph(std::span<const SensorRecord> records, const MlpOptions& mlp) {
  require(!records.empty(), "fit_graph: no records");
  const auto& first = records.front();
  const std::size_t n_ch = first.on.ch.size(), n_ct = first.on.ct.size(), n_cwp = first.on.cwp.size(),
                    n_chwp = first.on.chwp.size();
  PlantModelGraph g;
  for (std::size_t u = 0; u < n_chwp; ++u)
    g.chwp.push_back(fit_unit(records, u, &OnOff::chwp, &ControlVector::chwp_speed, &SensorRecord::chwpkw,
                              "CHWP" + std::to_string(u + 1), "chwp_speed"));
  for (std::size_t u = 0; u < n_cwp; ++u)
    g.cwp.push_back(fit_unit(records, u, &OnOff::cwp, &ControlVector::cwp_speed, &SensorRecord::cwpkw,
                             "CWP" + std::to_string(u + 1), "cwp_speed"));
  for (std::size_t u = 0; u < n_ct; ++u)
    g.ct.push_back(fit_unit(records, u, &OnOff::ct, &ControlVector::ct_speed, &SensorRecord::ctkw,
                            "CT" + std::to_string(u + 1), "ct_speed"));

  auto opts = [&](std::uint64_t module) {
    MlpOptions o = mlp;
    o.seed = module_seed(mlp.seed, module);
    return o;
  };

  {
    auto data = gather(records, 1 + n_chwp, [](const SensorRecord& r, std::vector<double>& f, double& y) {
      if (!any_on(r.on.chwp)) return false;
      f = chfm_features(r.control, r.on);
      y = r.chfhdr;
      return true;
    });
    g.chfm = named("CHFM", [&] { return fit_mlp(data.x, data.y, chfm_names(n_chwp), "chfhdr", opts(1)); });
  }
  {
    auto data = gather(records, 1 + n_cwp, [](const SensorRecord& r, std::vector<double>& f, double& y) {
      if (!any_on(r.on.cwp)) return false;
      f = cwfm_features(r.control, r.on);
      y = r.cwfhdr;
      return true;
    });
    g.cwfm = named("CWFM", [&] { return fit_mlp(data.x, data.y, cwfm_names(n_cwp), "cwfhdr", opts(2)); });
  }
  {
    auto data = gather(records, 3 + n_ct, [](const SensorRecord& r, std::vector<double>& f, double& y) {
      if (!any_on(r.on.ch)) return false;
      f = cwtm_features(r.control, r.on, r.weather);
      y = r.cwshdr;
      return true;
    });
    g.cwtm = named("CWTM", [&] { return fit_mlp(data.x, data.y, cwtm_names(n_ct), "cwshdr", opts(3)); });
  }
  for (std::size_t u = 0; u < n_ch; ++u) {
    auto data = gather(records, 5, [u](const SensorRecord& r, std::vector<double>& f, double& y) {
      if (!r.on.ch[u] || r.load_rt <= 0.0) return false;
      f = ch_features(r.chfhdr, r.cwfhdr, r.cwshdr, r.load_rt, r.chsp);
      y = r.chkw[u];
      return true;
    });
    const std::string name = "CH" + std::to_string(u + 1);
    if (data.y.size() == 0) {
      g.ch.emplace_back();
      continue;
    }
    g.ch.push_back(named(name, [&] { return fit_mlp(data.x, data.y, kChNames, "chkw", opts(10 + u)); }));
  }
  return g;
}

double percentile(std::vector<double> values, double pct) {
  require(!values.empty(), "percentile of an empty set");
  require(pct >= 0 && pct <= 100, "percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

const ReportRow& TrainReport::row(const std::string& module) const {
  for (const auto& r : rows)
    if (r.module == module) return r;
  fail(ErrorCode::InvalidArgument, "report has no row " + module);
}

namespace {

// Accumulates actual/predicted pairs per report row for one fold.
struct FoldScores {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> pairs;

  void add(const std::string& row, double actual, double predicted) {
    auto [it, inserted] = pairs.try_emplace(row);
    if (inserted) order.push_back(row);
    it->second.first.push_back(actual);
    it->second.second.push_back(predicted);
  }
};

double mean_of(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TrainResult train_graph(std::span<const SensorRecord> records, const TrainOptions& options) {
  require(!records.empty(), "train_graph: no records");
  TrainResult result;
  const auto& first = records.front();
  const std::size_t n_ch = first.on.ch.size(), n_ct = first.on.ct.size(), n_cwp = first.on.cwp.size(),
                    n_chwp = first.on.chwp.size();

  if (options.cross_validate) {
    const FoldSplit folds = kfold_by_days(records, options.k, options.days_per_fold);
    std::vector<std::string> order;
    auto push = [&order](const std::string& s) { order.push_back(s); };
    for (const auto& n : unit_names("CHWP", n_chwp)) push(n);
    for (const auto& n : unit_names("CWP", n_cwp)) push(n);
    for (const auto& n : unit_names("CT", n_ct)) push(n);
    push("CHFM");
    push("CWFM");
    push("CWTM");
    for (const auto& n : unit_names("CH", n_ch)) push(n);
    push("TOTAL");
    std::map<std::string, std::vector<std::optional<double>>> per_fold;
    for (const auto& n : order) per_fold[n].assign(folds.size(), std::nullopt);

    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<SensorRecord> train;
      for (std::size_t o = 0; o < folds.size(); ++o)
        if (o != f) train.insert(train.end(), records.begin() + static_cast<std::ptrdiff_t>(folds[o].begin),
                                 records.begin() + static_cast<std::ptrdiff_t>(folds[o].end));
      const PlantModelGraph g = fit_graph(train, options.mlp);

      FoldScores s;
      for (std::size_t i = folds[f].begin; i < folds[f].end; ++i) {
        const SensorRecord& r = records[i];
        for (std::size_t u = 0; u < n_chwp; ++u)
          if (r.on.chwp[u] && g.chwp[u])
            s.add("CHWP" + std::to_string(u + 1), r.chwpkw[u], predict_poly(*g.chwp[u], r.control.chwp_speed).value);
        for (std::size_t u = 0; u < n_cwp; ++u)
          if (r.on.cwp[u] && g.cwp[u])
            s.add("CWP" + std::to_string(u + 1), r.cwpkw[u], predict_poly(*g.cwp[u], r.control.cwp_speed).value);
        for (std::size_t u = 0; u < n_ct; ++u)
          if (r.on.ct[u] && g.ct[u])
            s.add("CT" + std::to_string(u + 1), r.ctkw[u], predict_poly(*g.ct[u], r.control.ct_speed).value);
        const PowerBreakdown p = predict_graph(g, graph_input(r));
        if (any_on(r.on.chwp)) s.add("CHFM", r.chfhdr, p.chfhdr);
        if (any_on(r.on.cwp)) s.add("CWFM", r.cwfhdr, p.cwfhdr);
        if (any_on(r.on.ch)) s.add("CWTM", r.cwshdr, p.cwshdr);
        for (std::size_t u = 0; u < n_ch; ++u)
          if (r.on.ch[u] && r.load_rt > 0.0) s.add("CH" + std::to_string(u + 1), r.chkw[u], p.chkw[u]);
        s.add("TOTAL", r.total_kw, p.total_kw);
      }
      for (const auto& name : s.order) {
        const auto& [a, b] = s.pairs.at(name);
        per_fold[name][f] = named(name, [&] { return mape(a, b); });
      }
    }

    auto add_row = [&](const std::string& name) {
      ReportRow row{name, per_fold[name], mean_of(per_fold[name])};
      result.report.rows.push_back(row);
      return row.mean;
    };
    auto add_group = [&](const std::string& prefix, std::size_t n) {
      std::vector<std::optional<double>> means;
      for (const auto& name : unit_names(prefix, n)) {
        const double m = add_row(name);
        means.push_back(std::isnan(m) ? std::nullopt : std::optional<double>(m));
      }
      result.report.rows.push_back({prefix + "_AVG", {}, mean_of(means)});
    };
    add_group("CHWP", n_chwp);
    add_group("CWP", n_cwp);
    add_group("CT", n_ct);
    add_row("CHFM");
    add_row("CWFM");
    add_row("CWTM");
    add_group("CH", n_ch);
    add_row("TOTAL");
  }

  result.graph = fit_graph(records, options.mlp);

  std::vector<double> chf, cwf, cws;
  for (const auto& r : records) {
    if (options.bounds_filter && !options.bounds_filter(r)) continue;
    if (any_on(r.on.chwp)) chf.push_back(r.chfhdr);
    if (any_on(r.on.cwp)) cwf.push_back(r.cwfhdr);
    if (any_on(r.on.ch)) cws.push_back(r.cwshdr);
  }
  auto bounds = [&](const std::vector<double>& v, Range fallback) {
    if (v.empty()) return fallback;
    return Range{percentile(v, options.bounds_lo_pct), percentile(v, options.bounds_hi_pct)};
  };
  result.graph.bounds.chfhdr = bounds(chf, result.graph.bounds.chfhdr);
  result.graph.bounds.cwfhdr = bounds(cwf, result.graph.bounds.cwfhdr);
  result.graph.bounds.cwshdr = bounds(cws, result.graph.bounds.cwshdr);
  return result;
}

void to_json(nlohmann::json& j, const PolyModel& m) {
  j = {{"coefficients", m.coefficients}, {"input", m.input}, {"output", m.output}, {"x_range", m.x_range}};
}

void from_json(const nlohmann::json& j, PolyModel& m) {
  j.at("coefficients").get_to(m.coefficients);
  j.at("input").get_to(m.input);
  j.at("output").get_to(m.output);
  j.at("x_range").get_to(m.x_range);
  if (m.coefficients.size() != kPolyDegree + 1) fail(ErrorCode::Parse, "poly model must have 4 coefficients");
}

void to_json(nlohmann::json& j, const MlpModel& m) {
  j = {{"inputs", m.inputs},   {"output", m.output},       {"hidden", m.hidden},
       {"in_mean", m.in_mean}, {"in_scale", m.in_scale},   {"out_mean", m.out_mean},
       {"out_scale", m.out_scale}, {"params", m.params}};
}

void from_json(const nlohmann::json& j, MlpModel& m) {
  j.at("inputs").get_to(m.inputs);
  j.at("output").get_to(m.output);
  j.at("hidden").get_to(m.hidden);
  j.at("in_mean").get_to(m.in_mean);
  j.at("in_scale").get_to(m.in_scale);
  j.at("out_mean").get_to(m.out_mean);
  j.at("out_scale").get_to(m.out_scale);
  j.at("params").get_to(m.params);
  if (m.hidden < 1 || m.in_mean.size() != m.inputs.size() || m.in_scale.size() != m.inputs.size() ||
      m.params.size() != mlp_param_count(m.inputs.size(), m.hidden))
    fail(ErrorCode::Parse, "mlp model " + m.output + " has inconsistent dimensions");
}

void to_json(nlohmann::json& j, const PlantModelGraph& g) {
  auto opt = [](const auto& m) { return m ? nlohmann::json(*m) : nlohmann::json(nullptr); };
  auto list = [&](const auto& v) {
    auto a = nlohmann::json::array();
    for (const auto& m : v) a.push_back(opt(m));
    return a;
  };
  j = {{"schema_version", kBundleSchemaVersion},
       {"chwp", list(g.chwp)},
       {"cwp", list(g.cwp)},
       {"ct", list(g.ct)},
       {"chfm", opt(g.chfm)},
       {"cwfm", opt(g.cwfm)},
       {"cwtm", opt(g.cwtm)},
       {"ch", list(g.ch)},
       {"bounds", {{"chfhdr", g.bounds.chfhdr}, {"cwfhdr", g.bounds.cwfhdr}, {"cwshdr", g.bounds.cwshdr}}}};
}

void from_json(const nlohmann::json& j, PlantModelGraph& g) {
  if (j.value("schema_version", -1) != kBundleSchemaVersion)
    fail(ErrorCode::Parse, "unsupported model bundle schema_version");
  auto opt = [](const nlohmann::json& v, auto& out) {
    using T = typename std::decay_t<decltype(out)>::value_type;
    if (v.is_null())
      out.reset();
    else
      out = v.get<T>();
  };
  auto list = [&](const nlohmann::json& v, auto& out) {
    out.clear();
    for (const auto& e : v) {
      out.emplace_back();
      opt(e, out.back());
    }
  };
  g = PlantModelGraph{};
  list(j.at("chwp"), g.chwp);
  list(j.at("cwp"), g.cwp);
  list(j.at("ct"), g.ct);
  opt(j.at("chfm"), g.chfm);
  opt(j.at("cwfm"), g.cwfm);
  opt(j.at("cwtm"), g.cwtm);
  list(j.at("ch"), g.ch);
  const auto& b = j.at("bounds");
  b.at("chfhdr").get_to(g.bounds.chfhdr);
  b.at("cwfhdr").get_to(g.bounds.cwfhdr);
  b.at("cwshdr").get_to(g.bounds.cwshdr);
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  j = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto folds = nlohmann::json::array();
    for (const auto& f : row.folds) folds.push_back(f ? nlohmann::json(*f) : nlohmann::json(nullptr));
    j.push_back({{"module", row.module},
                 {"folds", folds},
                 {"mean_mape", std::isnan(row.mean) ? nlohmann::json(nullptr) : nlohmann::json(row.mean)}});
  }
  j = {{"rows", j}};
}

void to_json(nlohmann::json& j, const PowerBreakdown& p) {
  j = {{"chfhdr", p.chfhdr}, {"cwfhdr", p.cwfhdr}, {"cwshdr", p.cwshdr}, {"chkw", p.chkw},
       {"ctkw", p.ctkw},     {"cwpkw", p.cwpkw},   {"chwpkw", p.chwpkw}, {"total_kw", p.total_kw},
       {"extrapolated", p.extrapolated}};
}

void save_bundle(const PlantModelGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write model bundle " + path.string());
  out << nlohmann::json(g).dump(1) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

PlantModelGraph load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open model bundle " + path.string());
  try {
    return nlohmann::json::parse(in).get<PlantModelGraph>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

std::string format_report(const TrainReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  std::size_t n_folds = 0;
  for (const auto& row : r.rows) n_folds = std::max(n_folds, row.folds.size());
  os << std::left << std::setw(10) << "module";
  for (std::size_t f = 0; f < n_folds; ++f) os << std::right << std::setw(9) << ("fold" + std::to_string(f + 1));
  os << std::right << std::setw(10) << "MAPE%" << '\n';
  for (const auto& row : r.rows) {
    os << std::left << std::setw(10) << row.module;
    for (std::size_t f = 0; f < n_folds; ++f) {
      os << std::right << std::setw(9);
      if (f < row.folds.size() && row.folds[f])
        os << *row.folds[f];
      else
        os << "";
    }
    os << std::right << std::setw(10);
    if (std::isnan(row.mean))
      os << "n/a";
    else
      os << row.mean;
    os << '\n';
  }
  return os.str();
}

}  // namespace chillopt
