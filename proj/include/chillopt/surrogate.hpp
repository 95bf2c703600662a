#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chillopt/telemetry.hpp"
#include "chillopt/types.hpp"

namespace chillopt {

// y = a0 + a1 x + a2 x^2 + a3 x^3
struct PolyModel {
  std::vector<double> coefficients;  // ascending powers, always 4
  std::string input;
  std::string output;
  Range x_range;  // training range of x
};

struct PolyPrediction {
  double value = 0.0;
  bool extrapolated = false;
};

// Least-squares cubic. Needs at least 8 points and 4 distinct xs.
PolyModel fit_poly(std::span<const double> xs, std::span<const double> ys, std::string input = "x",
                   std::string output = "y");
PolyPrediction predict_poly(const PolyModel& model, double x);

// One hidden layer of logistic units, linear output, with standardized inputs
// and output. Parameters are stored flat: W1 (hidden x inputs, row-major),
// b1 (hidden), w2 (hidden), b2.
struct MlpModel {
  std::vector<std::string> inputs;
  std::string output;
  int hidden = 3;
  std::vector<double> in_mean;
  std::vector<double> in_scale;
  double out_mean = 0.0;
  double out_scale = 1.0;
  std::vector<double> params;

  std::size_t n_inputs() const { return inputs.size(); }
  double predict(std::span<const double> x) const;
};

std::size_t mlp_param_count(std::size_t n_inputs, int hidden);

// Mean squared error of the network with flat parameters `params` on
// already-standardized data, and its gradient when `grad` is non-null.
double mlp_loss(const Eigen::VectorXd& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int hidden,
                Eigen::VectorXd* grad = nullptr);

struct MlpOptions {
  int hidden = 3;
  int epochs = 5000;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int patience = 200;  // epochs without validation improvement before stopping
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

// Full-batch gradient descent with momentum on standardized MSE. Returns the
// weights of the epoch with the lowest validation loss.
MlpModel fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> inputs,
                 std::string output, const MlpOptions& options = {});

// Bounds the optimizer places on the graph's predicted flows and temperature.
struct QuantityBounds {
  Range chfhdr{0, 1e9};
  Range cwfhdr{0, 1e9};
  Range cwshdr{-1e9, 1e9};
};

// Module-wise plant model: per-unit cubic power models for pumps and fans,
// MLPs for the header flows, the condenser water temperature and each chiller.
struct PlantModelGraph {
  std::vector<std::optional<PolyModel>> chwp;
  std::vector<std::optional<PolyModel>> cwp;
  std::vector<std::optional<PolyModel>> ct;
  std::optional<MlpModel> chfm;
  std::optional<MlpModel> cwfm;
  std::optional<MlpModel> cwtm;
  std::vector<std::optional<MlpModel>> ch;
  QuantityBounds bounds;
};

struct GraphInput {
  ControlVector control;
  Weather weather;
  double load_rt = 0.0;
  double chsp = 7.0;
  OnOff on;
};

GraphInput graph_input(const SensorRecord& r);

struct PowerBreakdown {
  double chfhdr = 0.0;
  double cwfhdr = 0.0;
  double cwshdr = 0.0;
  std::vector<double> chkw;
  std::vector<double> ctkw;
  std::vector<double> cwpkw;
  std::vector<double> chwpkw;
  double total_kw = 0.0;
  bool extrapolated = false;  // some pump/fan speed outside its training range
};

// Feature vectors, in model input order.
std::vector<double> chfm_features(const ControlVector& c, const OnOff& on);
std::vector<double> cwfm_features(const ControlVector& c, const OnOff& on);
std::vector<double> cwtm_features(const ControlVector& c, const OnOff& on, const Weather& w);
std::vector<double> ch_features(double chfhdr, double cwfhdr, double cwshdr, double load_rt, double chsp);

// Throws UntrainedModule when a module needed for the running set is missing.
PowerBreakdown predict_graph(const PlantModelGraph& graph, const GraphInput& in);

struct ReportRow {
  std::string module;
  std::vector<std::optional<double>> folds;  // MAPE per held-out fold, empty when the unit never ran
  double mean = 0.0;                         // over the folds that have a value
};

struct TrainReport {
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& module) const;
};

struct TrainOptions {
  std::size_t k = 5;
  std::size_t days_per_fold = 3;
  MlpOptions mlp;
  // Records used for the predicted-quantity bounds; all records when empty.
  std::function<bool(const SensorRecord&)> bounds_filter;
  double bounds_lo_pct = 5.0;
  double bounds_hi_pct = 95.0;
  bool cross_validate = true;
};

struct TrainResult {
  PlantModelGraph graph;  // trained on every record
  TrainReport report;
};

// Fits every module on all records; with cross_validate, also reports
// per-fold MAPE with chiller and total power scored through the graph.
TrainResult train_graph(std::span<const SensorRecord> records, const TrainOptions& options = {});

// Trains only the modules, on the given rows. Errors name the failing module.
PlantModelGraph fit_graph(std::span<const SensorRecord> records, const MlpOptions& mlp);

double percentile(std::vector<double> values, double pct);

void to_json(nlohmann::json& j, const PolyModel& m);
void from_json(const nlohmann::json& j, PolyModel& m);
void to_json(nlohmann::json& j, const MlpModel& m);
void from_json(const nlohmann::json& j, MlpModel& m);
void to_json(nlohmann::json& j, const PlantModelGraph& g);
void from_json(const nlohmann::json& j, PlantModelGraph& g);
void to_json(nlohmann::json& j, const TrainReport& r);
void to_json(nlohmann::json& j, const PowerBreakdown& p);

constexpr int kBundleSchemaVersion = 1;

void save_bundle(const PlantModelGraph& g, const std::filesystem::path& path);
PlantModelGraph load_bundle(const std::filesystem::path& path);

// Plain-text table of the report, one row per module.
std::string format_report(const TrainReport& r);

}  // namespace chillopt
