#include "chillopt/polyfit.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "chillopt/error.hpp"

namespace chillopt {

std::vector<double> least_squares_poly(std::span<const double> xs, std::span<const double> ys, int degree,
                                       std::span<const double> weights) {
  require(degree >= 0, "polynomial degree must be >= 0");
  require(xs.size() == ys.size(), "xs and ys differ in length");
  require(weights.empty() || weights.size() == xs.size(), "weights and xs differ in length");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index p = degree + 1;
  if (n < p) fail(ErrorCode::Degenerate, "fewer points than coefficients");

  // Work in u = x / scale so the columns have comparable norms.
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) scale = 1.0;

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double u = xs[si] / scale;
    const double w = weights.empty() ? 1.0 : weights[si];
    require(w > 0.0 && std::isfinite(w), "weights must be positive and finite");
    double power = w;
    for (Eigen::Index k = 0; k < p; ++k) {
      design(i, k) = power;
      power *= u;
    }
    rhs(i) = w * ys[si];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < p) fail(ErrorCode::Degenerate, "design matrix is rank-deficient");
  const Eigen::VectorXd beta = qr.solve(rhs);

  std::vector<double> coef(static_cast<std::size_t>(p));
  double s = 1.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    coef[static_cast<std::size_t>(k)] = beta(k) / s;
    s *= scale;
  }
  for (double c : coef)
    if (!std::isfinite(c)) fail(ErrorCode::Degenerate, "non-finite polynomial coefficient");
  return coef;
}

double eval_poly(std::span<const double> coefficients, double x) {
  double y = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) y = y * x + *it;
  return y;
}

}  // namespace chillopt
