#pragma once

#include <span>
#include <vector>

namespace chillopt {

// Ordinary least squares on the monomial basis 1, x, ..., x^degree.
// Coefficients are returned in ascending powers. Throws Degenerate when the
// design matrix is rank-deficient (e.g. fewer distinct xs than coefficients).
// Optional weights multiply each residual, so 1/|y| minimizes relative error.
std::vector<double> least_squares_poly(std::span<const double> xs, std::span<const double> ys, int degree,
                                       std::span<const double> weights = {});

double eval_poly(std::span<const double> coefficients, double x);

}  // namespace chillopt
