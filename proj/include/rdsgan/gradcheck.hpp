#pragma once

// Central-difference gradient verification. Runs in 64-bit; the relative
// error per coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rdsgan/errors.hpp"
#include "rdsgan/tape.hpp"

namespace rdsgan {

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_row = 0, worst_col = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

// eval() must recompute the scalar objective from the parameters' current
// values, holding every other source of randomness fixed. analytic[i] is the
// gradient for params[i], typically read off a tape after one backward pass.
inline double finite_diff_check(const std::function<double()>& eval,
                                const std::vector<std::pair<std::string, Matrix<double>*>>& params,
                                const std::vector<Matrix<double>>& analytic, double eps = 1e-5,
                                FdReport* report = nullptr) {
  if (eps <= 0.0) throw ShapeError("finite_diff_check: eps must be positive");
  if (params.size() != analytic.size()) {
    throw ShapeError("finite_diff_check: params/gradients count mismatch");
  }
  if (!std::isfinite(eval())) throw NumericError("finite_diff_check: objective is not finite");

  FdReport rep;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix<double>& theta = *params[p].second;
    const Matrix<double>& grad = analytic[p];
    if (theta.rows() != grad.rows() || theta.cols() != grad.cols()) {
      throw ShapeError("finite_diff_check: gradient shape mismatch for " + params[p].first);
    }
    for (Index i = 0; i < theta.rows(); ++i) {
      for (Index j = 0; j < theta.cols(); ++j) {
        const double saved = theta(i, j);
        theta(i, j) = saved + eps;
        const double f_plus = eval();
        theta(i, j) = saved - eps;
        const double f_minus = eval();
        theta(i, j) = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
          throw NumericError("finite_diff_check: objective not finite near " + params[p].first);
        }
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double a = grad(i, j);
        const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        if (rel > rep.max_rel_err) {
          rep = FdReport{rel, params[p].first, i, j, a, numeric};
        }
      }
    }
  }
  if (report) *report = rep;
  return rep.max_rel_err;
}

}  // namespace rdsgan
