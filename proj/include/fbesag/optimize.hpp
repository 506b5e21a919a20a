#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace fbesag {

struct NelderMeadOptions {
  double initial_step = 0.5;
  double diameter_tol = 1e-4;  // max_i ||x_i - x_best||_inf
  std::size_t max_evaluations = 5000;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Minimises f by the Nelder-Mead simplex method (standard coefficients 1, 2, 1/2, 1/2).
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const NelderMeadOptions& options = {});

/// Type-7 sample quantile (linear interpolation between order statistics).
/// `sorted` must be ascending.
double quantile_type7(const std::vector<double>& sorted, double prob);

}  // namespace fbesag
