#include "fbesag/pcprior.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace fbesag {

double lambda_from(double u, double alpha) {
  if (!(u > 0) || !std::isfinite(u)) throw std::invalid_argument("u must be positive");
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
  return -std::log(alpha) / u;
}

PcPriorConfig::PcPriorConfig(double u, double alpha, double sigma_gamma, std::size_t p)
    : u_(u), alpha_(alpha), lambda_(lambda_from(u, alpha)), sigma_gamma_(sigma_gamma), p_(p) {
  if (!(sigma_gamma > 0) || !std::isfinite(sigma_gamma))
    throw std::invalid_argument("sigma_gamma must be positive");
  if (p == 0) throw std::invalid_argument("number of sub-regions must be positive");
}

ThetaVector ThetaVector::from_theta(const Eigen::VectorXd& theta) {
  if (theta.size() == 0) throw std::invalid_argument("theta is empty");
  const double bar = theta.mean();
  return {theta, bar, theta.array() - bar};
}

double log_pc_prior_univariate(double theta, double lambda) {
  return std::log(lambda / 2) - theta / 2 - lambda * std::exp(-theta / 2);
}

double pc_prior_univariate_cdf(double theta, double lambda) {
  return std::exp(-lambda * std::exp(-theta / 2));
}

double log_joint_pc_prior(const ThetaVector& theta, const PcPriorConfig& config) {
  const auto p = static_cast<std::size_t>(theta.theta.size());
  if (p != config.p())
    throw std::invalid_argument("theta has length " + std::to_string(p) + ", prior expects " +
                                std::to_string(config.p()));
  double out = log_pc_prior_univariate(theta.theta_bar, config.lambda());
  if (p == 1) return out;
  const double pd = static_cast<double>(p);
  const double s2 = config.sigma_gamma() * config.sigma_gamma();
  // gamma_1..gamma_{P-1} has covariance s2 (I - 11'/P), determinant s2^{P-1}/P,
  // and quadratic form sum_{i=1}^{P} gamma_i^2 / s2.
  out += -0.5 * (pd - 1) * std::log(2 * std::numbers::pi * s2) + 0.5 * std::log(pd) -
         theta.gamma.squaredNorm() / (2 * s2);
  // Jacobian of (theta_bar, gamma_1..gamma_{P-1}) -> theta
  out -= std::log(pd);
  return out;
}

double log_joint_pc_prior(const Eigen::VectorXd& theta, const PcPriorConfig& config) {
  return log_joint_pc_prior(ThetaVector::from_theta(theta), config);
}

namespace {

ThetaVector draw_one(const PcPriorConfig& config, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(config.lambda());
  std::normal_distribution<double> normal(0.0, config.sigma_gamma());
  const double e = expo(rng);
  const double bar = -2.0 * std::log(e);
  const auto p = static_cast<Eigen::Index>(config.p());
  Eigen::VectorXd gamma(p);
  for (Eigen::Index i = 0; i < p; ++i) gamma[i] = normal(rng);
  gamma.array() -= gamma.mean();
  return {gamma.array() + bar, bar, gamma};
}

}  // namespace

ThetaVector sample_prior(const PcPriorConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw_one(config, rng);
}

std::vector<ThetaVector> sample_prior(const PcPriorConfig& config, std::uint64_t seed,
                                      std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<ThetaVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_one(config, rng));
  return out;
}

double kld_gaussians(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                     const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1) {
  const auto n = mu0.size();
  if (mu1.size() != n || sigma0.rows() != n || sigma0.cols() != n || sigma1.rows() != n ||
      sigma1.cols() != n)
    throw std::invalid_argument("dimension mismatch in kld_gaussians");
  Eigen::LLT<Eigen::MatrixXd> l0(sigma0), l1(sigma1);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success)
    throw std::invalid_argument("covariances must be positive definite");
  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
    return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const Eigen::VectorXd d = mu0 - mu1;
  const double trace = l0.solve(sigma1).trace();
  const double maha = d.dot(l0.solve(d));
  return 0.5 * (-(logdet(l1) - logdet(l0)) + trace + maha - static_cast<double>(n));
}

double pc_distance(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                   const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1) {
  return std::sqrt(2.0 * std::max(0.0, kld_gaussians(mu0, sigma0, mu1, sigma1)));
}

double lognormal_density(double x, double sigma) {
  if (x <= 0) return 0.0;
  const double z = std::log(x) / sigma;
  return std::exp(-0.5 * z * z) / (x * sigma * std::sqrt(2 * std::numbers::pi));
}

}  // namespace fbesag
