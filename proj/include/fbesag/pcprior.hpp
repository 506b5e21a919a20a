#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fbesag {

/// Rate of the exponential prior on tau^{-1/2} with prob(tau^{-1/2} > u) = alpha.
double lambda_from(double u, double alpha);

/// Hyperparameters of the joint prior on the local log-precisions.
class PcPriorConfig {
 public:
  PcPriorConfig(double u, double alpha, double sigma_gamma, std::size_t p);

  double u() const noexcept { return u_; }
  double alpha() const noexcept { return alpha_; }
  double lambda() const noexcept { return lambda_; }
  double sigma_gamma() const noexcept { return sigma_gamma_; }
  std::size_t p() const noexcept { return p_; }

  PcPriorConfig with_p(std::size_t p) const { return {u_, alpha_, sigma_gamma_, p}; }
  PcPriorConfig with_sigma_gamma(double s) const { return {u_, alpha_, s, p_}; }

 private:
  double u_, alpha_, lambda_, sigma_gamma_;
  std::size_t p_;
};

/// theta = theta_bar 1 + gamma with 1'gamma = 0.
struct ThetaVector {
  Eigen::VectorXd theta;
  double theta_bar;
  Eigen::VectorXd gamma;

  static ThetaVector from_theta(const Eigen::VectorXd& theta);
};

/// log of lambda/2 exp(-theta/2 - lambda exp(-theta/2)), the density of
/// theta = log tau when tau^{-1/2} ~ Exponential(lambda).
double log_pc_prior_univariate(double theta, double lambda);

/// CDF of the same density: exp(-lambda exp(-theta/2)).
double pc_prior_univariate_cdf(double theta, double lambda);

/// Joint prior: univariate prior on theta_bar times the degenerate Gaussian
/// gamma | 1'gamma = 0 with covariance sigma^2 (I - 11'/P), expressed as a
/// density on R^P (the change of variables (theta_bar, gamma_1..gamma_{P-1})
/// -> theta has |J| = P).
double log_joint_pc_prior(const ThetaVector& theta, const PcPriorConfig& config);
double log_joint_pc_prior(const Eigen::VectorXd& theta, const PcPriorConfig& config);

/// Draws theta_bar = -2 log E with E ~ Exponential(lambda), and
/// gamma ~ N(0, sigma^2 I) projected onto 1'gamma = 0.
ThetaVector sample_prior(const PcPriorConfig& config, std::uint64_t seed);
std::vector<ThetaVector> sample_prior(const PcPriorConfig& config, std::uint64_t seed,
                                      std::size_t count);

/// KL divergence from N(mu1, Sigma1) to N(mu0, Sigma0):
/// 1/2 { -log |S1|/|S0| + tr(S0^-1 S1) + (mu0-mu1)' S0^-1 (mu0-mu1) - n }.
double kld_gaussians(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                     const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1);

/// sqrt(2 KLD).
double pc_distance(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                   const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1);

/// Log-normal density of e^gamma, gamma ~ N(0, sigma^2).
double lognormal_density(double x, double sigma);

}  // namespace fbesag
