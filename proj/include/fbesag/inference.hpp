#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fbesag/pcprior.hpp"
#include "fbesag/precision.hpp"

namespace fbesag {

struct Observation {
  std::size_t area = 0;
  std::optional<std::size_t> time;  // 0-based period when the temporal effect is present
  std::uint64_t count = 0;
  double offset = 1.0;  // exposure phi > 0; the Poisson mean is phi * exp(eta)
};

struct ObservationData {
  std::vector<Observation> observations;
  std::size_t n_time = 0;  // 1 + largest time index; 0 when the time column is blank throughout
};

/// Parses the `area,time,count,offset` CSV (1-based area and time ids; blank time
/// when there is no temporal effect). Errors are ParseError with the line number.
ObservationData parse_observations_csv(std::string_view text, std::size_t n_areas);
ObservationData read_observations_file(const std::string& path, std::size_t n_areas);

/// Poisson disease-mapping model: y ~ Poisson(phi exp(mu + alpha + kappa)) with
/// alpha ~ fbesag(tau_1..tau_P) and kappa a cyclic RW1 over n_time periods.
struct ModelSpec {
  std::shared_ptr<const FbesagStructure> spatial;
  std::size_t n_time = 0;  // 0: no temporal effect
  std::vector<Observation> observations;
  double intercept_precision = 1e-3;
  PcPriorConfig spatial_prior{1.0, 1e-5, 0.15, 1};
  double temporal_u = 0.5;
  double temporal_alpha = 0.01;

  static ModelSpec create(const AdjacencyGraph& graph, const Partition& partition,
                          std::vector<Observation> observations, std::size_t n_time = 0);

  std::size_t n_subregions() const { return spatial->n_subregions(); }
  bool temporal() const noexcept { return n_time > 0; }
  /// P spatial log-precisions, then log tau_kappa when temporal.
  std::size_t n_theta() const { return n_subregions() + (temporal() ? 1 : 0); }
  std::size_t n_latent() const { return 1 + spatial->n_areas() + n_time; }
  std::vector<std::string> theta_names() const;

  /// Same data with the spatial partition collapsed to one region.
  ModelSpec stationary() const;
  ModelSpec with_sigma_gamma(double sigma_gamma) const;

  /// Throws std::invalid_argument naming the first offending observation.
  void validate() const;
};

/// Log prior of the hyperparameters (joint PC prior on the spatial
/// log-precisions, univariate PC prior on log tau_kappa).
double log_prior_theta(const ModelSpec& spec, const Eigen::VectorXd& theta);

struct LatentMode {
  VectorXd mode;
  SparseMatrix hessian;  // Q_z + X' diag(phi e^eta) X at the mode
  std::size_t iterations = 0;
  double gradient_norm = 0;
  double max_constraint_violation = 0;
};

class NewtonFailure : public NumericalError {
 public:
  NewtonFailure(const std::string& what, double gradient_norm)
      : NumericalError(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

/// Laplace approximation machinery for one ModelSpec. Holds a warm start and the
/// symbolic factorisation, so an instance must not be shared between threads.
class LaplaceEngine {
 public:
  explicit LaplaceEngine(ModelSpec spec);
  ~LaplaceEngine();
  LaplaceEngine(LaplaceEngine&&) noexcept;
  LaplaceEngine& operator=(LaplaceEngine&&) noexcept;

  const ModelSpec& spec() const noexcept;

  /// -log p(y|z) + 1/2 z'Q_z z (no constraint handling).
  double objective(const VectorXd& z, const VectorXd& theta) const;
  VectorXd gradient(const VectorXd& z, const VectorXd& theta) const;
  double log_likelihood(const VectorXd& z) const;
  /// Linear predictor including log offsets.
  VectorXd linear_predictor(const VectorXd& z) const;
  SparseMatrix prior_precision(const VectorXd& theta) const;
  const ConstraintSet& constraints() const noexcept;

  LatentMode latent_mode(const VectorXd& theta, const VectorXd* start = nullptr);

  /// log pi(theta) + Laplace approximation of log pi(y | theta).
  double log_posterior_theta(const VectorXd& theta);

  void set_warm_start(const VectorXd& z);

  /// Gaussian approximation of z | y, theta restricted to the constraints.
  struct Gaussian {
    VectorXd mean;
    VectorXd sd;
  };
  Gaussian gaussian_summary(const VectorXd& theta);

  /// Draws from the constrained Gaussian approximation at theta.
  std::vector<VectorXd> sample_latent(const VectorXd& theta, std::size_t draws, std::uint64_t seed);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct Summary {
  double mean = 0;
  double q025 = 0;
  double q975 = 0;
};

struct FitOptions {
  std::optional<VectorXd> initial_theta;
  std::size_t theta_draws = 2000;
  std::size_t dic_draws = 2000;
  double hessian_step = 1e-3;
  double diameter_tol = 1e-4;
  std::size_t max_evaluations = 5000;
  std::uint64_t seed = 1;
};

struct FitDiagnostics {
  bool converged = false;
  bool hessian_positive_definite = false;
  std::size_t optimizer_iterations = 0;
  std::size_t function_evaluations = 0;
  std::size_t newton_iterations = 0;
  double max_constraint_violation = 0;
  std::vector<double> hessian_eigenvalues;  // of the negated log-posterior Hessian
};

struct ModelFit {
  std::vector<std::string> theta_names;
  VectorXd theta_mode;
  MatrixXd theta_cov;
  double log_posterior_at_mode = 0;
  std::vector<Summary> theta_summaries;  // log-precisions
  std::vector<Summary> tau_summaries;    // precisions
  VectorXd latent_mean;                  // (mu, alpha_1..N, kappa_1..T)
  VectorXd latent_sd;
  double dic = 0;
  double effective_parameters = 0;
  double mean_deviance = 0;
  double log_ml = 0;
  std::uint64_t seed = 1;
  FitDiagnostics diagnostics;
};

LatentMode latent_mode(const ModelSpec& spec, const VectorXd& theta,
                       const VectorXd* start = nullptr);
double log_posterior_theta(const ModelSpec& spec, const VectorXd& theta);

ModelFit fit(const ModelSpec& spec, const FitOptions& options = {});

/// 2 E[D(z)] - D(E[z]) with D(z) = -2 log p(y|z), z drawn from the Gaussian
/// approximation at the hyperparameter mode.
double dic(const ModelSpec& spec, const ModelFit& fit, std::size_t draws, std::uint64_t seed);

/// Gaussian approximation in theta: log pi(theta*, y) + m/2 log 2pi + 1/2 log|Sigma|.
double log_marginal_likelihood(const ModelSpec& spec, const ModelFit& fit);

}  // namespace fbesag
