#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fbesag/config.hpp"
#include "fbesag/graph.hpp"
#include "fbesag/inference.hpp"

namespace fbesag {

/// A candidate partition fitted in a study.
struct CandidateModel {
  std::string name;
  Partition partition;
};

/// Named lattice partitions for a rows x cols grid: "1", "3", "4A", "4B", "5", "6".
/// Splits fall at rounded fractions of the grid so the layouts scale with it.
CandidateModel builtin_model(const std::string& name, std::size_t rows, std::size_t cols);

enum class StudyKind { recovery, sigma_sweep, contraction };
StudyKind parse_study_kind(const std::string& name);
std::string to_string(StudyKind kind);

struct StudyConfig {
  StudyKind kind = StudyKind::recovery;
  AdjacencyGraph graph;
  std::vector<CandidateModel> models;  // must contain a single-region model
  std::size_t generator_model = 0;     // index into models
  /// Common log-precision levels of the generator. Sweep and contraction use one level.
  std::vector<double> log_tau_levels{0.0, 2.0};
  double generator_sigma_gamma = 0.2;  // sd of the unconstrained gamma in the generator
  /// Fixed true log-precisions; overrides log_tau_levels and the gamma draw.
  std::optional<VectorXd> true_theta;
  bool redraw_gamma = false;  // default: one gamma per level shared by all replicates
  double intercept = 2.0;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  double pc_u = 1.0;
  double pc_alpha = 1e-5;
  double fit_sigma_gamma = 0.2;
  std::vector<double> sweep_sigmas{0.02, 0.05, 0.08, 0.1, 0.15, 0.2, 0.3};
  std::size_t theta_draws = 2000;
  std::size_t dic_draws = 2000;
  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

/// Builds a StudyConfig from `study.*`, `grid.*`, `generator.*`, `models`, `model.*`,
/// `pc.*`, `sweep.*` and `fit.*` keys. `graph` overrides the lattice when given;
/// then every model must be defined by a partition file.
StudyConfig study_config_from(const Config& config,
                              const std::optional<AdjacencyGraph>& graph = std::nullopt);

/// Generator hyperparameters: log_tau + gamma with gamma iid N(0, sigma_gamma^2).
VectorXd draw_theta_true(double log_tau, double sigma_gamma, std::size_t p, std::uint64_t seed);

struct SimulatedData {
  VectorXd field;                     // alpha, sum-to-zero per component
  std::vector<std::uint64_t> counts;  // y_i ~ Poisson(exp(intercept + alpha_i))
  VectorXd theta_true;
};

/// Draws alpha ~ fbesag(exp(theta_true)) under sum-to-zero and Poisson counts.
SimulatedData simulate_dataset(const AdjacencyGraph& graph, const Partition& partition,
                               const VectorXd& theta_true, double intercept, std::uint64_t seed);
SimulatedData simulate_dataset(const AdjacencyGraph& graph, const Partition& partition,
                               double log_tau, double sigma_gamma, double intercept,
                               std::uint64_t seed);

/// One fitted model on one replicate.
struct ReplicateRecord {
  double level = 0;  // generator log tau, or sigma_gamma for the sweep
  std::size_t level_index = 0;
  std::size_t replicate = 0;
  std::string model;
  std::size_t n_subregions = 0;
  bool ok = false;
  bool converged = false;
  std::string error;
  VectorXd theta_true;  // empty when the model's partition is not the generator's
  VectorXd theta_mode, theta_mean, theta_q025, theta_q975;
  double dic = 0;
  double log_ml = 0;
  double effective_parameters = 0;
};

struct AggregateRow {
  double level = 0;
  std::string model;
  std::string metric;
  double value = 0;
};

struct StudyResult {
  StudyKind kind = StudyKind::recovery;
  std::vector<ReplicateRecord> records;  // ordered by (level, replicate, model)
  std::vector<AggregateRow> aggregate;

  /// First aggregate value for (level, model, metric); NaN when absent.
  double metric(double level, const std::string& model, const std::string& metric) const;
};

StudyResult recovery_study(const StudyConfig& config);
StudyResult sigma_sweep(const StudyConfig& config);
StudyResult contraction_study(const StudyConfig& config);
StudyResult run_study(const StudyConfig& config);

/// Per-replicate deviations of a model's posterior-mean log-precisions from the
/// single-region estimate on the same data.
struct Deviation {
  double max_abs = 0;       // max_i |theta_stationary - theta_i|
  double abs_mean = 0;      // |theta_stationary - mean_i theta_i|
};
Deviation deviation_from(const ReplicateRecord& stationary, const ReplicateRecord& model);

/// CSV writers; numbers use 17 significant digits.
void write_replicates_csv(const StudyResult& result, std::ostream& out);
void write_aggregate_csv(const StudyResult& result, std::ostream& out);
void write_table1_csv(const StudyResult& result, std::ostream& out);
void write_table3_csv(const StudyResult& result, std::ostream& out);
void write_sweep_csv(const StudyResult& result, std::ostream& out);

}  // namespace fbesag
