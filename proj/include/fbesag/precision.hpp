#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <vector>

#include "fbesag/graph.hpp"

namespace fbesag {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a factorisation fails even after jitter escalation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precision-independent part of an fbesag field: Q(tau) = sum_k tau_k B_k.
/// Shared by every FbesagPrecision built on the same (graph, partition).
class FbesagStructure {
 public:
  /// With `scale_to_unit_variance` every B_k is multiplied by the geometric mean of
  /// the marginal variances of the constrained generalised inverse of sum_k B_k.
  FbesagStructure(AdjacencyGraph graph, Partition partition, bool scale_to_unit_variance = false);

  const AdjacencyGraph& graph() const noexcept { return graph_; }
  const Partition& partition() const noexcept { return partition_; }
  std::size_t n_areas() const noexcept { return graph_.n_areas(); }
  std::size_t n_subregions() const noexcept { return parts_.size(); }
  const std::vector<SparseMatrix>& parts() const noexcept { return parts_; }
  const std::vector<std::vector<std::size_t>>& components() const noexcept { return components_; }
  std::size_t rank_deficiency() const noexcept { return components_.size(); }
  double scale() const noexcept { return scale_; }

  /// sum_k tau_k B_k. Taus must be positive and of length P.
  SparseMatrix combine(const VectorXd& taus) const;

 private:
  AdjacencyGraph graph_;
  Partition partition_;
  std::vector<SparseMatrix> parts_;
  std::vector<std::vector<std::size_t>> components_;
  double scale_ = 1.0;
};

/// Q(tau) together with the structure it was assembled from.
class FbesagPrecision {
 public:
  FbesagPrecision(std::shared_ptr<const FbesagStructure> structure, VectorXd taus);

  const SparseMatrix& q() const noexcept { return q_; }
  const VectorXd& taus() const noexcept { return taus_; }
  const FbesagStructure& structure() const noexcept { return *structure_; }
  std::shared_ptr<const FbesagStructure> shared_structure() const noexcept { return structure_; }
  const std::vector<SparseMatrix>& structure_parts() const noexcept { return structure_->parts(); }
  std::size_t rank_deficiency() const noexcept { return structure_->rank_deficiency(); }
  std::size_t size() const noexcept { return structure_->n_areas(); }

 private:
  std::shared_ptr<const FbesagStructure> structure_;
  VectorXd taus_;
  SparseMatrix q_;
};

FbesagPrecision build_precision(const AdjacencyGraph& graph, const Partition& partition,
                                const VectorXd& taus);

/// Stationary Besag precision tau (D - W), assembled directly from the graph.
SparseMatrix besag_precision(const AdjacencyGraph& graph, double tau);

/// Circulant first-order random walk on a cycle of n >= 3 nodes.
FbesagPrecision cyclic_rw1_precision(std::size_t n, double tau);

struct ConditionalParams {
  double mean;
  double precision;
};

/// Full conditional of x_i given the rest. Throws for an area without neighbours.
ConditionalParams conditional_params(std::size_t i, const VectorXd& x,
                                     const FbesagPrecision& precision);

/// log of the generalised determinant (product of the non-zero eigenvalues).
/// Uses the matrix-tree theorem: per connected component, n_c times any
/// principal cofactor, evaluated by sparse Cholesky.
double log_generalized_determinant(const FbesagPrecision& precision);

/// Same quantity by dense eigendecomposition, discarding the `rank_deficiency`
/// smallest eigenvalues.
double dense_log_generalized_determinant(const MatrixXd& q, std::size_t rank_deficiency);

/// Improper IGMRF log-density:
/// -(N - c)/2 log(2 pi) + 1/2 log|Q|* - 1/2 x'Qx.
double log_density(const VectorXd& x, const FbesagPrecision& precision);

/// -1/2 x'Qx.
double quadratic_term(const VectorXd& x, const FbesagPrecision& precision);

/// Linear constraints A x = e.
struct ConstraintSet {
  MatrixXd a;
  VectorXd e;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(a.rows()); }
  /// max_r |A_r x - e_r|
  double violation(const VectorXd& x) const;
};

/// One sum-to-zero row per connected component.
ConstraintSet sum_to_zero_constraints(const FbesagPrecision& precision);
ConstraintSet sum_to_zero_constraints(const std::vector<std::vector<std::size_t>>& components,
                                      std::size_t n);

struct SamplerOptions {
  double jitter = 1e-8;      // relative to mean(diag Q)
  double max_jitter = 1e-4;  // escalation stops here
};

/// Draw from N(0, Q^-1) restricted to A x = e. Q is jittered until it factors;
/// the draw is corrected by conditioning by kriging.
VectorXd sample_field(const FbesagPrecision& precision, const ConstraintSet& constraints,
                      std::uint64_t seed, const SamplerOptions& options = {});

/// `row col value` lines, 0-based, sorted by (row, col), 17 significant digits.
void write_triplets(const SparseMatrix& m, std::ostream& out);

}  // namespace fbesag
