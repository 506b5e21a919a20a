#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>

#include "fbesag/precision.hpp"

namespace fbesag::detail {

/// Sparse LLT with a cached symbolic analysis. `factorize` may be called
/// repeatedly for matrices sharing the pattern given to `analyze`.
class SparseCholesky {
 public:
  void analyze(const SparseMatrix& m) {
    llt_.analyzePattern(m);
    analyzed_ = true;
  }

  bool factorize(const SparseMatrix& m) {
    if (!analyzed_) analyze(m);
    llt_.factorize(m);
    return llt_.info() == Eigen::Success;
  }

  /// Factor m + jitter * mean(diag m) * I, escalating x10 from `rel_jitter` to
  /// `max_rel_jitter`. Returns the absolute jitter used.
  double factorize_jittered(const SparseMatrix& m, double rel_jitter, double max_rel_jitter) {
    const double scale = std::max(m.diagonal().mean(), 1e-300);
    SparseMatrix id(m.rows(), m.cols());
    id.setIdentity();
    for (double rel = rel_jitter; rel <= max_rel_jitter * (1 + 1e-12); rel *= 10) {
      SparseMatrix mj = m + (rel * scale) * id;
      if (!analyzed_) analyze(mj);
      if (factorize(mj)) return rel * scale;
    }
    throw NumericalError("sparse Cholesky failed after jitter escalation to " +
                         std::to_string(max_rel_jitter));
  }

  double log_determinant() const {
    return 2.0 * llt_.matrixL().nestedExpression().diagonal().array().log().sum();
  }

  template <class Rhs>
  auto solve(const Rhs& b) const {
    return llt_.solve(b);
  }

  /// x ~ N(0, M^-1) from standard normal z.
  VectorXd sample(const VectorXd& z) const {
    VectorXd y = llt_.matrixU().solve(z);
    return llt_.permutationPinv() * y;
  }

 private:
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  bool analyzed_ = false;
};

/// Conditioning by kriging: x - S A' (A S A')^-1 (A x - e) where S = M^-1,
/// followed by a Euclidean projection that removes rounding residue.
inline VectorXd krige(const ConstraintSet& c, const VectorXd& x, const MatrixXd& s_at,
                      const Eigen::LDLT<MatrixXd>& a_s_at) {
  if (c.rows() == 0) return x;
  VectorXd out = x - s_at * a_s_at.solve(c.a * x - c.e);
  VectorXd r = c.a * out - c.e;
  MatrixXd aat = c.a * c.a.transpose();
  out -= c.a.transpose() * aat.ldlt().solve(r);
  return out;
}

}  // namespace fbesag::detail
