#include "fbesag/precision.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>

#include "cholesky.hpp"

namespace fbesag {

namespace {

void check_taus(const VectorXd& taus, std::size_t p) {
  if (static_cast<std::size_t>(taus.size()) != p)
    throw std::invalid_argument("expected " + std::to_string(p) + " precision parameters, got " +
                                std::to_string(taus.size()));
  for (Eigen::Index k = 0; k < taus.size(); ++k)
    if (!(taus[k] > 0) || !std::isfinite(taus[k]))
      throw std::invalid_argument("precision parameter " + std::to_string(k + 1) +
                                  " must be positive and finite");
}

// Diagonal of the covariance of N(0, M^-1) conditioned on A x = 0.
VectorXd constrained_marginal_variances(const SparseMatrix& m, const ConstraintSet& c) {
  detail::SparseCholesky chol;
  chol.factorize_jittered(m, 1e-8, 1e-4);
  const auto n = m.rows();
  MatrixXd s_at = chol.solve(MatrixXd(c.a.transpose()));
  Eigen::LDLT<MatrixXd> a_s_at(c.a * s_at);
  VectorXd var(n);
  VectorXd unit = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    unit[i] = 1.0;
    VectorXd col = chol.solve(unit);
    unit[i] = 0.0;
    const VectorXd w = s_at.row(i).transpose();
    var[i] = col[i] - w.dot(a_s_at.solve(w));
  }
  return var;
}

}  // namespace

FbesagStructure::FbesagStructure(AdjacencyGraph graph, Partition partition,
                                 bool scale_to_unit_variance)
    : graph_(std::move(graph)), partition_(std::move(partition)) {
  if (partition_.n_areas() != graph_.n_areas())
    throw std::invalid_argument("partition covers " + std::to_string(partition_.n_areas()) +
                                " areas but graph has " + std::to_string(graph_.n_areas()));
  const auto n = static_cast<Eigen::Index>(graph_.n_areas());
  const auto P = partition_.n_subregions();
  std::vector<std::vector<Eigen::Triplet<double>>> trips(P);
  for (const auto& [i, j] : graph_.edges()) {
    const auto k = partition_.label(i);
    const auto l = partition_.label(j);
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    // each endpoint's sub-region carries half of the edge weight
    for (auto r : {k, l}) {
      trips[r].emplace_back(ii, ii, 0.5);
      trips[r].emplace_back(jj, jj, 0.5);
      trips[r].emplace_back(ii, jj, -0.5);
      trips[r].emplace_back(jj, ii, -0.5);
    }
  }
  parts_.reserve(P);
  for (auto& t : trips) {
    SparseMatrix b(n, n);
    b.setFromTriplets(t.begin(), t.end());
    b.makeCompressed();
    parts_.push_back(std::move(b));
  }
  components_ = connected_components(graph_);

  if (scale_to_unit_variance) {
    SparseMatrix base = parts_.front();
    for (std::size_t k = 1; k < P; ++k) base += parts_[k];
    const auto c = sum_to_zero_constraints(components_, graph_.n_areas());
    const VectorXd var = constrained_marginal_variances(base, c);
    double log_sum = 0;
    std::size_t count = 0;
    for (const auto& comp : components_) {
      if (comp.size() < 2) continue;
      for (auto i : comp) {
        log_sum += std::log(var[static_cast<Eigen::Index>(i)]);
        ++count;
      }
    }
    if (count > 0) {
      scale_ = std::exp(log_sum / static_cast<double>(count));
      for (auto& b : parts_) b *= scale_;
    }
  }
}

SparseMatrix FbesagStructure::combine(const VectorXd& taus) const {
  check_taus(taus, parts_.size());
  SparseMatrix q = taus[0] * parts_[0];
  for (std::size_t k = 1; k < parts_.size(); ++k) q += taus[static_cast<Eigen::Index>(k)] * parts_[k];
  q.makeCompressed();
  return q;
}

FbesagPrecision::FbesagPrecision(std::shared_ptr<const FbesagStructure> structure, VectorXd taus)
    : structure_(std::move(structure)), taus_(std::move(taus)), q_(structure_->combine(taus_)) {}

FbesagPrecision build_precision(const AdjacencyGraph& graph, const Partition& partition,
                                const VectorXd& taus) {
  check_taus(taus, partition.n_subregions());
  return FbesagPrecision(std::make_shared<const FbesagStructure>(graph, partition), taus);
}

SparseMatrix besag_precision(const AdjacencyGraph& graph, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("tau must be positive");
  const auto n = static_cast<Eigen::Index>(graph.n_areas());
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t i = 0; i < graph.n_areas(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    t.emplace_back(ii, ii, tau * static_cast<double>(graph.degree(i)));
    for (auto j : graph.neighbors(i)) t.emplace_back(ii, static_cast<Eigen::Index>(j), -tau);
  }
  SparseMatrix q(n, n);
  q.setFromTriplets(t.begin(), t.end());
  q.makeCompressed();
  return q;
}

FbesagPrecision cyclic_rw1_precision(std::size_t n, double tau) {
  if (n < 3) throw std::invalid_argument("cyclic RW1 needs at least 3 time points");
  if (!(tau > 0)) throw std::invalid_argument("tau must be positive");
  std::vector<Edge> edges;
  for (std::size_t t = 0; t < n; ++t) edges.emplace_back(t, (t + 1) % n);
  AdjacencyGraph cycle(n, edges);
  auto part = single_region(cycle);
  return build_precision(cycle, part, VectorXd::Constant(1, tau));
}

ConditionalParams conditional_params(std::size_t i, const VectorXd& x,
                                     const FbesagPrecision& precision) {
  const auto& s = precision.structure();
  if (i >= s.n_areas()) throw std::out_of_range("area index out of range");
  if (static_cast<std::size_t>(x.size()) != s.n_areas())
    throw std::invalid_argument("field length does not match the number of areas");
  const auto& g = s.graph();
  const auto& part = s.partition();
  if (g.degree(i) == 0)
    throw std::domain_error("area " + std::to_string(i) +
                            " has no neighbours; its conditional is undefined");
  const auto& tau = precision.taus();
  const double sc = s.scale();
  const auto k = part.label(i);
  double tau_xi = static_cast<double>(g.degree(i)) * tau[static_cast<Eigen::Index>(k)];
  for (std::size_t l = 0; l < part.n_subregions(); ++l)
    tau_xi += static_cast<double>(part.cross_count(i, l)) * tau[static_cast<Eigen::Index>(l)];
  tau_xi *= 0.5 * sc;
  double weighted = 0;
  for (auto j : g.neighbors(i))
    weighted += 0.5 * sc *
                (tau[static_cast<Eigen::Index>(k)] + tau[static_cast<Eigen::Index>(part.label(j))]) *
                x[static_cast<Eigen::Index>(j)];
  return {weighted / tau_xi, tau_xi};
}

double log_generalized_determinant(const FbesagPrecision& precision) {
  const auto& comps = precision.structure().components();
  const auto n = static_cast<Eigen::Index>(precision.size());
  // drop one vertex per component; the grounded Laplacian is positive definite
  std::vector<Eigen::Index> keep_index(static_cast<std::size_t>(n), -1);
  std::vector<bool> dropped(static_cast<std::size_t>(n), false);
  double log_sizes = 0;
  for (const auto& c : comps) {
    dropped[c.back()] = true;
    log_sizes += std::log(static_cast<double>(c.size()));
  }
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!dropped[static_cast<std::size_t>(i)]) keep_index[static_cast<std::size_t>(i)] = m++;
  if (m == 0) return log_sizes;
  std::vector<Eigen::Triplet<double>> t;
  const auto& q = precision.q();
  for (Eigen::Index col = 0; col < q.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(q, col); it; ++it) {
      const auto r = keep_index[static_cast<std::size_t>(it.row())];
      const auto c = keep_index[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  SparseMatrix reduced(m, m);
  reduced.setFromTriplets(t.begin(), t.end());
  detail::SparseCholesky chol;
  if (!chol.factorize(reduced))
    throw NumericalError("grounded precision is not positive definite");
  return log_sizes + chol.log_determinant();
}

double dense_log_generalized_determinant(const MatrixXd& q, std::size_t rank_deficiency) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(q, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();  // ascending
  double s = 0;
  for (Eigen::Index i = static_cast<Eigen::Index>(rank_deficiency); i < ev.size(); ++i)
    s += std::log(ev[i]);
  return s;
}

double quadratic_term(const VectorXd& x, const FbesagPrecision& precision) {
  if (static_cast<std::size_t>(x.size()) != precision.size())
    throw std::invalid_argument("field length does not match the number of areas");
  return -0.5 * x.dot(precision.q() * x);
}

double log_density(const VectorXd& x, const FbesagPrecision& precision) {
  const double dof =
      static_cast<double>(precision.size()) - static_cast<double>(precision.rank_deficiency());
  return -0.5 * dof * std::log(2 * std::numbers::pi) +
         0.5 * log_generalized_determinant(precision) + quadratic_term(x, precision);
}

double ConstraintSet::violation(const VectorXd& x) const {
  if (a.rows() == 0) return 0.0;
  return (a * x - e).cwiseAbs().maxCoeff();
}

ConstraintSet sum_to_zero_constraints(const std::vector<std::vector<std::size_t>>& components,
                                      std::size_t n) {
  ConstraintSet c;
  c.a = MatrixXd::Zero(static_cast<Eigen::Index>(components.size()), static_cast<Eigen::Index>(n));
  c.e = VectorXd::Zero(static_cast<Eigen::Index>(components.size()));
  for (std::size_t r = 0; r < components.size(); ++r)
    for (auto i : components[r]) c.a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = 1.0;
  return c;
}

ConstraintSet sum_to_zero_constraints(const FbesagPrecision& precision) {
  return sum_to_zero_constraints(precision.structure().components(), precision.size());
}

VectorXd sample_field(const FbesagPrecision& precision, const ConstraintSet& constraints,
                      std::uint64_t seed, const SamplerOptions& options) {
  const auto n = static_cast<Eigen::Index>(precision.size());
  if (constraints.rows() > 0 && constraints.a.cols() != n)
    throw std::invalid_argument("constraint matrix has the wrong number of columns");
  detail::SparseCholesky chol;
  chol.factorize_jittered(precision.q(), options.jitter, options.max_jitter);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  VectorXd x = chol.sample(z);
  if (constraints.rows() == 0) return x;
  MatrixXd s_at = chol.solve(MatrixXd(constraints.a.transpose()));
  Eigen::LDLT<MatrixXd> a_s_at(constraints.a * s_at);
  return detail::krige(constraints, x, s_at, a_s_at);
}

void write_triplets(const SparseMatrix& m, std::ostream& out) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index col = 0; col < m.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  const auto old = out.precision(17);
  for (const auto& e : t) out << e.row() << ' ' << e.col() << ' ' << e.value() << '\n';
  out.precision(old);
}

}  // namespace fbesag
