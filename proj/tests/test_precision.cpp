#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fbesag/graph.hpp"
#include "fbesag/precision.hpp"
#include "oracles.hpp"

using namespace fbesag;

namespace {

AdjacencyGraph five_area() {
  return AdjacencyGraph(5, {{0, 1}, {0, 3}, {1, 2}, {1, 3}, {2, 3}, {3, 4}});
}

// Two-region matrix written out entry by entry for sub-regions {1,2,3} and {4,5}.
MatrixXd q_two_regions(double t1, double t2) {
  MatrixXd q(5, 5);
  const double h = 0.5;
  q << 1.5 * t1 + h * t2, -t1, 0, -h * t1 - h * t2, 0,
      -t1, 2.5 * t1 + h * t2, -t1, -h * t1 - h * t2, 0,
      0, -t1, 1.5 * t1 + h * t2, -h * t1 - h * t2, 0,
      -h * t1 - h * t2, -h * t1 - h * t2, -h * t1 - h * t2, 1.5 * t1 + 2.5 * t2, -t2,
      0, 0, 0, -t2, t2;
  return q;
}

MatrixXd q_one_region(double t) {
  MatrixXd q(5, 5);
  q << 2, -1, 0, -1, 0,
      -1, 3, -1, -1, 0,
      0, -1, 2, -1, 0,
      -1, -1, -1, 4, -1,
      0, 0, 0, -1, 1;
  return t * q;
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

AdjacencyGraph random_connected_graph(std::mt19937_64& rng, std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    edges.emplace_back(parent(rng), i);
  }
  std::bernoulli_distribution extra(0.15);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (extra(rng)) edges.emplace_back(i, j);
  return AdjacencyGraph(n, edges);
}

Partition random_partition(std::mt19937_64& rng, const AdjacencyGraph& g, int max_p) {
  std::uniform_int_distribution<int> label(0, max_p - 1);
  std::vector<int> labels(g.n_areas());
  for (auto& l : labels) l = label(rng);
  return build_partition(g, labels);
}

}  // namespace

TEST_CASE("two-region five-area matrix") {
  const auto g = five_area();
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  for (auto [t1, t2] : {std::pair{1.0, 1.0}, {1.0, 2.0}, {0.3, 5.0}}) {
    const MatrixXd q(build_precision(g, p, vec({t1, t2})).q());
    CHECK(max_abs(q - q_two_regions(t1, t2)) < 1e-12);
  }
  const MatrixXd q(build_precision(g, p, vec({1.0, 2.0})).q());
  CHECK(q(3, 3) == doctest::Approx(1.5 + 5.0));
  CHECK(q(0, 3) == doctest::Approx(-1.5));
}

TEST_CASE("one-region five-area matrix") {
  const auto g = five_area();
  for (double t : {1.0, 0.4, 7.5}) {
    const MatrixXd q(build_precision(g, single_region(g), vec({t})).q());
    CHECK(max_abs(q - q_one_region(t)) < 1e-12);
    CHECK(max_abs(MatrixXd(besag_precision(g, t)) - q_one_region(t)) < 1e-12);
  }
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  const MatrixXd equal(build_precision(g, p, vec({1.7, 1.7})).q());
  CHECK(max_abs(equal - q_one_region(1.7)) < 1e-12);
}

TEST_CASE("equal precisions reduce to the stationary matrix") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> c_dist(0.05, 20.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto g = random_connected_graph(rng, 3 + static_cast<std::size_t>(rep) % 20);
    const auto p = random_partition(rng, g, 4);
    const double c = c_dist(rng);
    const VectorXd taus = VectorXd::Constant(static_cast<Eigen::Index>(p.n_subregions()), c);
    const MatrixXd q(build_precision(g, p, taus).q());
    const MatrixXd s(build_precision(g, single_region(g), vec({c})).q());
    CHECK(max_abs(q - s) < 1e-12 * std::max(1.0, c));
  }
}

TEST_CASE("matrix agrees with the edge rule and its invariants") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> t_dist(0.1, 10.0);
  for (int rep = 0; rep < 30; ++rep) {
    const auto g = random_connected_graph(rng, 4 + static_cast<std::size_t>(rep));
    const auto p = random_partition(rng, g, 5);
    VectorXd taus(static_cast<Eigen::Index>(p.n_subregions()));
    for (auto& t : taus) t = t_dist(rng);
    const auto prec = build_precision(g, p, taus);
    const MatrixXd q(prec.q());
    CHECK(max_abs(q - oracle::edge_rule_precision(g, p.labels(), taus)) < 1e-12);
    CHECK(max_abs(q - q.transpose()) == 0.0);

    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      CHECK(std::abs(q.row(i).sum()) <= 1e-12 * std::max(1.0, q(i, i)));
      CHECK(q(i, i) >= 0);
      for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (i != j) CHECK(q(i, j) <= 0);
    }

    // Q(tau) - Q(tau') = sum_k (tau_k - tau'_k) B_k, and Q = sum_k tau_k B_k.
    VectorXd other(taus.size());
    for (auto& t : other) t = t_dist(rng);
    MatrixXd lin = MatrixXd::Zero(q.rows(), q.cols());
    MatrixXd sum = MatrixXd::Zero(q.rows(), q.cols());
    for (std::size_t k = 0; k < prec.structure_parts().size(); ++k) {
      const MatrixXd b(prec.structure_parts()[k]);
      const auto kk = static_cast<Eigen::Index>(k);
      lin += (taus[kk] - other[kk]) * b;
      sum += taus[kk] * b;
    }
    const MatrixXd q_other(build_precision(g, p, other).q());
    CHECK(max_abs(q - q_other - lin) < 1e-12 * std::max(1.0, max_abs(q)));
    CHECK(max_abs(q - sum) < 1e-12 * std::max(1.0, max_abs(q)));

    // Null space and positive semidefiniteness.
    CHECK((q * VectorXd::Ones(q.rows())).cwiseAbs().maxCoeff() < 1e-11);
    std::normal_distribution<double> z;
    for (int s = 0; s < 40; ++s) {
      VectorXd x(q.rows());
      for (auto& v : x) v = z(rng);
      CHECK(x.dot(q * x) >= -1e-10);
    }
  }
}

TEST_CASE("quadratic form equals the pairwise difference sum") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  const auto g = grid_graph(6, 6);
  const auto p = quadrant_partition(6, 6, {3}, {2, 4});
  VectorXd taus(6);
  for (Eigen::Index k = 0; k < 6; ++k) taus[k] = 0.5 + static_cast<double>(k);
  const auto prec = build_precision(g, p, taus);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd x(36);
    for (auto& v : x) v = z(rng);
    double pairwise = 0;
    for (auto [i, j] : g.edges()) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      pairwise += (taus[static_cast<Eigen::Index>(p.label(i))] +
                   taus[static_cast<Eigen::Index>(p.label(j))]) *
                  (x[a] - x[b]) * (x[a] - x[b]);
    }
    CHECK(quadratic_term(x, prec) == doctest::Approx(-0.25 * pairwise).epsilon(1e-12));
    CHECK(std::abs(quadratic_term(x, prec) + 0.25 * pairwise) < 1e-10);
  }
}

TEST_CASE("bad precisions are rejected") {
  const auto g = five_area();
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  CHECK_THROWS_AS(build_precision(g, p, vec({1.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(build_precision(g, p, vec({1.0, -2.0})), std::invalid_argument);
  CHECK_THROWS_AS(build_precision(g, p, vec({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(build_precision(g, p, vec({1.0, std::nan("")})), std::invalid_argument);
}

TEST_CASE("full conditionals") {
  const auto g = five_area();
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  const auto prec = build_precision(g, p, vec({1.0, 2.0}));
  CHECK(conditional_params(3, VectorXd::Zero(5), prec).precision == doctest::Approx(1.5 + 5.0));

  const auto stat = build_precision(g, single_region(g), vec({3.0}));
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(conditional_params(i, VectorXd::Constant(5, 2.5), stat).mean == doctest::Approx(2.5));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  auto check_dense = [&](const FbesagPrecision& pr) {
    const MatrixXd q(pr.q());
    VectorXd x(q.rows());
    for (auto& v : x) v = z(rng);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      double s = 0;
      for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (j != i) s += q(i, j) * x[j];
      const auto c = conditional_params(static_cast<std::size_t>(i), x, pr);
      CHECK(std::abs(c.precision - q(i, i)) < 1e-12);
      CHECK(std::abs(c.mean + s / q(i, i)) < 1e-12);
    }
  };
  check_dense(prec);
  const auto grid = grid_graph(6, 6);
  const auto grid_p = random_partition(rng, grid, 3);
  VectorXd taus(static_cast<Eigen::Index>(grid_p.n_subregions()));
  for (Eigen::Index k = 0; k < taus.size(); ++k) taus[k] = 0.7 + 1.3 * static_cast<double>(k);
  check_dense(build_precision(grid, grid_p, taus));

  const AdjacencyGraph lonely(3, {{0, 1}});
  const auto lp = build_precision(lonely, single_region(lonely), vec({1.0}));
  CHECK_THROWS_AS(conditional_params(2, VectorXd::Zero(3), lp), std::domain_error);
  CHECK_THROWS_AS(conditional_params(7, VectorXd::Zero(3), lp), std::out_of_range);
}

TEST_CASE("improper log density") {
  const auto g = five_area();
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  const auto prec = build_precision(g, p, vec({1.0, 2.0}));
  const VectorXd e0 = VectorXd::Unit(5, 0);
  CHECK(quadratic_term(e0, prec) == doctest::Approx(-(0.75 * 1 + 0.25 * 2)));

  const double at_zero = log_density(VectorXd::Zero(5), prec);
  CHECK(log_density(VectorXd::Constant(5, 3.3), prec) == doctest::Approx(at_zero));
  CHECK(quadratic_term(VectorXd::Constant(5, 3.3), prec) == doctest::Approx(0.0));
  const double expected = -2.0 * std::log(2 * std::numbers::pi) +
                          0.5 * dense_log_generalized_determinant(MatrixXd(prec.q()), 1);
  CHECK(at_zero == doctest::Approx(expected).epsilon(1e-12));

  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  VectorXd x(5);
  for (auto& v : x) v = z(rng);
  const auto one = build_precision(g, single_region(g), vec({1.3}));
  const auto two = build_precision(g, single_region(g), vec({2.6}));
  CHECK(quadratic_term(x, two) == doctest::Approx(2 * quadratic_term(x, one)).epsilon(1e-12));
  CHECK(log_generalized_determinant(two) - log_generalized_determinant(one) ==
        doctest::Approx(4 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("generalised determinant matches dense eigenvalues") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> t_dist(0.1, 10.0);
  for (int rep = 0; rep < 25; ++rep) {
    auto g = random_connected_graph(rng, 3 + static_cast<std::size_t>(rep));
    if (rep % 3 == 0) {  // glue a second component on
      auto edges = g.edges();
      const auto n = g.n_areas();
      edges.emplace_back(n, n + 1);
      edges.emplace_back(n + 1, n + 2);
      g = AdjacencyGraph(n + 3, edges);
    }
    const auto p = random_partition(rng, g, 3);
    VectorXd taus(static_cast<Eigen::Index>(p.n_subregions()));
    for (auto& t : taus) t = t_dist(rng);
    const auto prec = build_precision(g, p, taus);
    CHECK(prec.rank_deficiency() == connected_components(g).size());
    const double dense = dense_log_generalized_determinant(MatrixXd(prec.q()), prec.rank_deficiency());
    CHECK(log_generalized_determinant(prec) == doctest::Approx(dense).epsilon(1e-9));
  }
}

TEST_CASE("cyclic random walk") {
  MatrixXd three(3, 3);
  three << 2, -1, -1, -1, 2, -1, -1, -1, 2;
  CHECK(max_abs(MatrixXd(cyclic_rw1_precision(3, 1.0).q()) - three) == 0.0);

  const MatrixXd twelve(cyclic_rw1_precision(12, 2.0).q());
  for (Eigen::Index i = 0; i < 12; ++i) CHECK(twelve(i, i) == 4.0);
  CHECK(twelve(0, 11) == -2.0);
  CHECK(twelve(11, 0) == -2.0);
  CHECK(cyclic_rw1_precision(12, 2.0).rank_deficiency() == 1);
  CHECK((twelve * VectorXd::Ones(12)).cwiseAbs().maxCoeff() == 0.0);

  for (std::size_t n : {3u, 4u, 7u, 12u, 25u}) {
    const double tau = 0.37 * static_cast<double>(n);
    const MatrixXd q(cyclic_rw1_precision(n, tau).q());
    VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(q).eigenvalues();
    std::vector<double> want;
    for (std::size_t k = 0; k < n; ++k)
      want.push_back(2 * tau * (1 - std::cos(2 * std::numbers::pi * static_cast<double>(k) /
                                             static_cast<double>(n))));
    std::sort(want.begin(), want.end());
    for (std::size_t k = 0; k < n; ++k)
      CHECK(std::abs(ev[static_cast<Eigen::Index>(k)] - want[k]) < 1e-10 * tau);
  }
  CHECK_THROWS_AS(cyclic_rw1_precision(2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(cyclic_rw1_precision(5, 0.0), std::invalid_argument);
}

TEST_CASE("constrained sampler") {
  const auto g = five_area();
  const auto p = build_partition(g, std::vector<int>{0, 0, 0, 1, 1});
  const auto prec = build_precision(g, p, vec({1.0, 2.0}));
  const auto a = sum_to_zero_constraints(prec);
  REQUIRE(a.rows() == 1);

  const VectorXd first = sample_field(prec, a, 42);
  CHECK(first == sample_field(prec, a, 42));
  CHECK(first != sample_field(prec, a, 43));
  CHECK(std::abs(first.sum()) < 1e-10);

  const std::size_t draws = 50000;
  MatrixXd cov = MatrixXd::Zero(5, 5);
  for (std::size_t s = 0; s < draws; ++s) {
    const VectorXd x = sample_field(prec, a, 1000 + s);
    CHECK_MESSAGE(a.violation(x) < 1e-10, "draw " << s);
    cov += x * x.transpose();
  }
  cov /= static_cast<double>(draws);
  const MatrixXd target = oracle::pseudo_inverse(MatrixXd(prec.q()));
  CHECK((cov - target).norm() / target.norm() < 0.05);

  // Two components: one zero-sum row each.
  const AdjacencyGraph split(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}});
  const auto sp = build_precision(split, single_region(split), vec({2.0}));
  const auto sa = sum_to_zero_constraints(sp);
  REQUIRE(sa.rows() == 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const VectorXd x = sample_field(sp, sa, seed);
    CHECK(std::abs(x.head(3).sum()) < 1e-10);
    CHECK(std::abs(x.tail(3).sum()) < 1e-10);
  }
}

TEST_CASE("unit-variance scaling") {
  const auto g = grid_graph(5, 4);
  const auto p = quadrant_partition(5, 4, {2}, {});
  auto structure = std::make_shared<const FbesagStructure>(g, p, true);
  CHECK(structure->scale() > 0);
  const MatrixXd q(structure->combine(VectorXd::Ones(2)));
  const VectorXd var = oracle::pseudo_inverse(q).diagonal();
  CHECK(std::exp(var.array().log().mean()) == doctest::Approx(1.0).epsilon(1e-6));

  const FbesagPrecision plain = build_precision(g, p, VectorXd::Ones(2));
  CHECK(max_abs(q - structure->scale() * MatrixXd(plain.q())) < 1e-12);
}

TEST_CASE("triplet export") {
  const auto prec = cyclic_rw1_precision(3, 1.5);
  std::ostringstream out;
  write_triplets(prec.q(), out);
  CHECK(out.str() ==
        "0 0 3\n0 1 -1.5\n0 2 -1.5\n1 0 -1.5\n1 1 3\n1 2 -1.5\n2 0 -1.5\n2 1 -1.5\n2 2 3\n");
}
