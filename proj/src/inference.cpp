#include "fbesag/inference.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <functional>
#include <limits>
#include <set>

#include "cholesky.hpp"
#include "fbesag/optimize.hpp"
#include "fbesag/rng.hpp"

namespace fbesag {

// ---------------------------------------------------------------- ModelSpec

ModelSpec ModelSpec::create(const AdjacencyGraph& graph, const Partition& partition,
                            std::vector<Observation> observations, std::size_t n_time) {
  ModelSpec spec;
  spec.spatial = std::make_shared<const FbesagStructure>(graph, partition);
  spec.n_time = n_time;
  spec.observations = std::move(observations);
  spec.spatial_prior = spec.spatial_prior.with_p(partition.n_subregions());
  spec.validate();
  return spec;
}

std::vector<std::string> ModelSpec::theta_names() const {
  std::vector<std::string> out;
  const auto& names = spatial->partition().names();
  for (std::size_t k = 0; k < n_subregions(); ++k) out.push_back("log_tau[" + names[k] + "]");
  if (temporal()) out.emplace_back("log_tau_kappa");
  return out;
}

ModelSpec ModelSpec::stationary() const {
  ModelSpec out = *this;
  out.spatial = std::make_shared<const FbesagStructure>(spatial->graph(),
                                                        single_region(spatial->graph()));
  out.spatial_prior = spatial_prior.with_p(1);
  return out;
}

ModelSpec ModelSpec::with_sigma_gamma(double sigma_gamma) const {
  ModelSpec out = *this;
  out.spatial_prior = spatial_prior.with_sigma_gamma(sigma_gamma);
  return out;
}

void ModelSpec::validate() const {
  if (!spatial) throw std::invalid_argument("model has no spatial structure");
  if (n_time > 0 && n_time < 3)
    throw std::invalid_argument("the cyclic temporal effect needs at least 3 periods");
  if (!(intercept_precision > 0)) throw std::invalid_argument("intercept precision must be > 0");
  if (observations.empty()) throw std::invalid_argument("no observations");
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    const auto where = "observation " + std::to_string(i + 1) + ": ";
    if (o.area >= spatial->n_areas())
      throw std::invalid_argument(where + "area index out of range");
    if (temporal() && !o.time) throw std::invalid_argument(where + "missing time index");
    if (!temporal() && o.time) throw std::invalid_argument(where + "time given without a temporal effect");
    if (o.time && *o.time >= n_time) throw std::invalid_argument(where + "time index out of range");
    if (!(o.offset > 0) || !std::isfinite(o.offset))
      throw std::invalid_argument(where + "offset must be positive");
  }
}

double log_prior_theta(const ModelSpec& spec, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != spec.n_theta())
    throw std::invalid_argument("theta has the wrong length");
  const auto P = static_cast<Eigen::Index>(spec.n_subregions());
  double out =
      log_joint_pc_prior(VectorXd(theta.head(P)), spec.spatial_prior.with_p(spec.n_subregions()));
  if (spec.temporal())
    out += log_pc_prior_univariate(theta[P], lambda_from(spec.temporal_u, spec.temporal_alpha));
  return out;
}

// ---------------------------------------------------------------- engine

struct LaplaceEngine::Impl {
  ModelSpec spec;
  Eigen::Index n = 0;  // latent dimension
  Eigen::Index n_areas = 0;
  SparseMatrix design;  // observations x latent
  VectorXd y, log_offset;
  double log_factorial_sum = 0;

  std::shared_ptr<const FbesagStructure> rw1;
  std::vector<SparseMatrix> spatial_parts;  // embedded in latent coordinates
  SparseMatrix rw1_part;
  ConstraintSet constraints;
  double log_det_aat = 0;
  VectorXd aat_diag;
  std::vector<std::size_t> stabilised_rows;

  // fixed pattern of the stabilised Hessian and value scatter maps
  SparseMatrix pattern;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> spatial_scatter;
  std::vector<std::pair<Eigen::Index, double>> rw1_scatter;
  Eigen::Index intercept_pos = 0;
  std::vector<std::vector<Eigen::Index>> obs_scatter;
  std::vector<std::pair<Eigen::Index, double>> stab_scatter;
  std::vector<Eigen::Index> diag_pos;

  detail::SparseCholesky chol;
  VectorXd warm;

  explicit Impl(ModelSpec s) : spec(std::move(s)) {
    spec.validate();
    n_areas = static_cast<Eigen::Index>(spec.spatial->n_areas());
    n = static_cast<Eigen::Index>(spec.n_latent());
    const auto T = static_cast<Eigen::Index>(spec.n_time);
    const auto m = static_cast<Eigen::Index>(spec.observations.size());

    std::vector<Eigen::Triplet<double>> xt;
    y.resize(m);
    log_offset.resize(m);
    std::vector<bool> area_observed(static_cast<std::size_t>(n_areas), false);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& o = spec.observations[static_cast<std::size_t>(i)];
      xt.emplace_back(i, 0, 1.0);
      xt.emplace_back(i, 1 + static_cast<Eigen::Index>(o.area), 1.0);
      if (o.time) xt.emplace_back(i, 1 + n_areas + static_cast<Eigen::Index>(*o.time), 1.0);
      y[i] = static_cast<double>(o.count);
      log_offset[i] = std::log(o.offset);
      log_factorial_sum += std::lgamma(y[i] + 1.0);
      area_observed[o.area] = true;
    }
    design.resize(m, n);
    design.setFromTriplets(xt.begin(), xt.end());
    design.makeCompressed();

    auto embed = [&](const SparseMatrix& b, Eigen::Index offset) {
      std::vector<Eigen::Triplet<double>> t;
      for (Eigen::Index c = 0; c < b.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(b, c); it; ++it)
          t.emplace_back(it.row() + offset, it.col() + offset, it.value());
      SparseMatrix out(n, n);
      out.setFromTriplets(t.begin(), t.end());
      out.makeCompressed();
      return out;
    };
    for (const auto& b : spec.spatial->parts()) spatial_parts.push_back(embed(b, 1));
    if (T > 0) {
      rw1 = cyclic_rw1_precision(static_cast<std::size_t>(T), 1.0).shared_structure();
      rw1_part = embed(rw1->parts().front(), 1 + n_areas);
    }

    // constraints: one sum-to-zero row per spatial component, one for kappa
    const auto& comps = spec.spatial->components();
    const auto k = static_cast<Eigen::Index>(comps.size()) + (T > 0 ? 1 : 0);
    constraints.a = MatrixXd::Zero(k, n);
    constraints.e = VectorXd::Zero(k);
    aat_diag.resize(k);
    for (std::size_t r = 0; r < comps.size(); ++r) {
      bool observed = false;
      for (auto i : comps[r]) {
        constraints.a(static_cast<Eigen::Index>(r), 1 + static_cast<Eigen::Index>(i)) = 1.0;
        observed = observed || area_observed[i];
      }
      aat_diag[static_cast<Eigen::Index>(r)] = static_cast<double>(comps[r].size());
      // the likelihood is flat along a constant shift of an unobserved component
      if (!observed) stabilised_rows.push_back(r);
    }
    if (T > 0) {
      constraints.a.row(k - 1).segment(1 + n_areas, T).setOnes();
      aat_diag[k - 1] = static_cast<double>(T);
      // alpha + c and kappa - c leave eta unchanged
      stabilised_rows.push_back(static_cast<std::size_t>(k - 1));
    }
    log_det_aat = aat_diag.array().log().sum();

    build_pattern();
    warm = VectorXd::Zero(n);
    double total_y = y.sum();
    double total_phi = log_offset.array().exp().sum();
    warm[0] = std::log(std::max(total_y, 0.5) / total_phi);
  }

  void build_pattern() {
    std::set<std::pair<Eigen::Index, Eigen::Index>> pos;
    auto add_matrix = [&](const SparseMatrix& m) {
      for (Eigen::Index c = 0; c < m.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) pos.emplace(it.row(), it.col());
    };
    for (Eigen::Index i = 0; i < n; ++i) pos.emplace(i, i);
    for (const auto& b : spatial_parts) add_matrix(b);
    if (rw1) add_matrix(rw1_part);
    const SparseMatrix design_t = design.transpose();
    std::vector<std::vector<Eigen::Index>> obs_cols(static_cast<std::size_t>(design.rows()));
    for (Eigen::Index c = 0; c < design_t.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(design_t, c); it; ++it)
        obs_cols[static_cast<std::size_t>(c)].push_back(it.row());
    for (const auto& cols : obs_cols)
      for (auto a : cols)
        for (auto b : cols) pos.emplace(a, b);
    std::vector<std::vector<Eigen::Index>> stab_support;
    for (auto r : stabilised_rows) {
      std::vector<Eigen::Index> sup;
      for (Eigen::Index j = 0; j < n; ++j)
        if (constraints.a(static_cast<Eigen::Index>(r), j) != 0) sup.push_back(j);
      for (auto a : sup)
        for (auto b : sup) pos.emplace(a, b);
      stab_support.push_back(std::move(sup));
    }

    std::vector<Eigen::Triplet<double>> t;
    t.reserve(pos.size());
    for (const auto& [r, c] : pos) t.emplace_back(r, c, 0.0);
    pattern.resize(n, n);
    pattern.setFromTriplets(t.begin(), t.end());
    pattern.makeCompressed();

    auto locate = [&](Eigen::Index r, Eigen::Index c) {
      const auto* inner = pattern.innerIndexPtr();
      const auto begin = pattern.outerIndexPtr()[c];
      const auto end = pattern.outerIndexPtr()[c + 1];
      const auto* it = std::lower_bound(inner + begin, inner + end, static_cast<int>(r));
      return static_cast<Eigen::Index>(it - inner);
    };
    auto scatter_of = [&](const SparseMatrix& m) {
      std::vector<std::pair<Eigen::Index, double>> out;
      for (Eigen::Index c = 0; c < m.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m, c); it; ++it)
          out.emplace_back(locate(it.row(), it.col()), it.value());
      return out;
    };
    for (const auto& b : spatial_parts) spatial_scatter.push_back(scatter_of(b));
    if (rw1) rw1_scatter = scatter_of(rw1_part);
    intercept_pos = locate(0, 0);
    for (const auto& cols : obs_cols) {
      std::vector<Eigen::Index> p;
      for (auto a : cols)
        for (auto b : cols) p.push_back(locate(a, b));
      obs_scatter.push_back(std::move(p));
    }
    for (const auto& sup : stab_support)
      for (auto a : sup)
        for (auto b : sup) stab_scatter.emplace_back(locate(a, b), 1.0);
    diag_pos.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) diag_pos[static_cast<std::size_t>(i)] = locate(i, i);
    chol.analyze(pattern);
  }

  VectorXd taus(const VectorXd& theta) const { return theta.array().exp(); }

  SparseMatrix prior_precision(const VectorXd& theta) const {
    check_theta(theta);
    SparseMatrix q(n, n);
    std::vector<Eigen::Triplet<double>> t{{0, 0, spec.intercept_precision}};
    q.setFromTriplets(t.begin(), t.end());
    for (std::size_t k = 0; k < spatial_parts.size(); ++k)
      q += std::exp(theta[static_cast<Eigen::Index>(k)]) * spatial_parts[k];
    if (rw1) q += std::exp(theta[theta.size() - 1]) * rw1_part;
    q.makeCompressed();
    return q;
  }

  void check_theta(const VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) != spec.n_theta())
      throw std::invalid_argument("theta has length " + std::to_string(theta.size()) +
                                  ", model expects " + std::to_string(spec.n_theta()));
    if (!theta.allFinite()) throw std::invalid_argument("theta must be finite");
  }

  VectorXd eta(const VectorXd& z) const { return design * z + log_offset; }

  double log_likelihood(const VectorXd& z) const {
    const VectorXd e = eta(z);
    return (y.array() * e.array() - e.array().exp()).sum() - log_factorial_sum;
  }

  double objective(const VectorXd& z, const SparseMatrix& q) const {
    return -log_likelihood(z) + 0.5 * z.dot(q * z);
  }

  VectorXd gradient(const VectorXd& z, const SparseMatrix& q) const {
    const VectorXd mu = eta(z).array().exp();
    return q * z - design.transpose() * (y - mu);
  }

  /// Stabilised Hessian at weights w = phi e^eta.
  void assemble(const VectorXd& theta, const VectorXd& w, SparseMatrix& h) const {
    h = pattern;
    double* v = h.valuePtr();
    v[intercept_pos] += spec.intercept_precision;
    for (std::size_t k = 0; k < spatial_scatter.size(); ++k) {
      const double tau = std::exp(theta[static_cast<Eigen::Index>(k)]);
      for (const auto& [p, val] : spatial_scatter[k]) v[p] += tau * val;
    }
    if (rw1) {
      const double tau = std::exp(theta[theta.size() - 1]);
      for (const auto& [p, val] : rw1_scatter) v[p] += tau * val;
    }
    for (std::size_t i = 0; i < obs_scatter.size(); ++i) {
      const double wi = w[static_cast<Eigen::Index>(i)];
      for (auto p : obs_scatter[i]) v[p] += wi;
    }
    if (!stab_scatter.empty()) {
      double trace = 0;
      for (auto p : diag_pos) trace += v[p];
      const double s = trace / static_cast<double>(n);
      for (const auto& [p, val] : stab_scatter) v[p] += s * val;
    }
  }

  VectorXd project(const VectorXd& z) const {
    if (constraints.rows() == 0) return z;
    const VectorXd r = constraints.a * z - constraints.e;
    return z - constraints.a.transpose() * (r.array() / aat_diag.array()).matrix();
  }

  struct Factored {
    MatrixXd s_at;
    Eigen::LDLT<MatrixXd> a_s_at;
  };

  Factored factor(const VectorXd& theta, const VectorXd& z) {
    SparseMatrix h;
    assemble(theta, eta(z).array().exp(), h);
    if (!chol.factorize(h)) throw NumericalError("latent Hessian is not positive definite");
    Factored f;
    f.s_at = chol.solve(MatrixXd(constraints.a.transpose()));
    f.a_s_at.compute(constraints.a * f.s_at);
    return f;
  }

  LatentMode newton(const VectorXd& theta, const VectorXd& start) {
    check_theta(theta);
    const SparseMatrix q = prior_precision(theta);
    VectorXd z = project(start);
    LatentMode out;
    out.max_constraint_violation = constraints.violation(z);
    double f = objective(z, q);
    const int max_iter = 100;
    bool converged = false;
    bool polished = false;
    double gnorm = 0;
    for (int it = 0; it <= max_iter; ++it) {
      const VectorXd g = gradient(z, q);
      gnorm = project(g).norm();
      if (!std::isfinite(f) || !std::isfinite(gnorm)) break;
      if (gnorm <= 1e-8 * (1 + std::abs(f))) {
        if (polished) {
          converged = true;
          break;
        }
        polished = true;  // one more full step to push below the tolerance
      }
      if (it == max_iter) break;
      Factored fac = factor(theta, z);
      VectorXd step = chol.solve(VectorXd(-g));
      step = detail::krige(constraints, step, fac.s_at, fac.a_s_at);
      const double slope = g.dot(step);
      if (slope >= 0) {
        // no descent direction left at rounding level
        converged = polished || gnorm <= 1e-6 * (1 + std::abs(f));
        break;
      }
      double t = 1.0;
      VectorXd trial;
      double ft = f;
      int halvings = 0;
      for (; halvings < 60; ++halvings) {
        trial = z + t * step;
        ft = objective(trial, q);
        // the allowance absorbs rounding in f once the decrease is below its resolution
        if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope + 1e-13 * (1 + std::abs(f))) break;
        t *= 0.5;
      }
      if (halvings == 60) {
        converged = polished;
        break;
      }
      out.max_constraint_violation =
          std::max(out.max_constraint_violation, constraints.violation(trial));
      z = project(trial);
      f = ft;
      ++out.iterations;
    }
    if (!converged)
      throw NewtonFailure("Newton iteration did not converge (projected gradient norm " +
                              std::to_string(gnorm) + ")",
                          gnorm);
    out.gradient_norm = gnorm;
    out.mode = std::move(z);
    return out;
  }

  double log_posterior(const VectorXd& theta, LatentMode* mode_out = nullptr) {
    LatentMode lm = newton(theta, warm);
    warm = lm.mode;
    const SparseMatrix q = prior_precision(theta);
    const auto P = static_cast<Eigen::Index>(spec.n_subregions());
    double log_prior_det = std::log(spec.intercept_precision);
    log_prior_det +=
        log_generalized_determinant(FbesagPrecision(spec.spatial, taus(VectorXd(theta.head(P)))));
    if (rw1)
      log_prior_det += log_generalized_determinant(
          FbesagPrecision(rw1, VectorXd::Constant(1, std::exp(theta[P]))));
    Factored fac = factor(theta, lm.mode);
    double log_det_post = chol.log_determinant() - log_det_aat;
    if (constraints.rows() > 0) log_det_post += fac.a_s_at.vectorD().array().log().sum();
    const double value = log_prior_theta(spec, theta) + log_likelihood(lm.mode) -
                         0.5 * lm.mode.dot(q * lm.mode) + 0.5 * log_prior_det -
                         0.5 * log_det_post;
    if (mode_out) *mode_out = std::move(lm);
    return value;
  }
};

LaplaceEngine::LaplaceEngine(ModelSpec spec) : impl_(std::make_unique<Impl>(std::move(spec))) {}
LaplaceEngine::~LaplaceEngine() = default;
LaplaceEngine::LaplaceEngine(LaplaceEngine&&) noexcept = default;
LaplaceEngine& LaplaceEngine::operator=(LaplaceEngine&&) noexcept = default;

const ModelSpec& LaplaceEngine::spec() const noexcept { return impl_->spec; }
const ConstraintSet& LaplaceEngine::constraints() const noexcept { return impl_->constraints; }

double LaplaceEngine::objective(const VectorXd& z, const VectorXd& theta) const {
  return impl_->objective(z, impl_->prior_precision(theta));
}

VectorXd LaplaceEngine::gradient(const VectorXd& z, const VectorXd& theta) const {
  return impl_->gradient(z, impl_->prior_precision(theta));
}

double LaplaceEngine::log_likelihood(const VectorXd& z) const { return impl_->log_likelihood(z); }
VectorXd LaplaceEngine::linear_predictor(const VectorXd& z) const { return impl_->eta(z); }

SparseMatrix LaplaceEngine::prior_precision(const VectorXd& theta) const {
  return impl_->prior_precision(theta);
}

LatentMode LaplaceEngine::latent_mode(const VectorXd& theta, const VectorXd* start) {
  LatentMode lm = impl_->newton(theta, start ? *start : impl_->warm);
  const VectorXd w = impl_->eta(lm.mode).array().exp();
  lm.hessian = impl_->prior_precision(theta) +
               SparseMatrix(impl_->design.transpose() * w.asDiagonal() * impl_->design);
  return lm;
}

double LaplaceEngine::log_posterior_theta(const VectorXd& theta) {
  return impl_->log_posterior(theta);
}

void LaplaceEngine::set_warm_start(const VectorXd& z) {
  if (z.size() != impl_->n) throw std::invalid_argument("warm start has the wrong length");
  impl_->warm = z;
}

LaplaceEngine::Gaussian LaplaceEngine::gaussian_summary(const VectorXd& theta) {
  auto& im = *impl_;
  LatentMode lm = im.newton(theta, im.warm);
  im.warm = lm.mode;
  auto fac = im.factor(theta, lm.mode);
  Gaussian g;
  g.mean = lm.mode;
  g.sd.resize(im.n);
  VectorXd unit = VectorXd::Zero(im.n);
  for (Eigen::Index i = 0; i < im.n; ++i) {
    unit[i] = 1.0;
    const VectorXd col = im.chol.solve(unit);
    unit[i] = 0.0;
    double var = col[i];
    if (im.constraints.rows() > 0) {
      const VectorXd w = fac.s_at.row(i).transpose();
      var -= w.dot(fac.a_s_at.solve(w));
    }
    g.sd[i] = std::sqrt(std::max(var, 0.0));
  }
  return g;
}

std::vector<VectorXd> LaplaceEngine::sample_latent(const VectorXd& theta, std::size_t draws,
                                                   std::uint64_t seed) {
  auto& im = *impl_;
  LatentMode lm = im.newton(theta, im.warm);
  im.warm = lm.mode;
  auto fac = im.factor(theta, lm.mode);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<VectorXd> out;
  out.reserve(draws);
  VectorXd z(im.n);
  for (std::size_t d = 0; d < draws; ++d) {
    for (Eigen::Index i = 0; i < im.n; ++i) z[i] = normal(rng);
    VectorXd x = im.chol.sample(z);
    x = detail::krige(im.constraints, x, fac.s_at, fac.a_s_at);
    out.push_back(lm.mode + x);
  }
  return out;
}

// ---------------------------------------------------------------- free functions

LatentMode latent_mode(const ModelSpec& spec, const VectorXd& theta, const VectorXd* start) {
  LaplaceEngine engine(spec);
  return engine.latent_mode(theta, start);
}

double log_posterior_theta(const ModelSpec& spec, const VectorXd& theta) {
  LaplaceEngine engine(spec);
  return engine.log_posterior_theta(theta);
}

namespace {

double deviance(const LaplaceEngine& engine, const VectorXd& z) {
  return -2.0 * engine.log_likelihood(z);
}

NelderMeadResult maximise(LaplaceEngine& engine, const VectorXd& start, double step,
                          const FitOptions& options) {
  auto neg = [&](const VectorXd& th) {
    try {
      return -engine.log_posterior_theta(th);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  NelderMeadOptions nm;
  nm.initial_step = step;
  nm.diameter_tol = options.diameter_tol;
  nm.max_evaluations = options.max_evaluations;
  auto res = nelder_mead(neg, start, nm);
  // restart from the best vertex to guard against a collapsed simplex
  nm.initial_step = std::max(50 * options.diameter_tol, 1e-3);
  auto again = nelder_mead(neg, res.x, nm);
  again.iterations += res.iterations;
  again.evaluations += res.evaluations;
  again.converged = again.converged && res.converged;
  return again;
}

double dic_at(LaplaceEngine& engine, const VectorXd& theta, const VectorXd& mode,
              std::size_t draws, std::uint64_t seed, double* p_d, double* mean_d) {
  if (draws == 0) throw std::invalid_argument("DIC needs at least one draw");
  const auto samples = engine.sample_latent(theta, draws, seed);
  double total = 0;
  for (const auto& z : samples) total += deviance(engine, z);
  const double dbar = total / static_cast<double>(draws);
  const double dhat = deviance(engine, mode);
  if (p_d) *p_d = dbar - dhat;
  if (mean_d) *mean_d = dbar;
  return 2 * dbar - dhat;
}

/// Central-difference Hessian of f at x.
MatrixXd fd_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                    double h) {
  const auto m = x.size();
  MatrixXd hess(m, m);
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < m; ++i) {
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    hess(i, i) = (f(xp) - 2 * f0 + f(xm)) / (h * h);
  }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      VectorXd a = x, b = x, c = x, d = x;
      a[i] += h, a[j] += h;
      b[i] += h, b[j] -= h;
      c[i] -= h, c[j] += h;
      d[i] -= h, d[j] -= h;
      hess(i, j) = hess(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4 * h * h);
    }
  return hess;
}

Summary summarise(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  Summary s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.q025 = quantile_type7(values, 0.025);
  s.q975 = quantile_type7(values, 0.975);
  return s;
}

}  // namespace

ModelFit fit(const ModelSpec& spec, const FitOptions& options) {
  spec.validate();
  const auto m = static_cast<Eigen::Index>(spec.n_theta());
  const auto P = static_cast<Eigen::Index>(spec.n_subregions());
  ModelFit out;
  out.theta_names = spec.theta_names();
  out.seed = options.seed;

  VectorXd start;
  double step = 1.0;
  if (options.initial_theta) {
    start = *options.initial_theta;
    if (start.size() != m) throw std::invalid_argument("initial theta has the wrong length");
    step = 0.25;
  } else if (P > 1) {
    LaplaceEngine stat(spec.stationary());
    const auto res = maximise(stat, VectorXd::Zero(spec.temporal() ? 2 : 1), 1.0, options);
    start.resize(m);
    start.head(P).setConstant(res.x[0]);
    if (spec.temporal()) start[P] = res.x[1];
    step = 0.25;
  } else {
    start = VectorXd::Zero(m);
  }

  LaplaceEngine engine(spec);
  const auto res = maximise(engine, start, step, options);
  out.theta_mode = res.x;
  out.diagnostics.converged = res.converged;
  out.diagnostics.optimizer_iterations = res.iterations;
  out.diagnostics.function_evaluations = res.evaluations;

  out.log_posterior_at_mode = engine.log_posterior_theta(out.theta_mode);
  const VectorXd cold = VectorXd::Zero(static_cast<Eigen::Index>(spec.n_latent()));
  const LatentMode lm = engine.latent_mode(out.theta_mode, &cold);
  out.diagnostics.newton_iterations = lm.iterations;
  out.diagnostics.max_constraint_violation = lm.max_constraint_violation;
  const VectorXd z_mode = lm.mode;

  auto lp = [&](const VectorXd& th) {
    engine.set_warm_start(z_mode);
    return engine.log_posterior_theta(th);
  };
  const MatrixXd hess = fd_hessian(lp, out.theta_mode, options.hessian_step);
  engine.set_warm_start(z_mode);
  const MatrixXd neg = -0.5 * (hess + hess.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(neg);
  const VectorXd ev = eig.eigenvalues();
  out.diagnostics.hessian_eigenvalues.assign(ev.data(), ev.data() + ev.size());
  out.diagnostics.hessian_positive_definite = ev.minCoeff() > 0;
  // saddle or flat directions: clip to a small positive curvature and flag
  const double floor = 1e-8 * std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  const VectorXd clipped = ev.cwiseMax(floor);
  out.theta_cov = eig.eigenvectors() * clipped.cwiseInverse().asDiagonal() *
                  eig.eigenvectors().transpose();
  out.theta_cov = 0.5 * (out.theta_cov + out.theta_cov.transpose()).eval();

  const MatrixXd root = eig.eigenvectors() * clipped.cwiseInverse().cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(derive_seed(options.seed, 1));
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> th(static_cast<std::size_t>(m)), tau(th.size());
  VectorXd u(m);
  const auto n_draws = std::max<std::size_t>(options.theta_draws, 1);
  for (std::size_t d = 0; d < n_draws; ++d) {
    for (Eigen::Index i = 0; i < m; ++i) u[i] = normal(rng);
    const VectorXd draw = out.theta_mode + root * u;
    for (Eigen::Index i = 0; i < m; ++i) {
      th[static_cast<std::size_t>(i)].push_back(draw[i]);
      tau[static_cast<std::size_t>(i)].push_back(std::exp(draw[i]));
    }
  }
  for (std::size_t i = 0; i < th.size(); ++i) {
    out.theta_summaries.push_back(summarise(th[i]));
    out.tau_summaries.push_back(summarise(tau[i]));
  }

  const auto g = engine.gaussian_summary(out.theta_mode);
  out.latent_mean = g.mean;
  out.latent_sd = g.sd;

  out.dic = dic_at(engine, out.theta_mode, z_mode, options.dic_draws,
                   derive_seed(options.seed, 2), &out.effective_parameters, &out.mean_deviance);
  out.log_ml = log_marginal_likelihood(spec, out);
  return out;
}

double dic(const ModelSpec& spec, const ModelFit& fit, std::size_t draws, std::uint64_t seed) {
  LaplaceEngine engine(spec);
  const auto lm = engine.latent_mode(fit.theta_mode);
  return dic_at(engine, fit.theta_mode, lm.mode, draws, seed, nullptr, nullptr);
}

double log_marginal_likelihood(const ModelSpec& spec, const ModelFit& fit) {
  const auto m = static_cast<double>(spec.n_theta());
  Eigen::LLT<MatrixXd> llt(fit.theta_cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("theta covariance is not positive definite");
  const double log_det = 2 * llt.matrixLLT().diagonal().array().log().sum();
  return fit.log_posterior_at_mode + 0.5 * m * std::log(2 * std::numbers::pi) + 0.5 * log_det;
}

}  // namespace fbesag
