#include "fbesag/studies.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "fbesag/rng.hpp"

namespace fbesag {

namespace {

// seed streams
constexpr std::uint64_t kGamma = 1;
constexpr std::uint64_t kData = 2;
constexpr std::uint64_t kFit = 3;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t frac(std::size_t n, std::size_t j, std::size_t k) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n * j) / static_cast<double>(k)));
}

std::vector<std::size_t> bands(std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t j = 1; j < k; ++j) out.push_back(frac(n, j, k));
  return out;
}

}  // namespace

CandidateModel builtin_model(const std::string& name, std::size_t rows, std::size_t cols) {
  if (name == "1") return {name, quadrant_partition(rows, cols, {}, {})};
  if (name == "3") return {name, quadrant_partition(rows, cols, bands(rows, 3), {})};
  if (name == "4A") return {name, quadrant_partition(rows, cols, bands(rows, 2), bands(cols, 2))};
  if (name == "4B") return {name, quadrant_partition(rows, cols, bands(rows, 4), {})};
  if (name == "5") return {name, quadrant_partition(rows, cols, bands(rows, 5), {})};
  if (name == "6") return {name, quadrant_partition(rows, cols, bands(rows, 2), bands(cols, 3))};
  throw std::invalid_argument("unknown built-in model '" + name + "'");
}

StudyKind parse_study_kind(const std::string& name) {
  if (name == "recovery") return StudyKind::recovery;
  if (name == "sigma_sweep" || name == "sweep") return StudyKind::sigma_sweep;
  if (name == "contraction") return StudyKind::contraction;
  throw std::invalid_argument("unknown study kind '" + name +
                              "' (expected recovery, sigma_sweep or contraction)");
}

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::recovery:
      return "recovery";
    case StudyKind::sigma_sweep:
      return "sigma_sweep";
    case StudyKind::contraction:
      return "contraction";
  }
  return "unknown";
}

void StudyConfig::validate() const {
  if (replicates == 0) throw std::invalid_argument("replicates must be at least 1");
  if (models.empty()) throw std::invalid_argument("no candidate models");
  if (generator_model >= models.size()) throw std::invalid_argument("generator model not listed");
  if (std::none_of(models.begin(), models.end(),
                   [](const CandidateModel& m) { return m.partition.n_subregions() == 1; }))
    throw std::invalid_argument("the candidate models must include a single-region model");
  for (const auto& m : models)
    if (m.partition.n_areas() != graph.n_areas())
      throw std::invalid_argument("model '" + m.name + "' does not match the graph");
  if (!true_theta && log_tau_levels.empty()) throw std::invalid_argument("no generator levels");
  if (true_theta && static_cast<std::size_t>(true_theta->size()) !=
                        models[generator_model].partition.n_subregions())
    throw std::invalid_argument("generator theta length differs from the generator partition");
  if (generator_sigma_gamma < 0) throw std::invalid_argument("generator sigma must be >= 0");
  if (!(fit_sigma_gamma > 0)) throw std::invalid_argument("pc.sigma_gamma must be > 0");
  if (kind == StudyKind::sigma_sweep) {
    if (sweep_sigmas.empty()) throw std::invalid_argument("empty sigma sweep");
    for (double s : sweep_sigmas)
      if (!(s > 0)) throw std::invalid_argument("sweep sigmas must be > 0");
  }
  if (!std::isfinite(intercept)) throw std::invalid_argument("intercept must be finite");
  (void)PcPriorConfig(pc_u, pc_alpha, fit_sigma_gamma, 1);
}

StudyConfig study_config_from(const Config& cfg, const std::optional<AdjacencyGraph>& graph_in) {
  StudyConfig sc;
  const auto kind_name = cfg.get("study.kind");
  if (!kind_name) throw std::invalid_argument("study.kind is required");
  sc.kind = parse_study_kind(*kind_name);
  sc.replicates = cfg.get_size("study.replicates", sc.replicates);
  sc.seed = cfg.get_size("study.seed", sc.seed);
  sc.redraw_gamma = cfg.get_bool("study.redraw_gamma", sc.redraw_gamma);
  sc.threads = cfg.get_size("study.threads", sc.threads);

  const std::size_t rows = cfg.get_size("grid.rows", 20);
  const std::size_t cols = cfg.get_size("grid.cols", 20);
  std::optional<AdjacencyGraph> graph = graph_in;
  if (!graph) {
    if (auto path = cfg.get("graph.file"))
      graph = read_graph_file(*path);
  }
  sc.graph = graph ? *graph : grid_graph(rows, cols);

  std::vector<std::string> default_models{"1", "4A", "4B"};
  std::string default_generator = "4A";
  if (sc.kind == StudyKind::contraction) {
    default_models = {"1", "3", "4A", "5", "6"};
    default_generator = "1";
    sc.log_tau_levels = {0.69};
    sc.generator_sigma_gamma = 0.0;
    sc.fit_sigma_gamma = 0.15;
  } else if (sc.kind == StudyKind::sigma_sweep) {
    default_models = {"1", "4A"};
    sc.true_theta = VectorXd(4);
    *sc.true_theta << 2.14, 2.04, 2.01, 1.81;
  } else {
    sc.log_tau_levels = {-2, -1, 0, 1, 2, 3};
  }

  for (const auto& name : cfg.get_strings("models", default_models)) {
    if (auto path = cfg.get("model." + name)) {
      sc.models.push_back({name, read_partition_file(sc.graph, *path)});
    } else {
      if (graph) throw std::invalid_argument("model '" + name + "' needs a partition file (model." +
                                             name + ") when the graph comes from a file");
      sc.models.push_back(builtin_model(name, rows, cols));
    }
  }
  const auto gen = cfg.get_string("generator.model", default_generator);
  const auto it = std::find_if(sc.models.begin(), sc.models.end(),
                               [&](const CandidateModel& m) { return m.name == gen; });
  if (it == sc.models.end()) throw std::invalid_argument("generator.model '" + gen + "' is not in models");
  sc.generator_model = static_cast<std::size_t>(it - sc.models.begin());

  sc.log_tau_levels = cfg.get_doubles("generator.log_tau", sc.log_tau_levels);
  sc.generator_sigma_gamma = cfg.get_double("generator.sigma_gamma", sc.generator_sigma_gamma);
  sc.intercept = cfg.get_double("generator.intercept", sc.intercept);
  if (cfg.has("generator.theta")) {
    const auto v = cfg.get_doubles("generator.theta", {});
    sc.true_theta = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (cfg.has("generator.log_tau") && sc.kind == StudyKind::sigma_sweep) {
    sc.true_theta.reset();
  }

  sc.pc_u = cfg.get_double("pc.u", sc.pc_u);
  sc.pc_alpha = cfg.get_double("pc.alpha", sc.pc_alpha);
  sc.fit_sigma_gamma = cfg.get_double("pc.sigma_gamma", sc.fit_sigma_gamma);
  sc.sweep_sigmas = cfg.get_doubles("sweep.sigma", sc.sweep_sigmas);
  sc.theta_draws = cfg.get_size("fit.theta_draws", sc.theta_draws);
  sc.dic_draws = cfg.get_size("fit.dic_draws", sc.dic_draws);
  sc.validate();
  return sc;
}

VectorXd draw_theta_true(double log_tau, double sigma_gamma, std::size_t p, std::uint64_t seed) {
  VectorXd theta = VectorXd::Constant(static_cast<Eigen::Index>(p), log_tau);
  if (sigma_gamma == 0) return theta;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma_gamma);
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += normal(rng);
  return theta;
}

SimulatedData simulate_dataset(const AdjacencyGraph& graph, const Partition& partition,
                               const VectorXd& theta_true, double intercept, std::uint64_t seed) {
  auto structure = std::make_shared<const FbesagStructure>(graph, partition);
  const FbesagPrecision prec(structure, theta_true.array().exp());
  SimulatedData out;
  out.theta_true = theta_true;
  out.field = sample_field(prec, sum_to_zero_constraints(prec), derive_seed(seed, 0));
  std::mt19937_64 rng(derive_seed(seed, 1));
  out.counts.resize(graph.n_areas());
  for (std::size_t i = 0; i < graph.n_areas(); ++i) {
    std::poisson_distribution<std::uint64_t> pois(std::exp(intercept + out.field[static_cast<Eigen::Index>(i)]));
    out.counts[i] = pois(rng);
  }
  return out;
}

SimulatedData simulate_dataset(const AdjacencyGraph& graph, const Partition& partition,
                               double log_tau, double sigma_gamma, double intercept,
                               std::uint64_t seed) {
  const VectorXd theta =
      draw_theta_true(log_tau, sigma_gamma, partition.n_subregions(), derive_seed(seed, kGamma));
  return simulate_dataset(graph, partition, theta, intercept, derive_seed(seed, kData));
}

double StudyResult::metric(double level, const std::string& model, const std::string& name) const {
  for (const auto& row : aggregate)
    if (row.level == level && row.model == model && row.metric == name) return row.value;
  return kNaN;
}

Deviation deviation_from(const ReplicateRecord& stationary, const ReplicateRecord& model) {
  const double s = stationary.theta_mean[0];
  Deviation d;
  d.max_abs = (model.theta_mean.array() - s).abs().maxCoeff();
  d.abs_mean = std::abs(s - model.theta_mean.mean());
  return d;
}

namespace {

struct Prepared {
  const StudyConfig& cfg;
  std::vector<std::shared_ptr<const FbesagStructure>> structures;
  std::size_t stationary = 0;
  std::vector<std::size_t> fit_order;  // stationary model first

  explicit Prepared(const StudyConfig& c) : cfg(c) {
    c.validate();
    for (const auto& m : c.models)
      structures.push_back(std::make_shared<const FbesagStructure>(c.graph, m.partition));
    for (std::size_t i = 0; i < c.models.size(); ++i)
      if (c.models[i].partition.n_subregions() == 1) {
        stationary = i;
        break;
      }
    fit_order.push_back(stationary);
    for (std::size_t i = 0; i < c.models.size(); ++i)
      if (i != stationary) fit_order.push_back(i);
  }

  std::size_t generator_p() const { return cfg.models[cfg.generator_model].partition.n_subregions(); }

  bool stationary_truth() const {
    return !cfg.true_theta && (cfg.generator_sigma_gamma == 0 || generator_p() == 1);
  }

  VectorXd theta_true(std::size_t level_index, std::size_t replicate) const {
    if (cfg.true_theta) return *cfg.true_theta;
    const auto level_seed = derive_seed(cfg.seed, kGamma, level_index);
    const auto seed = cfg.redraw_gamma ? derive_seed(level_seed, replicate) : level_seed;
    return draw_theta_true(cfg.log_tau_levels[level_index], cfg.generator_sigma_gamma,
                           generator_p(), seed);
  }

  SimulatedData data(std::size_t level_index, std::size_t replicate) const {
    const auto seed = derive_seed(derive_seed(cfg.seed, kData, level_index), replicate);
    return simulate_dataset(cfg.graph, cfg.models[cfg.generator_model].partition,
                            theta_true(level_index, replicate), cfg.intercept, seed);
  }

  ModelSpec spec(std::size_t model, const std::vector<std::uint64_t>& counts,
                 double sigma_gamma) const {
    ModelSpec s;
    s.spatial = structures[model];
    s.observations.reserve(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) s.observations.push_back({i, {}, counts[i], 1.0});
    s.spatial_prior = PcPriorConfig(cfg.pc_u, cfg.pc_alpha, sigma_gamma,
                                    structures[model]->n_subregions());
    return s;
  }

  ReplicateRecord fit_one(std::size_t model, const std::vector<std::uint64_t>& counts,
                          double sigma_gamma, const std::optional<VectorXd>& init,
                          std::uint64_t seed) const {
    ReplicateRecord rec;
    rec.model = cfg.models[model].name;
    rec.n_subregions = structures[model]->n_subregions();
    try {
      FitOptions opt;
      opt.seed = seed;
      opt.theta_draws = cfg.theta_draws;
      opt.dic_draws = cfg.dic_draws;
      if (init && rec.n_subregions > 1)
        opt.initial_theta = VectorXd::Constant(static_cast<Eigen::Index>(rec.n_subregions), (*init)[0]);
      const ModelFit f = fit(spec(model, counts, sigma_gamma), opt);
      const auto p = static_cast<Eigen::Index>(rec.n_subregions);
      rec.theta_mode = f.theta_mode.head(p);
      rec.theta_mean.resize(p);
      rec.theta_q025.resize(p);
      rec.theta_q975.resize(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        const auto& s = f.theta_summaries[static_cast<std::size_t>(k)];
        rec.theta_mean[k] = s.mean;
        rec.theta_q025[k] = s.q025;
        rec.theta_q975[k] = s.q975;
      }
      rec.dic = f.dic;
      rec.log_ml = f.log_ml;
      rec.effective_parameters = f.effective_parameters;
      rec.converged = f.diagnostics.converged && f.diagnostics.hessian_positive_definite;
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.dic = rec.log_ml = rec.effective_parameters = kNaN;
    }
    return rec;
  }

  void attach_truth(ReplicateRecord& rec, std::size_t model, const VectorXd& truth) const {
    if (model == cfg.generator_model)
      rec.theta_true = truth;
    else if (stationary_truth())
      rec.theta_true = VectorXd::Constant(static_cast<Eigen::Index>(rec.n_subregions), truth[0]);
  }
};

template <class Job>
std::vector<ReplicateRecord> run_jobs(std::size_t n_jobs, std::size_t threads, const Job& job) {
  std::vector<std::vector<ReplicateRecord>> results(n_jobs);
  std::size_t workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = std::min(workers, n_jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < n_jobs;) {
      try {
        results[j] = job(j);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<ReplicateRecord> out;
  for (auto& r : results)
    for (auto& rec : r) out.push_back(std::move(rec));
  std::stable_sort(out.begin(), out.end(), [](const ReplicateRecord& a, const ReplicateRecord& b) {
    return std::tie(a.level_index, a.replicate) < std::tie(b.level_index, b.replicate);
  });
  return out;
}

/// Fits every candidate model to one replicate of one generator level.
std::vector<ReplicateRecord> level_job(const Prepared& prep, std::size_t level_index,
                                       std::size_t replicate) {
  const auto& cfg = prep.cfg;
  const SimulatedData sim = prep.data(level_index, replicate);
  const auto fit_base = derive_seed(derive_seed(cfg.seed, kFit, level_index), replicate);
  std::vector<ReplicateRecord> recs(cfg.models.size());
  std::optional<VectorXd> init;
  for (auto m : prep.fit_order) {
    recs[m] = prep.fit_one(m, sim.counts, cfg.fit_sigma_gamma, init, derive_seed(fit_base, m));
    if (m == prep.stationary && recs[m].ok) init = recs[m].theta_mode;
  }
  const double level = cfg.true_theta ? cfg.true_theta->mean() : cfg.log_tau_levels[level_index];
  for (std::size_t m = 0; m < recs.size(); ++m) {
    recs[m].level = level;
    recs[m].level_index = level_index;
    recs[m].replicate = replicate;
    prep.attach_truth(recs[m], m, sim.theta_true);
  }
  return recs;
}

void aggregate(StudyResult& result, const StudyConfig& cfg, const std::vector<double>& levels,
               const std::vector<std::string>& model_names) {
  auto add = [&](double level, const std::string& model, const std::string& metric, double v) {
    result.aggregate.push_back({level, model, metric, v});
  };
  for (std::size_t li = 0; li < levels.size(); ++li) {
    // stationary record per replicate for paired comparisons
    std::map<std::size_t, const ReplicateRecord*> stat;
    for (const auto& r : result.records)
      if (r.level_index == li && r.n_subregions == 1 && r.ok) stat[r.replicate] = &r;
    for (const auto& name : model_names) {
      std::vector<const ReplicateRecord*> recs;
      for (const auto& r : result.records)
        if (r.level_index == li && r.model == name) recs.push_back(&r);
      if (recs.empty()) continue;
      const double level = recs.front()->level;
      std::size_t n_ok = 0, n_conv = 0, n_truth = 0, n_cover_all = 0, n_pair = 0;
      std::size_t lower_dic = 0, higher_lml = 0, both = 0;
      double dic = 0, lml = 0, pd = 0, bar = 0, spread = 0, max_dev = 0, mean_dev = 0;
      std::size_t p = recs.front()->n_subregions;
      VectorXd mean_theta = VectorXd::Zero(static_cast<Eigen::Index>(p));
      VectorXd cover = VectorXd::Zero(static_cast<Eigen::Index>(p));
      for (const auto* r : recs) {
        if (!r->ok) continue;
        ++n_ok;
        n_conv += r->converged;
        dic += r->dic;
        lml += r->log_ml;
        pd += r->effective_parameters;
        mean_theta += r->theta_mean;
        bar += r->theta_mean.mean();
        spread += r->theta_mean.maxCoeff() - r->theta_mean.minCoeff();
        if (r->theta_true.size() == r->theta_mean.size()) {
          ++n_truth;
          bool all = true;
          for (Eigen::Index k = 0; k < cover.size(); ++k) {
            const bool in = r->theta_q025[k] <= r->theta_true[k] && r->theta_true[k] <= r->theta_q975[k];
            cover[k] += in;
            all = all && in;
          }
          n_cover_all += all;
        }
        if (auto it = stat.find(r->replicate); it != stat.end()) {
          ++n_pair;
          const bool d = r->dic < it->second->dic;
          const bool l = r->log_ml > it->second->log_ml;
          lower_dic += d;
          higher_lml += l;
          both += d && l;
          const auto dev = deviation_from(*it->second, *r);
          max_dev += dev.max_abs;
          mean_dev += dev.abs_mean;
        }
      }
      const double n = static_cast<double>(n_ok);
      add(level, name, "replicates", static_cast<double>(recs.size()));
      add(level, name, "fits_ok", n);
      add(level, name, "converged_rate", n_ok ? static_cast<double>(n_conv) / n : kNaN);
      for (Eigen::Index k = 0; k < mean_theta.size(); ++k)
        add(level, name, "mean_theta_" + std::to_string(k + 1), n_ok ? mean_theta[k] / n : kNaN);
      add(level, name, "mean_theta_bar", n_ok ? bar / n : kNaN);
      add(level, name, "mean_spread", n_ok ? spread / n : kNaN);
      add(level, name, "mean_dic", n_ok ? dic / n : kNaN);
      add(level, name, "mean_log_ml", n_ok ? lml / n : kNaN);
      add(level, name, "mean_effective_parameters", n_ok ? pd / n : kNaN);
      if (n_truth > 0) {
        for (Eigen::Index k = 0; k < cover.size(); ++k)
          add(level, name, "coverage_" + std::to_string(k + 1),
              cover[k] / static_cast<double>(n_truth));
        add(level, name, "coverage_all", static_cast<double>(n_cover_all) / static_cast<double>(n_truth));
      }
      if (n_pair > 0 && p > 1) {
        const double np = static_cast<double>(n_pair);
        add(level, name, "prop_lower_dic", static_cast<double>(lower_dic) / np);
        add(level, name, "prop_higher_log_ml", static_cast<double>(higher_lml) / np);
        add(level, name, "prop_both", static_cast<double>(both) / np);
        add(level, name, "mean_max_abs_dev", max_dev / np);
        add(level, name, "mean_abs_mean_dev", mean_dev / np);
      }
    }
  }
  (void)cfg;
}

std::vector<std::string> names_of(const StudyConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& m : cfg.models) out.push_back(m.name);
  return out;
}

StudyResult level_study(const StudyConfig& cfg, StudyKind kind) {
  const Prepared prep(cfg);
  const std::size_t n_levels = cfg.true_theta ? 1 : cfg.log_tau_levels.size();
  StudyResult result;
  result.kind = kind;
  result.records = run_jobs(n_levels * cfg.replicates, cfg.threads, [&](std::size_t j) {
    return level_job(prep, j / cfg.replicates, j % cfg.replicates);
  });
  std::vector<double> levels;
  for (std::size_t li = 0; li < n_levels; ++li)
    levels.push_back(cfg.true_theta ? cfg.true_theta->mean() : cfg.log_tau_levels[li]);
  aggregate(result, cfg, levels, names_of(cfg));
  return result;
}

}  // namespace

StudyResult recovery_study(const StudyConfig& config) {
  return level_study(config, StudyKind::recovery);
}

StudyResult contraction_study(const StudyConfig& config) {
  const Prepared prep(config);
  if (!prep.stationary_truth())
    throw std::invalid_argument("the contraction study needs a stationary generator");
  return level_study(config, StudyKind::contraction);
}

StudyResult sigma_sweep(const StudyConfig& cfg) {
  const Prepared prep(cfg);
  StudyResult result;
  result.kind = StudyKind::sigma_sweep;
  const auto& sigmas = cfg.sweep_sigmas;
  result.records = run_jobs(cfg.replicates, cfg.threads, [&](std::size_t rep) {
    // one dataset per replicate, refitted for every sigma
    const SimulatedData sim = prep.data(0, rep);
    const auto fit_base = derive_seed(derive_seed(cfg.seed, kFit, 0), rep);
    ReplicateRecord stat = prep.fit_one(prep.stationary, sim.counts, cfg.fit_sigma_gamma,
                                        std::nullopt, derive_seed(fit_base, prep.stationary));
    prep.attach_truth(stat, prep.stationary, sim.theta_true);
    std::optional<VectorXd> init;
    if (stat.ok) init = stat.theta_mode;
    std::vector<ReplicateRecord> out;
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
      ReplicateRecord s = stat;
      s.level = sigmas[si];
      s.level_index = si;
      s.replicate = rep;
      out.push_back(s);
      if (cfg.generator_model == prep.stationary) continue;
      ReplicateRecord r = prep.fit_one(cfg.generator_model, sim.counts, sigmas[si], init,
                                       derive_seed(derive_seed(fit_base, cfg.generator_model), si));
      r.level = sigmas[si];
      r.level_index = si;
      r.replicate = rep;
      prep.attach_truth(r, cfg.generator_model, sim.theta_true);
      out.push_back(std::move(r));
    }
    return out;
  });
  std::vector<std::string> names{cfg.models[prep.stationary].name};
  if (cfg.generator_model != prep.stationary) names.push_back(cfg.models[cfg.generator_model].name);
  aggregate(result, cfg, sigmas, names);
  return result;
}

StudyResult run_study(const StudyConfig& config) {
  switch (config.kind) {
    case StudyKind::recovery:
      return recovery_study(config);
    case StudyKind::sigma_sweep:
      return sigma_sweep(config);
    case StudyKind::contraction:
      return contraction_study(config);
  }
  throw std::invalid_argument("unknown study kind");
}

// ---------------------------------------------------------------- CSV output

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string join(const VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += num(v[i]);
  }
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const ReplicateRecord* stationary_of(const StudyResult& result, const ReplicateRecord& r) {
  for (const auto& s : result.records)
    if (s.level_index == r.level_index && s.replicate == r.replicate && s.n_subregions == 1 && s.ok)
      return &s;
  return nullptr;
}

}  // namespace

void write_replicates_csv(const StudyResult& result, std::ostream& out) {
  out << "level,replicate,model,n_subregions,status,converged,theta_true,theta_mode,theta_mean,"
         "theta_q025,theta_q975,dic,log_ml,effective_parameters\n";
  for (const auto& r : result.records) {
    out << num(r.level) << ',' << r.replicate << ',' << quote(r.model) << ',' << r.n_subregions
        << ',' << (r.ok ? "ok" : quote("error: " + r.error)) << ',' << (r.converged ? 1 : 0) << ','
        << join(r.theta_true) << ',' << join(r.theta_mode) << ',' << join(r.theta_mean) << ','
        << join(r.theta_q025) << ',' << join(r.theta_q975) << ',' << num(r.dic) << ','
        << num(r.log_ml) << ',' << num(r.effective_parameters) << '\n';
  }
}

void write_aggregate_csv(const StudyResult& result, std::ostream& out) {
  out << "level,model,metric,value\n";
  for (const auto& a : result.aggregate)
    out << num(a.level) << ',' << quote(a.model) << ',' << a.metric << ',' << num(a.value) << '\n';
}

void write_table1_csv(const StudyResult& result, std::ostream& out) {
  out << "log_tau,model,fits_ok,mean_dic,mean_log_ml,prop_lower_dic,prop_higher_log_ml,"
         "coverage_all\n";
  std::vector<std::pair<double, std::string>> keys;
  for (const auto& a : result.aggregate)
    if (a.metric == "replicates") keys.emplace_back(a.level, a.model);
  for (const auto& [level, model] : keys) {
    out << num(level) << ',' << quote(model);
    for (const char* m : {"fits_ok", "mean_dic", "mean_log_ml", "prop_lower_dic",
                          "prop_higher_log_ml", "coverage_all"})
      out << ',' << num(result.metric(level, model, m));
    out << '\n';
  }
}

void write_table3_csv(const StudyResult& result, std::ostream& out) {
  out << "log_tau,replicate,model,log_precisions,max_abs_dev,abs_mean_dev\n";
  for (const auto& r : result.records) {
    const auto* s = stationary_of(result, r);
    Deviation d{kNaN, kNaN};
    if (s && r.ok) d = deviation_from(*s, r);
    out << num(r.level) << ',' << r.replicate << ',' << quote(r.model) << ',' << join(r.theta_mean)
        << ',' << num(d.max_abs) << ',' << num(d.abs_mean) << '\n';
  }
}

void write_sweep_csv(const StudyResult& result, std::ostream& out) {
  out << "sigma_gamma,model,mean_log_precisions,mean_spread,coverage_all\n";
  std::vector<std::pair<double, std::string>> keys;
  for (const auto& a : result.aggregate)
    if (a.metric == "replicates") keys.emplace_back(a.level, a.model);
  for (const auto& [level, model] : keys) {
    VectorXd mean;
    std::vector<double> v;
    for (std::size_t k = 1;; ++k) {
      const double x = result.metric(level, model, "mean_theta_" + std::to_string(k));
      if (std::isnan(x) && k > 1) break;
      v.push_back(x);
      if (std::isnan(x)) break;
    }
    mean = Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    out << num(level) << ',' << quote(model) << ',' << join(mean) << ','
        << num(result.metric(level, model, "mean_spread")) << ','
        << num(result.metric(level, model, "coverage_all")) << '\n';
  }
}

}  // namespace fbesag
