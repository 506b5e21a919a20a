#include "fbesag/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <ostream>
#include <sstream>

#include "fbesag/config.hpp"
#include "fbesag/inference.hpp"
#include "fbesag/pcprior.hpp"
#include "fbesag/precision.hpp"
#include "fbesag/studies.hpp"

#ifndef FBESAG_VERSION
#define FBESAG_VERSION "0.0.0"
#endif

namespace fbesag {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

/// Input validation failure; becomes exit code 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// Shortest round-trip form, for column labels.
std::string label(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Runs `load`, turning parse and validation errors into InputError naming `what`.
template <class F>
auto load(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw InputError(what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(what + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw InputError(what + ": " + e.what());
  }
}

/// The manifest is written as "incomplete" before any output and rewritten at the end.
class Manifest {
 public:
  Manifest(std::string command, fs::path dir) : dir_(std::move(dir)) {
    doc_["command"] = std::move(command);
    doc_["version"] = FBESAG_VERSION;
    doc_["started_at"] = utc_now();
    doc_["status"] = "incomplete";
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }

  void input(const std::string& role, const std::string& path) {
    doc_["inputs"].push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)},
                              {"bytes", fs::file_size(path)}});
  }
  json& operator[](const std::string& key) { return doc_[key]; }

  void begin() {
    fs::create_directories(dir_);
    write();
  }

  void output(const std::string& name) { doc_["outputs"].push_back(name); }

  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["finished_at"] = utc_now();
    write();
  }

 private:
  void write() const {
    std::ofstream f(dir_ / "manifest.json");
    f << doc_.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + (dir_ / "manifest.json").string());
  }

  fs::path dir_;
  json doc_;
};

template <class Writer>
void write_file(Manifest& m, const fs::path& dir, const std::string& name, Writer&& writer) {
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  writer(f);
  if (!f) throw std::runtime_error("error writing " + (dir / name).string());
  m.output(name);
}

void warn_unused(const Config& cfg, std::ostream& err) {
  for (const auto& k : cfg.unused_keys()) err << "warning: unused config key '" << k << "'\n";
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string graph, partition, data, config, out;
  std::uint64_t seed = 1;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const auto graph = load("graph file '" + a.graph + "'", [&] { return read_graph_file(a.graph); });
  const auto partition =
      a.partition.empty()
          ? single_region(graph)
          : load("partition file '" + a.partition + "'",
                 [&] { return read_partition_file(graph, a.partition); });
  for (auto k : noncontiguous_subregions(graph, partition))
    err << "warning: sub-region '" << partition.names()[k] << "' is not contiguous\n";
  const auto data = load("data file '" + a.data + "'",
                         [&] { return read_observations_file(a.data, graph.n_areas()); });
  const Config cfg = a.config.empty()
                         ? Config{}
                         : load("config file '" + a.config + "'", [&] { return Config::read_file(a.config); });

  ModelSpec spec;
  FitOptions opt;
  json resolved;
  load("config file '" + a.config + "'", [&] {
    const bool scale = cfg.get_bool("spatial.scale", false);
    spec.spatial = std::make_shared<const FbesagStructure>(graph, partition, scale);
    spec.n_time = cfg.get_size("temporal.n_time", data.n_time);
    spec.observations = data.observations;
    spec.intercept_precision = cfg.get_double("intercept.precision", spec.intercept_precision);
    spec.spatial_prior = PcPriorConfig(cfg.get_double("pc.u", 1.0), cfg.get_double("pc.alpha", 1e-5),
                                       cfg.get_double("pc.sigma_gamma", 0.15),
                                       partition.n_subregions());
    spec.temporal_u = cfg.get_double("temporal.u", spec.temporal_u);
    spec.temporal_alpha = cfg.get_double("temporal.alpha", spec.temporal_alpha);
    if (spec.temporal()) (void)lambda_from(spec.temporal_u, spec.temporal_alpha);
    opt.theta_draws = cfg.get_size("fit.theta_draws", opt.theta_draws);
    opt.dic_draws = cfg.get_size("fit.dic_draws", opt.dic_draws);
    opt.seed = a.seed;
    spec.validate();
    resolved = {{"spatial.scale", scale},
                {"temporal.n_time", spec.n_time},
                {"intercept.precision", spec.intercept_precision},
                {"pc.u", spec.spatial_prior.u()},
                {"pc.alpha", spec.spatial_prior.alpha()},
                {"pc.lambda", spec.spatial_prior.lambda()},
                {"pc.sigma_gamma", spec.spatial_prior.sigma_gamma()},
                {"temporal.u", spec.temporal_u},
                {"temporal.alpha", spec.temporal_alpha},
                {"fit.theta_draws", opt.theta_draws},
                {"fit.dic_draws", opt.dic_draws}};
    return 0;
  });
  warn_unused(cfg, err);

  const fs::path dir(a.out);
  Manifest man("fit", dir);
  man.input("graph", a.graph);
  if (!a.partition.empty()) man.input("partition", a.partition);
  man.input("data", a.data);
  if (!a.config.empty()) man.input("config", a.config);
  man["seed"] = a.seed;
  man["config"] = resolved;
  man["conventions"] = {
      {"improper_density", "generalised determinant over non-zero eigenvalues, (2 pi)^-(N-c)/2"},
      {"latent_summaries", "Gaussian approximation at the hyperparameter mode (empirical Bayes)"},
      {"log_ml", "Gaussian approximation in theta around the mode of the Laplace posterior"}};
  man.begin();

  ModelFit f;
  try {
    f = fit(spec, opt);
  } catch (const NumericalError& e) {
    man["error"] = e.what();
    man.finish("failed");
    err << "error: " << e.what() << '\n';
    return kExitNonConvergence;
  }

  const auto N = spec.spatial->n_areas();
  write_file(man, dir, "latent.csv", [&](std::ostream& o) {
    o << "effect,id,mean,sd,q025,q975\n";
    constexpr double z = 1.959963984540054;
    auto row = [&](const char* effect, const std::string& id, Eigen::Index i) {
      const double m = f.latent_mean[i], s = f.latent_sd[i];
      o << effect << ',' << id << ',' << num(m) << ',' << num(s) << ',' << num(m - z * s) << ','
        << num(m + z * s) << '\n';
    };
    row("intercept", "1", 0);
    for (std::size_t i = 0; i < N; ++i) row("spatial", std::to_string(i + 1), static_cast<Eigen::Index>(1 + i));
    for (std::size_t t = 0; t < spec.n_time; ++t)
      row("temporal", std::to_string(t + 1), static_cast<Eigen::Index>(1 + N + t));
  });
  write_file(man, dir, "theta.csv", [&](std::ostream& o) {
    o << "name,mode,mean,q025,q975,tau_mean,tau_q025,tau_q975\n";
    for (std::size_t k = 0; k < f.theta_names.size(); ++k) {
      const auto& s = f.theta_summaries[k];
      const auto& t = f.tau_summaries[k];
      o << f.theta_names[k] << ',' << num(f.theta_mode[static_cast<Eigen::Index>(k)]) << ','
        << num(s.mean) << ',' << num(s.q025) << ',' << num(s.q975) << ',' << num(t.mean) << ','
        << num(t.q025) << ',' << num(t.q975) << '\n';
    }
  });
  const bool ok = f.diagnostics.converged && f.diagnostics.hessian_positive_definite;
  write_file(man, dir, "summary.txt", [&](std::ostream& o) {
    o << "n_areas = " << N << '\n'
      << "n_subregions = " << spec.n_subregions() << '\n'
      << "n_time = " << spec.n_time << '\n'
      << "n_observations = " << spec.observations.size() << '\n';
    for (std::size_t k = 0; k < f.theta_names.size(); ++k) {
      const auto& t = f.tau_summaries[k];
      const auto name = f.theta_names[k].substr(4);  // strip "log_"
      o << name << ".mean = " << num(t.mean) << '\n'
        << name << ".q025 = " << num(t.q025) << '\n'
        << name << ".q975 = " << num(t.q975) << '\n';
    }
    o << "dic = " << num(f.dic) << '\n'
      << "effective_parameters = " << num(f.effective_parameters) << '\n'
      << "mean_deviance = " << num(f.mean_deviance) << '\n'
      << "log_ml = " << num(f.log_ml) << '\n'
      << "log_posterior_at_mode = " << num(f.log_posterior_at_mode) << '\n'
      << "converged = " << (f.diagnostics.converged ? "true" : "false") << '\n'
      << "hessian_positive_definite = " << (f.diagnostics.hessian_positive_definite ? "true" : "false") << '\n'
      << "optimizer_iterations = " << f.diagnostics.optimizer_iterations << '\n'
      << "function_evaluations = " << f.diagnostics.function_evaluations << '\n'
      << "newton_iterations = " << f.diagnostics.newton_iterations << '\n'
      << "max_constraint_violation = " << num(f.diagnostics.max_constraint_violation) << '\n';
    o << "hessian_eigenvalues =";
    for (double e : f.diagnostics.hessian_eigenvalues) o << ' ' << num(e);
    o << '\n' << "seed = " << f.seed << '\n';
  });
  man.finish(ok ? "complete" : "non_converged");
  out << "fit written to " << dir.string() << (ok ? "" : " (not converged; see summary.txt)") << '\n';
  return ok ? kExitOk : kExitNonConvergence;
}

// ---------------------------------------------------------------- study

struct StudyArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

json describe(const StudyConfig& sc) {
  json models = json::array();
  for (const auto& m : sc.models) models.push_back({{"name", m.name}, {"n_subregions", m.partition.n_subregions()}});
  json j = {{"study.kind", to_string(sc.kind)},
            {"study.replicates", sc.replicates},
            {"study.seed", sc.seed},
            {"study.redraw_gamma", sc.redraw_gamma},
            {"n_areas", sc.graph.n_areas()},
            {"models", models},
            {"generator.model", sc.models[sc.generator_model].name},
            {"generator.log_tau", sc.log_tau_levels},
            {"generator.sigma_gamma", sc.generator_sigma_gamma},
            {"generator.intercept", sc.intercept},
            {"pc.u", sc.pc_u},
            {"pc.alpha", sc.pc_alpha},
            {"pc.lambda", lambda_from(sc.pc_u, sc.pc_alpha)},
            {"pc.sigma_gamma", sc.fit_sigma_gamma},
            {"fit.theta_draws", sc.theta_draws},
            {"fit.dic_draws", sc.dic_draws}};
  if (sc.true_theta)
    j["generator.theta"] = std::vector<double>(sc.true_theta->data(), sc.true_theta->data() + sc.true_theta->size());
  if (sc.kind == StudyKind::sigma_sweep) j["sweep.sigma"] = sc.sweep_sigmas;
  return j;
}

int cmd_study(const StudyArgs& a, std::ostream& out, std::ostream& err) {
  const Config cfg = load("config file '" + a.config + "'", [&] { return Config::read_file(a.config); });
  StudyConfig sc = load("config file '" + a.config + "'", [&] { return study_config_from(cfg); });
  warn_unused(cfg, err);
  if (a.seed) sc.seed = *a.seed;
  if (a.threads) sc.threads = *a.threads;

  const fs::path dir(a.out);
  Manifest man("study", dir);
  man.input("config", a.config);
  if (auto g = cfg.get("graph.file")) man.input("graph", *g);
  man["seed"] = sc.seed;
  man["config"] = describe(sc);
  man.begin();

  const StudyResult r = run_study(sc);
  write_file(man, dir, "replicates.csv", [&](std::ostream& o) { write_replicates_csv(r, o); });
  write_file(man, dir, "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(r, o); });
  switch (sc.kind) {
    case StudyKind::recovery:
      write_file(man, dir, "table1.csv", [&](std::ostream& o) { write_table1_csv(r, o); });
      break;
    case StudyKind::contraction:
      write_file(man, dir, "table3.csv", [&](std::ostream& o) { write_table3_csv(r, o); });
      break;
    case StudyKind::sigma_sweep:
      write_file(man, dir, "sweep.csv", [&](std::ostream& o) { write_sweep_csv(r, o); });
      break;
  }
  std::size_t failed = 0;
  for (const auto& rec : r.records) failed += !rec.ok;
  man["failed_fits"] = failed;
  man.finish("complete");
  out << to_string(sc.kind) << " study: " << r.records.size() << " fits (" << failed
      << " failed) written to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- prior

struct PriorArgs {
  std::string config, out;
};

int cmd_prior(const PriorArgs& a, std::ostream& out, std::ostream& err) {
  const Config cfg = a.config.empty()
                         ? Config{}
                         : load("config file '" + a.config + "'", [&] { return Config::read_file(a.config); });
  double u = 0, alpha = 0, lambda = 0, theta_lo = 0, theta_hi = 0, x_max = 0;
  std::size_t points = 0;
  std::vector<double> sigmas;
  load("config file '" + a.config + "'", [&] {
    u = cfg.get_double("pc.u", 1.0);
    alpha = cfg.get_double("pc.alpha", 1e-5);
    lambda = lambda_from(u, alpha);
    sigmas = cfg.get_doubles("prior.sigmas", {0.05, 0.1, 0.2, 0.3, 0.4});
    theta_lo = cfg.get_double("prior.theta_min", -5.0);
    theta_hi = cfg.get_double("prior.theta_max", 25.0);
    x_max = cfg.get_double("prior.x_max", 5.0);
    points = cfg.get_size("prior.points", 5001);
    if (points < 2) throw std::invalid_argument("prior.points must be at least 2");
    if (!(theta_hi > theta_lo)) throw std::invalid_argument("prior.theta_max must exceed prior.theta_min");
    if (!(x_max > 0)) throw std::invalid_argument("prior.x_max must be positive");
    for (double s : sigmas)
      if (!(s > 0)) throw std::invalid_argument("prior.sigmas must be positive");
    return 0;
  });
  warn_unused(cfg, err);

  const fs::path dir(a.out);
  Manifest man("prior", dir);
  if (!a.config.empty()) man.input("config", a.config);
  man["seed"] = nullptr;
  man["config"] = {{"pc.u", u}, {"pc.alpha", alpha}, {"pc.lambda", lambda}, {"prior.sigmas", sigmas},
                   {"prior.theta_min", theta_lo}, {"prior.theta_max", theta_hi},
                   {"prior.x_max", x_max}, {"prior.points", points}};
  man["lambda"] = lambda;
  man.begin();

  const double n = static_cast<double>(points - 1);
  write_file(man, dir, "pc_prior.csv", [&](std::ostream& o) {
    o << "theta,density\n";
    for (std::size_t i = 0; i < points; ++i) {
      const double th = theta_lo + (theta_hi - theta_lo) * static_cast<double>(i) / n;
      o << num(th) << ',' << num(std::exp(log_pc_prior_univariate(th, lambda))) << '\n';
    }
  });
  write_file(man, dir, "gamma_density.csv", [&](std::ostream& o) {
    o << 'x';
    for (double s : sigmas) o << ",sigma_" << label(s);
    o << '\n';
    for (std::size_t i = 0; i < points; ++i) {
      const double x = x_max * static_cast<double>(i) / n;
      o << num(x);
      for (double s : sigmas) o << ',' << num(lognormal_density(x, s));
      o << '\n';
    }
  });
  man.finish("complete");
  out << "lambda = " << num(lambda) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- precision

struct PrecisionArgs {
  std::string graph, partition, out;
  std::vector<double> taus;
};

int cmd_precision(const PrecisionArgs& a, std::ostream& out, std::ostream&) {
  const auto graph = load("graph file '" + a.graph + "'", [&] { return read_graph_file(a.graph); });
  const auto partition =
      a.partition.empty()
          ? single_region(graph)
          : load("partition file '" + a.partition + "'",
                 [&] { return read_partition_file(graph, a.partition); });
  const auto prec = load("--tau", [&] {
    return build_precision(graph, partition,
                           Eigen::Map<const VectorXd>(a.taus.data(), static_cast<Eigen::Index>(a.taus.size())));
  });
  const fs::path dir(a.out);
  Manifest man("precision", dir);
  man.input("graph", a.graph);
  if (!a.partition.empty()) man.input("partition", a.partition);
  man["seed"] = nullptr;
  man["config"] = {{"tau", a.taus}};
  man.begin();
  write_file(man, dir, "precision.txt", [&](std::ostream& o) { write_triplets(prec.q(), o); });
  man.finish("complete");
  out << "precision written to " << (dir / "precision.txt").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flexible Besag spatial models: precision assembly, PC priors, Laplace fits and simulation studies",
               "fbesag"};
  app.set_version_flag("--version", FBESAG_VERSION);
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a Poisson disease-mapping model");
  fit_cmd->add_option("--graph", fa.graph, "Adjacency graph file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--partition", fa.partition, "Partition CSV (area,label); default one region")
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--data", fa.data, "Observation CSV (area,time,count,offset)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--config", fa.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fa.out, "Output directory")->required();
  fit_cmd->add_option("--seed", fa.seed, "Random seed")->capture_default_str();
  std::size_t ignored_threads = 0;
  fit_cmd->add_option("--threads", ignored_threads, "Accepted for symmetry; a fit is single-threaded");

  StudyArgs sa;
  auto* study_cmd = app.add_subcommand("study", "Run a simulation study");
  study_cmd->add_option("--config", sa.config, "Study config file")->required()->check(CLI::ExistingFile);
  study_cmd->add_option("--out", sa.out, "Output directory")->required();
  study_cmd->add_option("--seed", sa.seed, "Base seed (overrides study.seed; default 1)");
  study_cmd->add_option("--threads", sa.threads, "Worker threads (default: all cores)")
      ->check(CLI::PositiveNumber);

  PriorArgs pa;
  auto* prior_cmd = app.add_subcommand("prior", "Tabulate the PC prior and e^gamma densities");
  prior_cmd->add_option("--config", pa.config, "Config file")->check(CLI::ExistingFile);
  prior_cmd->add_option("--out", pa.out, "Output directory")->required();

  PrecisionArgs xa;
  auto* prec_cmd = app.add_subcommand("precision", "Export Q(tau) as sorted 0-based triplets");
  prec_cmd->add_option("--graph", xa.graph, "Adjacency graph file")->required()->check(CLI::ExistingFile);
  prec_cmd->add_option("--partition", xa.partition, "Partition CSV")->check(CLI::ExistingFile);
  prec_cmd->add_option("--tau", xa.taus, "Precision per sub-region")->required()->delimiter(',');
  prec_cmd->add_option("--out", xa.out, "Output directory")->required();

  std::vector<std::string> argv_store{"fbesag"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(fa, out, err);
    if (*study_cmd) return cmd_study(sa, out, err);
    if (*prior_cmd) return cmd_prior(pa, out, err);
    if (*prec_cmd) return cmd_precision(xa, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNonConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace fbesag
