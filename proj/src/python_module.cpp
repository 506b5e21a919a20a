#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fbesag/cli.hpp"
#include "fbesag/graph.hpp"
#include "fbesag/inference.hpp"
#include "fbesag/pcprior.hpp"
#include "fbesag/precision.hpp"

namespace py = pybind11;
using namespace fbesag;

namespace {

std::vector<Observation> make_observations(const std::vector<std::uint64_t>& counts,
                                           const std::optional<std::vector<double>>& offsets,
                                           const std::optional<std::vector<std::size_t>>& areas,
                                           const std::optional<std::vector<std::size_t>>& times) {
  const std::size_t n = counts.size();
  auto check = [n](std::size_t m, const char* what) {
    if (m != n) throw std::invalid_argument(std::string(what) + " must have the same length as counts");
  };
  if (offsets) check(offsets->size(), "offsets");
  if (areas) check(areas->size(), "areas");
  if (times) check(times->size(), "times");
  std::vector<Observation> obs(n);
  for (std::size_t i = 0; i < n; ++i) {
    obs[i].area = areas ? (*areas)[i] : i;
    if (times) obs[i].time = (*times)[i];
    obs[i].count = counts[i];
    obs[i].offset = offsets ? (*offsets)[i] : 1.0;
  }
  return obs;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Flexible Besag spatial models with Laplace-approximate inference";

  auto parse_error = py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  (void)parse_error;

  py::class_<AdjacencyGraph>(m, "Graph")
      .def(py::init<std::size_t, const std::vector<Edge>&>(), py::arg("n_areas"), py::arg("edges"))
      .def_property_readonly("n_areas", &AdjacencyGraph::n_areas)
      .def_property_readonly("n_edges", &AdjacencyGraph::n_edges)
      .def("neighbors", &AdjacencyGraph::neighbors, py::arg("area"))
      .def("edges", &AdjacencyGraph::edges)
      .def("to_text", [](const AdjacencyGraph& g) { return serialize_graph(g); })
      .def("__repr__", [](const AdjacencyGraph& g) {
        return "Graph(n_areas=" + std::to_string(g.n_areas()) + ", n_edges=" + std::to_string(g.n_edges()) + ")";
      });
  m.def("parse_graph", [](const std::string& text) { return parse_graph(text); }, py::arg("text"));
  m.def("read_graph", &read_graph_file, py::arg("path"));
  m.def("grid_graph", &grid_graph, py::arg("rows"), py::arg("cols"));

  py::class_<Partition>(m, "Partition")
      .def_property_readonly("n_areas", &Partition::n_areas)
      .def_property_readonly("n_subregions", &Partition::n_subregions)
      .def_property_readonly("labels", &Partition::labels)
      .def_property_readonly("names", &Partition::names)
      .def("cross_count", &Partition::cross_count, py::arg("area"), py::arg("subregion"));
  m.def("partition", py::overload_cast<const AdjacencyGraph&, const std::vector<std::string>&>(&build_partition),
        py::arg("graph"), py::arg("labels"));
  m.def("partition", py::overload_cast<const AdjacencyGraph&, const std::vector<int>&>(&build_partition),
        py::arg("graph"), py::arg("labels"));
  m.def("single_region", &single_region, py::arg("graph"));
  m.def("read_partition", &read_partition_file, py::arg("graph"), py::arg("path"));

  m.def("precision",
        [](const AdjacencyGraph& g, const Partition& p, const VectorXd& taus) {
          return build_precision(g, p, taus).q();
        },
        py::arg("graph"), py::arg("partition"), py::arg("taus"),
        "Sparse fbesag precision Q(tau) as a scipy.sparse matrix.");
  m.def("besag_precision", &besag_precision, py::arg("graph"), py::arg("tau"));
  m.def("log_generalized_determinant",
        [](const AdjacencyGraph& g, const Partition& p, const VectorXd& taus) {
          return log_generalized_determinant(build_precision(g, p, taus));
        },
        py::arg("graph"), py::arg("partition"), py::arg("taus"));
  m.def("sample_field",
        [](const AdjacencyGraph& g, const Partition& p, const VectorXd& taus, std::uint64_t seed) {
          const auto prec = build_precision(g, p, taus);
          return sample_field(prec, sum_to_zero_constraints(prec), seed);
        },
        py::arg("graph"), py::arg("partition"), py::arg("taus"), py::arg("seed") = 1);

  m.def("lambda_from", &lambda_from, py::arg("u") = 1.0, py::arg("alpha") = 1e-5);
  m.def("log_pc_prior", &log_pc_prior_univariate, py::arg("theta"), py::arg("lam"));
  m.def("log_joint_pc_prior",
        [](const VectorXd& theta, double u, double alpha, double sigma_gamma) {
          return log_joint_pc_prior(theta, PcPriorConfig(u, alpha, sigma_gamma, static_cast<std::size_t>(theta.size())));
        },
        py::arg("theta"), py::arg("u") = 1.0, py::arg("alpha") = 1e-5, py::arg("sigma_gamma") = 0.15);
  m.def("sample_prior",
        [](std::size_t p, std::size_t count, double u, double alpha, double sigma_gamma, std::uint64_t seed) {
          const auto draws = sample_prior(PcPriorConfig(u, alpha, sigma_gamma, p), seed, count);
          MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(p));
          for (std::size_t i = 0; i < count; ++i) out.row(static_cast<Eigen::Index>(i)) = draws[i].theta.transpose();
          return out;
        },
        py::arg("p"), py::arg("count"), py::arg("u") = 1.0, py::arg("alpha") = 1e-5,
        py::arg("sigma_gamma") = 0.15, py::arg("seed") = 1,
        "Rows are draws of the log-precision vector.");

  py::class_<Summary>(m, "Summary")
      .def_readonly("mean", &Summary::mean)
      .def_readonly("q025", &Summary::q025)
      .def_readonly("q975", &Summary::q975)
      .def("__repr__", [](const Summary& s) {
        std::ostringstream o;
        o << "Summary(mean=" << s.mean << ", q025=" << s.q025 << ", q975=" << s.q975 << ")";
        return o.str();
      });

  py::class_<ModelFit>(m, "ModelFit")
      .def_readonly("theta_names", &ModelFit::theta_names)
      .def_readonly("theta_mode", &ModelFit::theta_mode)
      .def_readonly("theta_cov", &ModelFit::theta_cov)
      .def_readonly("theta_summaries", &ModelFit::theta_summaries)
      .def_readonly("tau_summaries", &ModelFit::tau_summaries)
      .def_readonly("latent_mean", &ModelFit::latent_mean)
      .def_readonly("latent_sd", &ModelFit::latent_sd)
      .def_readonly("dic", &ModelFit::dic)
      .def_readonly("effective_parameters", &ModelFit::effective_parameters)
      .def_readonly("log_ml", &ModelFit::log_ml)
      .def_property_readonly("converged", [](const ModelFit& f) { return f.diagnostics.converged; });

  m.def("fit",
        [](const AdjacencyGraph& g, const Partition& p, const std::vector<std::uint64_t>& counts,
           const std::optional<std::vector<double>>& offsets,
           const std::optional<std::vector<std::size_t>>& areas,
           const std::optional<std::vector<std::size_t>>& times, double sigma_gamma,
           std::size_t theta_draws, std::size_t dic_draws, std::uint64_t seed) {
          std::size_t n_time = 0;
          if (times)
            for (auto t : *times) n_time = std::max(n_time, t + 1);
          auto spec = ModelSpec::create(g, p, make_observations(counts, offsets, areas, times), n_time)
                          .with_sigma_gamma(sigma_gamma);
          FitOptions opt;
          opt.theta_draws = theta_draws;
          opt.dic_draws = dic_draws;
          opt.seed = seed;
          py::gil_scoped_release release;
          return fit(spec, opt);
        },
        py::arg("graph"), py::arg("partition"), py::arg("counts"), py::arg("offsets") = py::none(),
        py::arg("areas") = py::none(), py::arg("times") = py::none(), py::arg("sigma_gamma") = 0.15,
        py::arg("theta_draws") = 2000, py::arg("dic_draws") = 2000, py::arg("seed") = 1,
        "Poisson fbesag fit. Areas and times are 0-based; areas default to 0..n-1.");

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
