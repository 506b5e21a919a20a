#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fbesag/studies.hpp"

using namespace fbesag;

namespace {

std::string csv(const StudyResult& r, void (*writer)(const StudyResult&, std::ostream&)) {
  std::ostringstream out;
  writer(r, out);
  return out.str();
}

std::size_t lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

StudyConfig small_recovery(std::size_t reps, std::uint64_t seed = 1) {
  auto cfg = study_config_from(Config::parse(
      "study.kind = recovery\n"
      "grid.rows = 12\n"
      "grid.cols = 12\n"
      "generator.log_tau = 2\n"
      "fit.theta_draws = 500\n"
      "fit.dic_draws = 500\n"));
  cfg.replicates = reps;
  cfg.seed = seed;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("built-in partitions") {
  const std::vector<std::pair<std::string, std::size_t>> expected{
      {"1", 1}, {"3", 3}, {"4A", 4}, {"4B", 4}, {"5", 5}, {"6", 6}};
  for (const auto& [name, p] : expected) {
    const auto m = builtin_model(name, 20, 20);
    CHECK(m.name == name);
    CHECK(m.partition.n_subregions() == p);
    const auto sizes = m.partition.subregion_sizes();
    CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 400);
  }
  CHECK(builtin_model("4A", 20, 20).partition.subregion_sizes() ==
        std::vector<std::size_t>{100, 100, 100, 100});
  CHECK(builtin_model("4B", 20, 20).partition.subregion_sizes() ==
        std::vector<std::size_t>{100, 100, 100, 100});
  CHECK_THROWS_AS(builtin_model("7", 20, 20), std::invalid_argument);
}

TEST_CASE("study kinds") {
  CHECK(parse_study_kind("recovery") == StudyKind::recovery);
  CHECK(parse_study_kind("sweep") == StudyKind::sigma_sweep);
  CHECK(parse_study_kind("sigma_sweep") == StudyKind::sigma_sweep);
  CHECK(to_string(StudyKind::contraction) == "contraction");
  CHECK_THROWS_AS(parse_study_kind("bogus"), std::invalid_argument);
}

TEST_CASE("study configuration defaults and errors") {
  const auto rec = study_config_from(Config::parse("study.kind = recovery\n"));
  CHECK(rec.graph.n_areas() == 400);
  CHECK(rec.models.size() == 3);
  CHECK(rec.models[rec.generator_model].name == "4A");
  CHECK(rec.log_tau_levels == std::vector<double>{-2, -1, 0, 1, 2, 3});
  CHECK(rec.generator_sigma_gamma == 0.2);
  CHECK(rec.intercept == 2.0);
  CHECK(rec.replicates == 100);

  const auto con = study_config_from(Config::parse("study.kind = contraction\n"));
  CHECK(con.models.size() == 5);
  CHECK(con.models[con.generator_model].name == "1");
  CHECK(con.log_tau_levels == std::vector<double>{0.69});
  CHECK(con.generator_sigma_gamma == 0.0);

  const auto sw = study_config_from(Config::parse("study.kind = sweep\n"));
  REQUIRE(sw.true_theta);
  CHECK(sw.true_theta->size() == 4);
  CHECK((*sw.true_theta)[3] == 1.81);
  CHECK(sw.sweep_sigmas.front() == 0.02);
  CHECK(sw.sweep_sigmas.back() == 0.3);

  CHECK_THROWS_AS(study_config_from(Config::parse("study.replicates = 3\n")), std::invalid_argument);
  CHECK_THROWS_AS(study_config_from(Config::parse("study.kind = recovery\nmodels = 4A\n")),
                  std::invalid_argument);
  CHECK_THROWS_AS(study_config_from(Config::parse("study.kind = recovery\ngenerator.model = 6\n")),
                  std::invalid_argument);
  CHECK_THROWS_AS(study_config_from(Config::parse("study.kind = recovery\nstudy.replicates = 0\n")),
                  std::invalid_argument);
}

TEST_CASE("generator") {
  const auto g = grid_graph(20, 20);
  const auto quads = quadrant_partition(20, 20, {10}, {10});

  const auto flat = simulate_dataset(g, quads, 1.3, 0.0, 2.0, 9);
  CHECK(flat.theta_true == VectorXd::Constant(4, 1.3));
  CHECK(std::abs(flat.field.sum()) < 1e-10);
  CHECK(flat.counts.size() == 400);

  const auto again = simulate_dataset(g, quads, 1.3, 0.0, 2.0, 9);
  CHECK(again.counts == flat.counts);
  CHECK(again.field == flat.field);

  // A stationary generator and an equal-precision flexible one draw the same field.
  const auto stationary = simulate_dataset(g, single_region(g), 1.3, 0.0, 2.0, 9);
  CHECK((stationary.field - flat.field).cwiseAbs().maxCoeff() < 1e-10);

  const auto rough = simulate_dataset(g, quads, 0.0, 0.2, 2.0, 4);
  CHECK(rough.theta_true.size() == 4);
  CHECK((rough.theta_true.array() != 0.0).all());

  const auto smooth = simulate_dataset(g, single_region(g), 3.0, 0.0, 2.0, 31);
  const double mean = std::accumulate(smooth.counts.begin(), smooth.counts.end(), 0.0) / 400;
  CHECK(mean == doctest::Approx(std::exp(2.0)).epsilon(0.15));

  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto t = draw_theta_true(0.5, 0.2, 1, static_cast<std::uint64_t>(i));
    sum += t[0];
    sq += t[0] * t[0];
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::sqrt(sq / n - (sum / n) * (sum / n)) == doctest::Approx(0.2).epsilon(0.03));
}

TEST_CASE("single replicate, single model smoke run") {
  auto cfg = small_recovery(1);
  cfg.models = {builtin_model("1", 12, 12)};
  cfg.generator_model = 0;
  cfg.generator_sigma_gamma = 0;
  const auto r = recovery_study(cfg);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].ok);
  CHECK(lines(csv(r, write_replicates_csv)) == 2);
  CHECK(lines(csv(r, write_table1_csv)) == 2);
}

TEST_CASE("sweep of length one") {
  auto cfg = study_config_from(Config::parse(
      "study.kind = sweep\ngrid.rows = 12\ngrid.cols = 12\nsweep.sigma = 0.2\n"
      "fit.theta_draws = 300\nfit.dic_draws = 300\n"));
  cfg.replicates = 1;
  const auto r = sigma_sweep(cfg);
  CHECK(r.records.size() == 2);  // stationary and flexible fit
  const auto table = csv(r, write_sweep_csv);
  CHECK(lines(table) == 3);
  CHECK(table.rfind("sigma_gamma,model,mean_log_precisions,mean_spread,coverage_all\n", 0) == 0);
}

TEST_CASE("studies are reproducible and thread-count independent") {
  auto cfg = small_recovery(4);
  const auto a = recovery_study(cfg);
  cfg.threads = 3;
  const auto b = recovery_study(cfg);
  for (auto writer : {write_replicates_csv, write_aggregate_csv, write_table1_csv, write_table3_csv})
    CHECK(csv(a, writer) == csv(b, writer));
  cfg.seed = 2;
  CHECK(csv(a, write_replicates_csv) != csv(recovery_study(cfg), write_replicates_csv));

  CHECK(a.records.size() == 4 * 3);
  for (const auto& row : a.aggregate)
    if (row.metric.rfind("prop_", 0) == 0 || row.metric.rfind("coverage", 0) == 0) {
      CHECK(row.value >= 0);
      CHECK(row.value <= 1);
    }
  const auto table3 = csv(a, write_table3_csv);
  CHECK(lines(table3) == 1 + 4 * 3);
}

TEST_CASE("recovery behaviour at log tau 2") {
  auto cfg = study_config_from(Config::parse(
      "study.kind = recovery\ngenerator.log_tau = 2\nfit.theta_draws = 500\nfit.dic_draws = 1000\n"));
  cfg.replicates = 40;
  const auto r = recovery_study(cfg);
  const double stationary = r.metric(2, "1", "mean_theta_bar");
  CHECK(std::abs(r.metric(2, "4A", "mean_theta_bar") - stationary) < 0.1);
  CHECK(r.metric(2, "4B", "prop_lower_dic") > 0.5);
  CHECK(r.metric(2, "4A", "fits_ok") == 40);

  // Coverage agrees across disjoint seed sets within three binomial standard errors.
  auto other = cfg;
  other.seed = 1000;
  const auto r2 = recovery_study(other);
  for (int k = 1; k <= 4; ++k) {
    const std::string m = "coverage_" + std::to_string(k);
    const double p1 = r.metric(2, "4A", m), p2 = r2.metric(2, "4A", m);
    const double p = std::clamp(0.5 * (p1 + p2), 0.05, 0.95);
    CHECK(std::abs(p1 - p2) <= 3 * std::sqrt(2 * p * (1 - p) / 40));
  }
}

TEST_CASE("deviation metrics") {
  ReplicateRecord s, m;
  s.theta_mean = VectorXd::Constant(1, 0.7);
  m.theta_mean = VectorXd(3);
  m.theta_mean << 0.6, 0.75, 0.9;
  const auto d = deviation_from(s, m);
  CHECK(d.max_abs == doctest::Approx(0.2));
  CHECK(d.abs_mean == doctest::Approx(0.05));
}

TEST_CASE("the contraction study needs a stationary generator") {
  auto cfg = study_config_from(Config::parse("study.kind = contraction\ngrid.rows = 8\ngrid.cols = 8\n"));
  cfg.generator_model = 2;
  cfg.generator_sigma_gamma = 0.2;
  CHECK_THROWS_AS(contraction_study(cfg), std::invalid_argument);
}

TEST_CASE("stationary fits recover the generating precision on average") {
  auto cfg = study_config_from(Config::parse(
      "study.kind = contraction\nmodels = 1\nfit.theta_draws = 500\nfit.dic_draws = 100\n"));
  CHECK(cfg.replicates == 100);
  const auto r = contraction_study(cfg);
  const double mean = r.metric(0.69, "1", "mean_theta_1");
  CAPTURE(mean);
  CHECK(std::abs(mean - 0.69) < 0.1);
}
