#include <atomic>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fbesag/cli.hpp"
#include "fbesag/precision.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using fbesag::run_cli;

namespace {

const std::string kData = FBESAG_TEST_DATA;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct ScratchDirs {
  std::vector<fs::path> dirs;
  ~ScratchDirs() {
    std::error_code ec;
    for (const auto& d : dirs) fs::remove_all(d, ec);
  }
};

fs::path scratch(const std::string& name) {
  static std::atomic<int> counter{0};
  static ScratchDirs cleanup;
  const auto dir = fs::temp_directory_path() /
                   ("fbesag_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name);
  fs::remove_all(dir);
  cleanup.dirs.push_back(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

std::vector<std::vector<double>> read_numeric_csv(const fs::path& p, std::vector<std::string>& header) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  header.clear();
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("fit on the five-area fixture") {
  const auto dir = scratch("fit");
  const auto r = cli({"fit", "--graph", kData + "/five_area.graph", "--partition",
                      kData + "/five_area_partition.csv", "--data", kData + "/five_area_data.csv",
                      "--out", dir.string()});
  CHECK_MESSAGE(r.code == 0, r.err);
  const auto summary = slurp(dir / "summary.txt");
  CHECK(summary.find("tau[north].mean = ") != std::string::npos);
  CHECK(summary.find("tau[south].mean = ") != std::string::npos);
  CHECK(summary.find("n_subregions = 2\n") != std::string::npos);
  CHECK(summary.find("converged = true\n") != std::string::npos);
  CHECK(fs::exists(dir / "latent.csv"));
  CHECK(fs::exists(dir / "theta.csv"));

  const auto m = manifest(dir);
  CHECK(m["status"] == "complete");
  CHECK(m["command"] == "fit");
  CHECK(m["seed"] == 1);
  CHECK(m["inputs"].size() == 3);
  for (const auto& in : m["inputs"])
    CHECK(in["sha256"] == fbesag::sha256_file(in["path"].get<std::string>()));
  CHECK(m["config"]["pc.lambda"].get<double>() == doctest::Approx(11.5129).epsilon(1e-5));
  CHECK(m.contains("conventions"));

  // Same inputs and seed: byte-identical outputs.
  const auto again = scratch("fit_again");
  cli({"fit", "--graph", kData + "/five_area.graph", "--partition", kData + "/five_area_partition.csv",
       "--data", kData + "/five_area_data.csv", "--out", again.string()});
  for (const char* f : {"latent.csv", "theta.csv", "summary.txt"}) CHECK(slurp(dir / f) == slurp(again / f));
}

TEST_CASE("fit without a partition is stationary") {
  const auto dir = scratch("fit_stationary");
  const auto r = cli({"fit", "--graph", kData + "/five_area.graph", "--data",
                      kData + "/five_area_data.csv", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(slurp(dir / "summary.txt").find("n_subregions = 1\n") != std::string::npos);
}

TEST_CASE("space-time fit") {
  const auto dir = scratch("fit_temporal");
  const auto r = cli({"fit", "--graph", kData + "/five_area.graph", "--data",
                      kData + "/five_area_temporal.csv", "--out", dir.string()});
  CHECK(r.code == 0);
  const auto summary = slurp(dir / "summary.txt");
  CHECK(summary.find("n_time = 4\n") != std::string::npos);
  CHECK(summary.find("tau_kappa.mean") != std::string::npos);
}

TEST_CASE("input errors exit with code 1 and a line number") {
  const auto dir = scratch("bad");
  const auto r = cli({"fit", "--graph", kData + "/five_area.graph", "--data",
                      kData + "/five_area_bad_data.csv", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("line 4") != std::string::npos);
  CHECK_FALSE(fs::exists(dir));

  CHECK(cli({"fit", "--graph", kData + "/nope.graph", "--data", kData + "/five_area_data.csv",
             "--out", dir.string()})
            .code == 1);
  CHECK(cli({"fit", "--data", kData + "/five_area_data.csv", "--out", dir.string()}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"--help"}).code == 0);

  const auto cfg = scratch("bad_cfg") / "fit.cfg";
  write(cfg, "pc.alpha = 2\n");
  const auto r2 = cli({"fit", "--graph", kData + "/five_area.graph", "--data",
                       kData + "/five_area_data.csv", "--config", cfg.string(), "--out", dir.string()});
  CHECK(r2.code == 1);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("study outputs") {
  const auto base = scratch("study");
  const auto con_cfg = base / "contraction.cfg";
  write(con_cfg,
        "study.kind = contraction\nstudy.replicates = 3\ngrid.rows = 10\ngrid.cols = 10\n"
        "fit.theta_draws = 300\nfit.dic_draws = 300\n");
  const auto con = cli({"study", "--config", con_cfg.string(), "--out", (base / "con").string()});
  REQUIRE_MESSAGE(con.code == 0, con.err);
  const auto table3 = slurp(base / "con" / "table3.csv");
  CHECK(std::count(table3.begin(), table3.end(), '\n') == 1 + 3 * 5);
  CHECK(manifest(base / "con")["status"] == "complete");

  const auto rec_cfg = base / "recovery.cfg";
  write(rec_cfg,
        "study.kind = recovery\nstudy.replicates = 2\ngrid.rows = 10\ngrid.cols = 10\n"
        "generator.log_tau = 1\nfit.theta_draws = 300\nfit.dic_draws = 300\n");
  const auto rec = cli({"study", "--config", rec_cfg.string(), "--out", (base / "rec").string()});
  REQUIRE(rec.code == 0);
  const auto table1 = slurp(base / "rec" / "table1.csv");
  CHECK(table1.rfind("log_tau,model,fits_ok,mean_dic,mean_log_ml,", 0) == 0);
  CHECK(std::count(table1.begin(), table1.end(), '\n') == 4);

  const auto bad_cfg = base / "bad.cfg";
  write(bad_cfg, "study.kind = astrology\n");
  CHECK(cli({"study", "--config", bad_cfg.string(), "--out", (base / "bad").string()}).code == 1);
}

TEST_CASE("study CSVs do not depend on the thread count") {
  const auto base = scratch("threads");
  const auto cfg = base / "rec.cfg";
  write(cfg,
        "study.kind = recovery\nstudy.replicates = 3\ngrid.rows = 8\ngrid.cols = 8\n"
        "generator.log_tau = 0, 2\nfit.theta_draws = 200\nfit.dic_draws = 200\n");
  REQUIRE(cli({"study", "--config", cfg.string(), "--out", (base / "a").string(), "--threads", "1"}).code == 0);
  REQUIRE(cli({"study", "--config", cfg.string(), "--out", (base / "b").string(), "--threads", "4"}).code == 0);
  REQUIRE(cli({"study", "--config", cfg.string(), "--out", (base / "c").string(), "--threads", "2", "--seed", "1"}).code == 0);
  for (const char* f : {"replicates.csv", "aggregate.csv", "table1.csv"}) {
    CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));
    CHECK(slurp(base / "a" / f) == slurp(base / "c" / f));
  }
  REQUIRE(cli({"study", "--config", cfg.string(), "--out", (base / "d").string(), "--seed", "9"}).code == 0);
  CHECK(slurp(base / "a" / "replicates.csv") != slurp(base / "d" / "replicates.csv"));
}

TEST_CASE("prior densities") {
  const auto base = scratch("prior");
  const auto r = cli({"prior", "--out", base.string()});
  REQUIRE(r.code == 0);
  CHECK(manifest(base)["lambda"].get<double>() == doctest::Approx(11.5129).epsilon(1e-5));

  std::vector<std::string> header;
  auto trapezoid = [](const std::vector<std::vector<double>>& rows, std::size_t col) {
    double s = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      s += 0.5 * (rows[i][col] + rows[i - 1][col]) * (rows[i][0] - rows[i - 1][0]);
    return s;
  };
  const auto pc = read_numeric_csv(base / "pc_prior.csv", header);
  CHECK(header == std::vector<std::string>{"theta", "density"});
  CHECK(std::abs(trapezoid(pc, 1) - 1) < 1e-3);

  const auto gamma = read_numeric_csv(base / "gamma_density.csv", header);
  CHECK(header == std::vector<std::string>{"x", "sigma_0.05", "sigma_0.1", "sigma_0.2", "sigma_0.3", "sigma_0.4"});
  for (std::size_t c = 1; c < header.size(); ++c) CHECK(std::abs(trapezoid(gamma, c) - 1) < 1e-3);

  const auto cfg = base / "bad.cfg";
  write(cfg, "pc.u = -1\n");
  CHECK(cli({"prior", "--config", cfg.string(), "--out", (base / "bad").string()}).code == 1);
}

TEST_CASE("precision export") {
  const auto dir = scratch("precision");
  const auto r = cli({"precision", "--graph", kData + "/five_area.graph", "--partition",
                      kData + "/five_area_partition.csv", "--tau", "1,2", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto text = slurp(dir / "precision.txt");
  CHECK(text.rfind("0 0 2.5\n0 1 -1\n0 3 -1.5\n", 0) == 0);
  CHECK(text.find("3 3 6.5\n") != std::string::npos);
  CHECK(cli({"precision", "--graph", kData + "/five_area.graph", "--partition",
             kData + "/five_area_partition.csv", "--tau", "1", "--out", dir.string()})
            .code == 1);
}
