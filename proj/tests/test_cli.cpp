#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "acw/data_model.hpp"
#include "acw/rng.hpp"

using namespace acw;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(ACW_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_fixture(const std::string& path, bool os_only = false) {
  Rng rng = make_rng(2718);
  std::vector<SubjectRecord> recs;
  int id = 0;
  if (!os_only) {
    for (int arm = 0; arm <= 1; ++arm)
      for (int i = 0; i < 25; ++i) {
        SubjectRecord r;
        r.id = "r" + std::to_string(id++);
        r.source = Source::Rct;
        r.x = Eigen::VectorXd::NullaryExpr(2, [&](Eigen::Index) { return normal(rng); });
        double te = exponential(rng) * std::exp(-0.3 * r.x[0]);
        double tc = 2.0 * exponential(rng);
        r.u = std::min(te, tc);
        r.event = te <= tc || i == 0;
        r.a = arm == 1;
        recs.push_back(std::move(r));
      }
  }
  for (int j = 0; j < 30; ++j) {
    SubjectRecord r;
    r.id = "o" + std::to_string(id++);
    r.source = Source::Os;
    r.x = Eigen::VectorXd::NullaryExpr(2, [&](Eigen::Index) { return normal(rng) + 0.2; });
    r.design_weight = 2.0;
    recs.push_back(std::move(r));
  }
  write_csv(CombinedDataset(recs), path);
}

// Small but not degenerate: the RCT pool yields n ~ 310, enough for the
// sieve design's cross validation.
const std::string kSimSizes =
    " --pop-size 20000 --rct-pool 12000 --os-pool 8000 --os-sample 400 --tau 4";

}  // namespace

TEST_CASE("estimate happy path writes both files and exits zero") {
  write_fixture("cli_fixture.csv");
  int rc = run_cli("estimate --input cli_fixture.csv --estimators or --estimand rmstdiff "
                   "--tau 1 --out-dir cli_out --seed 3");
  CHECK(rc == 0);
  std::string estimates = slurp("cli_out/estimates.csv");
  std::string curves = slurp("cli_out/curves.csv");
  CHECK(estimates.find("method,estimand,tau,point") != std::string::npos);
  CHECK(estimates.find("or,rmstdiff,1,") != std::string::npos);
  CHECK(curves.find("or,1,0,1") != std::string::npos);
  CHECK(estimates.substr(0, 9) == "# acwsurv");
  CHECK(estimates.find("seed=3") != std::string::npos);
}

TEST_CASE("an OS-only dataset exits 1 naming the problem") {
  write_fixture("cli_os_only.csv", true);
  CHECK(run_cli("estimate --input cli_os_only.csv --estimators or --tau 1") == 1);
}

TEST_CASE("an unknown estimator exits 1") {
  write_fixture("cli_fixture.csv");
  CHECK(run_cli("estimate --input cli_fixture.csv --estimators bogus --tau 1") == 1);
}

TEST_CASE("missing input file exits 3") {
  CHECK(run_cli("estimate --input does_not_exist.csv --estimators or") == 3);
}

TEST_CASE("simulate smoke run produces one row per estimator") {
  int rc = run_cli("simulate --scenario 1 --reps 2 --bootstrap 2 --seed 9 --threads 2 "
                   "--out-dir cli_sim" + kSimSizes);
  CHECK(rc == 0);
  std::string report = slurp("cli_sim/mc_report.csv");
  int rows = 0;
  std::stringstream ss(report);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty() && line[0] != '#' && line.find("estimator,") != 0) ++rows;
  CHECK(rows == 8);
  CHECK(report.find("truth_theta=") != std::string::npos);
}

TEST_CASE("simulate with zero reps exits 1") {
  CHECK(run_cli("simulate --scenario 1 --reps 0" + kSimSizes) == 1);
}

TEST_CASE("repeated runs with one seed are byte-identical") {
  int rc1 = run_cli("simulate --scenario 2 --reps 2 --bootstrap 2 --seed 31 --threads 2 "
                    "--estimators naive,or,acw2 --out-dir cli_det_a" + kSimSizes);
  int rc2 = run_cli("simulate --scenario 2 --reps 2 --bootstrap 2 --seed 31 --threads 1 "
                    "--estimators naive,or,acw2 --out-dir cli_det_b" + kSimSizes);
  REQUIRE(rc1 == 0);
  REQUIRE(rc2 == 0);
  CHECK(slurp("cli_det_a/mc_report.csv") == slurp("cli_det_b/mc_report.csv"));

  write_fixture("cli_fixture.csv");
  std::string est = "bootstrap --input cli_fixture.csv --estimators acw1,acw2 --estimand "
                    "rmstdiff --tau 1.5 --bootstrap 8 --seed 12 ";
  REQUIRE(run_cli(est + "--threads 2 --out-dir cli_det_c") == 0);
  REQUIRE(run_cli(est + "--threads 1 --out-dir cli_det_d") == 0);
  CHECK(slurp("cli_det_c/estimates.csv") == slurp("cli_det_d/estimates.csv"));
  CHECK(slurp("cli_det_c/curves.csv") == slurp("cli_det_d/curves.csv"));
}

TEST_CASE("config file values apply and flags override them") {
  write_fixture("cli_fixture.csv");
  std::ofstream cfg("cli_cfg.ini");
  cfg << "# estimation settings\n"
      << "input = cli_fixture.csv\n"
      << "estimators = or,acw2\n"
      << "tau = 1.5\n"
      << "out_dir = cli_cfg_out\n"
      << "seed = 21\n";
  cfg.close();
  REQUIRE(run_cli("estimate --config cli_cfg.ini") == 0);
  std::string est = slurp("cli_cfg_out/estimates.csv");
  CHECK(est.find("or,rmstdiff,1.5,") != std::string::npos);
  CHECK(est.find("acw2,rmstdiff,1.5,") != std::string::npos);
  CHECK(est.find("seed=21") != std::string::npos);

  REQUIRE(run_cli("estimate --config cli_cfg.ini --tau 2 --out-dir cli_cfg_out2") == 0);
  CHECK(slurp("cli_cfg_out2/estimates.csv").find("or,rmstdiff,2,") != std::string::npos);
}

TEST_CASE("bootstrap subcommand insists on replicates") {
  write_fixture("cli_fixture.csv");
  CHECK(run_cli("bootstrap --input cli_fixture.csv --estimators or --bootstrap 0") == 1);
}

TEST_CASE("truth subcommand prints the oracle value") {
  std::string cmd = std::string(ACW_CLI_PATH) +
                    " truth --scenario 1 --tau 20 --n-mc 50000 --seed 4 > cli_truth.txt 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  std::string out = slurp("cli_truth.txt");
  CHECK(out.find("theta=") != std::string::npos);
  CHECK(out.find("mu1=") != std::string::npos);
}
