#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "acw/data_model.hpp"
#include "acw/inference.hpp"
#include "acw/rng.hpp"

namespace acw {

/// Linear predictor with optional per-coordinate e^x transforms, covering
/// every data-generating model of the study.
struct LinPred {
  double intercept = 0.0;
  std::array<double, 3> coef{0.0, 0.0, 0.0};
  std::array<bool, 3> exp_transform{false, false, false};

  double eval(const Eigen::VectorXd& x) const {
    double v = intercept;
    for (int j = 0; j < 3; ++j) v += coef[static_cast<std::size_t>(j)] *
                                     (exp_transform[static_cast<std::size_t>(j)] ? std::exp(x[j]) : x[j]);
    return v;
  }
};

/// Data-generating models: hazards lambda(t|x) = t * exp(linpred), sampling
/// and propensity scores on the expit scale. The two columns of constants
/// are selected per component by the correct/incorrect flags.
struct TruthSpec {
  LinPred outcome1, outcome0;
  LinPred censoring1, censoring0;
  LinPred sampling;
  LinPred propensity;
};

TruthSpec make_truth(bool outcome_correct, bool weights_correct);

struct ScenarioSpec {
  int id = 1;  // 1..4
  bool outcome_correct = true;
  bool weights_correct = true;
  std::size_t pop_size = 200000;
  std::size_t rct_pool = 50000;
  std::size_t os_pool = 150000;
  std::size_t os_sample = 5000;
  double tau = 20.0;

  void check() const;
};

ScenarioSpec scenario(int id);

/// One simulated combined sample: truncated-normal covariates, Bernoulli
/// trial membership over the RCT pool, a simple random OS sample with
/// d = N2/m, and event/censoring times by inverse transform of
/// Lambda(t) = t^2/2 * exp(linpred).
CombinedDataset generate_replicate(const ScenarioSpec& scenario, const TruthSpec& truth, Rng& rng);

struct TrueValues {
  double mu1 = 0.0, mu0 = 0.0, theta = 0.0;
  double mc_se = 0.0;
  std::uint64_t seed = 0;
};

/// Monte Carlo oracle for the target-population RMST contrast: averages the
/// closed-form per-covariate integral of exp(-t^2/2 * rate) over fresh
/// truncated-normal draws.
TrueValues true_ate(const TruthSpec& truth, double tau, std::size_t n_mc, std::uint64_t seed);

struct McCell {
  double bias = 0.0, ese = 0.0, rse_percent = 0.0, cp_percent = 0.0;
};

struct McRow {
  std::string estimator;
  McCell mu1, mu0, theta;
};

struct McReport {
  int scenario_id = 0;
  int reps = 0;
  int bootstrap_b = 0;
  std::uint64_t seed = 0;
  TrueValues truth;
  std::vector<McRow> rows;
  int failed_replicates = 0;
  /// Per-replicate estimates (estimator -> theta draws), exported for
  /// external plotting.
  std::vector<std::pair<std::string, std::vector<double>>> replicate_log;
};

struct McOptions {
  int reps = 200;
  int bootstrap_b = 50;
  BootstrapSpec::Ci ci = BootstrapSpec::Ci::Normal;
  std::uint64_t seed = 1;
  int threads = 1;
  /// (method, sieve?) pairs; sieve runs the degree-2 SCAD-penalized design.
  std::vector<std::pair<Method, bool>> estimators;
  bool keep_replicate_log = false;
};

std::vector<std::pair<Method, bool>> default_mc_estimators();

McReport run_mc_study(const ScenarioSpec& scenario, const McOptions& options);

}  // namespace acw
