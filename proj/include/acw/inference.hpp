#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "acw/estimators.hpp"
#include "acw/rng.hpp"

namespace acw {

/// One estimation design: a basis map, resolved penalties, and the estimators
/// computed on it. The simulation runs a plain (degree-1) plan and a sieve
/// plan side by side.
struct DesignPlan {
  std::string label;  // appended to method names in reports, e.g. "(s)"
  std::vector<Method> methods;
  BasisSpec basis;
  PenaltySet penalties;
  bool want_calibration = true;
  bool want_ipsw = false;
};

/// Point results of one design on one dataset.
struct DesignResult {
  std::map<Method, std::pair<CurveEstimate, CurveEstimate>> curves;  // (arm1, arm0)
  std::map<Method, double> theta, mu1, mu0;
};

/// Fits nuisances and all requested curves, applies the estimand. t_max
/// bounds the evaluation grid (pass +inf for full curves). Throws FitError on
/// any nuisance failure or a non-finite estimate.
DesignResult run_design(const CombinedDataset& data, const DesignPlan& plan,
                        const EstimandSpec& estimand,
                        double t_max = std::numeric_limits<double>::infinity());

struct BootstrapSpec {
  int b = 0;
  std::uint64_t seed = 0;
  enum class Ci { Normal, Percentile } ci = Ci::Normal;
  int threads = 1;
};

struct BootstrapSummary {
  double point = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  int b = 0;
  int failures = 0;
};

struct TripleSummary {
  BootstrapSummary mu1, mu0, theta;
};

/// Keyed by (design index, method).
using EstimatorKey = std::pair<int, Method>;

/// Stratified nonparametric bootstrap: every replicate resamples n RCT rows
/// and m OS rows with replacement, independently, and reruns every design.
/// A failed replicate is redrawn up to 5 times, then counted as a failure;
/// more than half failing is an error. Deterministic given the seed,
/// regardless of thread count.
std::map<EstimatorKey, TripleSummary> bootstrap_designs(const CombinedDataset& data,
                                                        const std::vector<DesignPlan>& plans,
                                                        const EstimandSpec& estimand,
                                                        const BootstrapSpec& spec);

/// Single-estimator convenience wrapper: bootstraps the first method of the
/// plan and returns the theta summary.
BootstrapSummary bootstrap(const CombinedDataset& data, const DesignPlan& plan,
                           const EstimandSpec& estimand, int b, std::uint64_t seed,
                           BootstrapSpec::Ci ci = BootstrapSpec::Ci::Normal, int threads = 1);

/// Resample used by the bootstrap, exposed for tests: n RCT rows and m OS
/// rows drawn with replacement, RCT block first.
CombinedDataset resample(const CombinedDataset& data, Rng& rng);

/// Empirical quantile with linear interpolation (R type 7).
double quantile_type7(std::vector<double> sorted_or_not, double p);

}  // namespace acw
