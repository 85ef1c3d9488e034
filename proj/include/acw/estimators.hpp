#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acw/basis.hpp"
#include "acw/data_model.hpp"
#include "acw/survival_models.hpp"
#include "acw/weighting.hpp"

namespace acw {

enum class Method { Naive, Or, Ipsw, Cw, Acw1, Acw2 };

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

/// Per-model SCAD settings resolved by cross validation (or fixed by the
/// caller); empty optionals mean unpenalized.
struct PenaltySet {
  std::optional<ScadSpec> outcome1, outcome0, censoring1, censoring0, calibration, propensity,
      ipsw;
};

/// All working models fitted on one dataset with one shared design map.
struct NuisanceBundle {
  CoxFit outcome1, outcome0;
  CoxFit censoring1, censoring0;
  std::optional<WeightFit> calibration;
  std::optional<WeightFit> ipsw;
  WeightFit propensity;
  BasisExpander expander;

  const CoxFit& outcome(bool arm) const { return arm ? outcome1 : outcome0; }
  const CoxFit& censoring(bool arm) const { return arm ? censoring1 : censoring0; }
  /// Sampling weights used by the CW/ACW family: calibration when present,
  /// otherwise IPSW.
  const WeightFit& sampling() const;
};

/// Chooses per-model epsilons by cross validation from the base spec's grid
/// (the default grid scales with each model's score when the grid is empty).
PenaltySet select_penalties(const CombinedDataset& data, const BasisExpander& expander,
                            const ScadSpec& base, bool want_calibration, bool want_ipsw,
                            std::uint64_t seed);

/// Fits outcome and censoring Cox models for both arms, the propensity model,
/// and the requested sampling-weight models. An arm with no censored subjects
/// gets a zero censoring hazard. Throws FitError naming the model on failure.
NuisanceBundle fit_nuisances(const CombinedDataset& data, const BasisExpander& expander,
                             const PenaltySet& penalties = {}, bool want_calibration = true,
                             bool want_ipsw = false);

struct CurveEstimate {
  Method method = Method::Acw1;
  bool arm = true;
  StepSurvival curve;
  int clamped_increments = 0;  // ACW2 negative hazard increments clamped to 0
};

/// Treatment effect functional of the two survival curves. tau is the time
/// horizon, except for QuantileDiff where it is the quantile level in (0,1).
struct EstimandSpec {
  enum class Kind { SurvDiffAt, RmstDiff, RmtlRatio, QuantileDiff };
  Kind kind = Kind::RmstDiff;
  double tau = 0.0;
};

std::string estimand_name(EstimandSpec::Kind k);
std::optional<EstimandSpec::Kind> parse_estimand(const std::string& name);

/// Builds all requested curves for one arm in a single sweep over the grid of
/// distinct RCT follow-up times (capped at t_max, which estimation only needs
/// up to the horizon).
std::map<Method, CurveEstimate> estimate_curves(
    const CombinedDataset& data, const NuisanceBundle& bundle, const std::vector<Method>& methods,
    bool arm, double t_max = std::numeric_limits<double>::infinity());

CurveEstimate estimate_curve_naive(const CombinedDataset& data, const NuisanceBundle& bundle,
                                   bool arm);
CurveEstimate estimate_curve_or(const CombinedDataset& data, const NuisanceBundle& bundle,
                                bool arm);
CurveEstimate estimate_curve_weighted(const CombinedDataset& data, const NuisanceBundle& bundle,
                                      bool arm, Method method);
CurveEstimate estimate_curve_acw1(const CombinedDataset& data, const NuisanceBundle& bundle,
                                  bool arm);
CurveEstimate estimate_curve_acw2(const CombinedDataset& data, const NuisanceBundle& bundle,
                                  bool arm);

/// Per-record values of the censoring-martingale integral
/// int_0^t exp(LambdaC(u-) + Lambda(u-)) dM^C(u); nonzero only for RCT
/// subjects of the given arm.
Eigen::VectorXd censoring_martingale_terms(const CombinedDataset& data,
                                           const NuisanceBundle& bundle, bool arm, double t);

/// Per-record estimated efficient-influence-function values at time t,
/// centered at the supplied plug-in survival value. Their mean equals
/// ACW1(t) - s_plugin.
Eigen::VectorXd estimate_eif_values(const CombinedDataset& data, const NuisanceBundle& bundle,
                                    bool arm, double t, double s_plugin);

double apply_estimand(const StepSurvival& s1, const StepSurvival& s0, const EstimandSpec& spec);

}  // namespace acw
