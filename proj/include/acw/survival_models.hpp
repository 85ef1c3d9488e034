#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "acw/basis.hpp"
#include "acw/data_model.hpp"

namespace acw {

enum class CoxTarget { Event, Censoring };

/// Fitted Cox proportional-hazards model for one arm: coefficients on the
/// expanded design plus a Breslow baseline cumulative hazard.
struct CoxFit {
  Eigen::VectorXd beta;
  StepSurvival baseline;  // cumulative hazard, value_at_zero = 0, nondecreasing
  bool arm = true;
  CoxTarget target = CoxTarget::Event;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  std::string diagnostic;
  BasisExpander expander;

  /// Lambda(t | x) = Lambda0(t) * exp(beta' g(x)).
  double cumhaz(const Eigen::VectorXd& x_raw, double t) const;
};

/// Arm-specific rows prepared for partial-likelihood work: design matrix,
/// follow-up times and qualifying-event indicators (target = Censoring flips
/// the event indicator). Rows are sorted by ascending time.
struct CoxProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd time;
  std::vector<char> fail;

  std::size_t size() const { return fail.size(); }
  std::size_t n_events() const;
};

CoxProblem make_cox_problem(const CombinedDataset& data, bool arm, CoxTarget target,
                            const BasisExpander& expander);

/// Breslow-tie log partial likelihood, optionally restricted to a subset of
/// rows (indices into the problem; used by cross validation).
double cox_loglik(const CoxProblem& prob, const Eigen::VectorXd& beta,
                  const std::vector<std::size_t>* subset = nullptr);

/// Analytic score and (optionally) Hessian of the log partial likelihood.
void cox_derivatives(const CoxProblem& prob, const Eigen::VectorXd& beta, double& loglik,
                     Eigen::VectorXd& grad, Eigen::MatrixXd* hess,
                     const std::vector<std::size_t>* subset = nullptr);

struct CoxCoreResult {
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
  double kkt_norm = 0.0;
  std::string diagnostic;
};

/// Newton solver with step-halving; SCAD penalty handled by local quadratic
/// approximation started from the unpenalized solution.
CoxCoreResult fit_cox_core(const CoxProblem& prob, const ScadSpec* penalty,
                           const std::vector<std::size_t>* subset = nullptr);

/// Breslow cumulative-hazard estimator at the given coefficients.
StepSurvival breslow_baseline(const CoxProblem& prob, const Eigen::VectorXd& beta);

CoxFit fit_cox(const CombinedDataset& data, bool arm, CoxTarget target,
               const BasisExpander& expander, const std::optional<ScadSpec>& penalty = {});
CoxFit fit_cox(const CombinedDataset& data, bool arm, CoxTarget target, const BasisSpec& design,
               const std::optional<ScadSpec>& penalty = {});

/// Trivial fit with zero hazard, used when an arm has no qualifying events
/// of the Censoring target (no censored subjects => S^C == 1).
CoxFit zero_hazard_fit(bool arm, CoxTarget target, const BasisExpander& expander);

double predict_survival(const CoxFit& fit, const Eigen::VectorXd& x_raw, double t);

/// Cross-validation task maximizing held-out log partial likelihood.
PenalizedTask make_cox_cv_task(const CoxProblem& prob, const ScadSpec& spec);

/// Max-norm of the partial-likelihood score at beta = 0, the scale anchor for
/// default epsilon grids.
double cox_score_scale(const CoxProblem& prob);

}  // namespace acw
