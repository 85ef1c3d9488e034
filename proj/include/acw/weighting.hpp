#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "acw/basis.hpp"
#include "acw/data_model.hpp"

namespace acw {

enum class WeightKind { Calibration, Ipsw, Propensity };

/// Solved weighting model. For Calibration/Ipsw, weights are the normalized
/// per-RCT-subject weights (ordered as rct_indices()); for Propensity they
/// hold pi_hat_{a_i i} = A_i pi_A(X_i) + (1 - A_i)(1 - pi_A(X_i)).
struct WeightFit {
  WeightKind kind = WeightKind::Calibration;
  Eigen::VectorXd coef;
  Eigen::VectorXd weights;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Design-weighted OS mean of the expanded covariates.
struct TargetMoments {
  Eigen::VectorXd gtilde;
  double total_weight = 0.0;
};

TargetMoments target_moments(const CombinedDataset& data, const BasisExpander& expander);

/// Entropy-balancing calibration: solves the dual estimating equation
/// U(lambda) = sum_i exp(lambda' g_i)(g_i - gtilde) = 0 over RCT rows, or its
/// SCAD-penalized version U(lambda) - q_eps(|lambda|) sign(lambda) = 0.
/// Weights are softmax(lambda' g_i). Throws FitError when the target moments
/// are not attainable (convex-hull violation).
WeightFit solve_calibration(const CombinedDataset& data, const BasisExpander& expander,
                            const TargetMoments& targets,
                            const std::optional<ScadSpec>& penalty = {});

/// Bernoulli MLE with the logit link. `design` has no intercept column; one
/// is prepended when intercept is true and its coefficient comes first and is
/// never penalized. Throws FitError on single-class input or separation.
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                             const Eigen::VectorXd* case_weights = nullptr,
                             const std::optional<ScadSpec>& penalty = {}, bool intercept = true);

/// Trial-membership logistic model on the union sample (label = OS); RCT
/// weights proportional to p_hat / (1 - p_hat), normalized to sum 1.
WeightFit ipsw_weights(const CombinedDataset& data, const BasisExpander& expander,
                       const std::optional<ScadSpec>& penalty = {});

/// Treatment propensity logistic fit on RCT rows (intercept + g(X)).
WeightFit fit_propensity(const CombinedDataset& data, const BasisExpander& expander,
                         const std::optional<ScadSpec>& penalty = {});

/// CV task for the calibration epsilon: score = -(held-out balance residual).
PenalizedTask make_calibration_cv_task(const Eigen::MatrixXd& rct_design,
                                       const Eigen::VectorXd& gtilde, const ScadSpec& spec);

/// CV task for penalized logistic fits: score = held-out log likelihood.
PenalizedTask make_logistic_cv_task(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                                    bool intercept, const ScadSpec& spec);

/// Bernoulli log likelihood of coefficients on (optionally intercept-
/// extended) design rows; used by tests and cross validation.
double logistic_loglik(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                       const Eigen::VectorXd& coef, bool intercept,
                       const Eigen::VectorXd* case_weights = nullptr);

/// Max-norm of the unpenalized estimating function at zero coefficients;
/// used to scale default epsilon grids.
double calibration_score_scale(const Eigen::MatrixXd& rct_design, const Eigen::VectorXd& gtilde);
double logistic_score_scale(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                            bool intercept);

}  // namespace acw
