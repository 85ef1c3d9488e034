#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "acw/basis.hpp"

namespace acw {

struct NewtonResult {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
  double kkt_norm = 0.0;
  std::string diagnostic;
};

/// Evaluates a concave objective to maximize: value always, grad/hess when
/// non-null.
using SmoothFn =
    std::function<void(const Eigen::VectorXd&, double&, Eigen::VectorXd*, Eigen::MatrixXd*)>;

/// Damped Newton ascent with step-halving and ridge fallback on a singular
/// Hessian. Converges when the score max-norm reaches tol.
NewtonResult maximize(const SmoothFn& fn, Eigen::VectorXd start, double tol = 1e-8,
                      int max_iter = 100, int max_halvings = 30);

/// SCAD-penalized maximization by local quadratic approximation with an
/// active set; coordinates with penalize[j] == 0 (e.g. an intercept) are
/// never shrunk. Coefficients below 1e-6 in magnitude are zeroed. Start from
/// a consistent unpenalized estimate.
NewtonResult maximize_scad(const SmoothFn& fn, const ScadSpec& penalty,
                           const std::vector<char>& penalize, Eigen::VectorXd start,
                           double tol = 1e-8, int max_iter = 100, int max_halvings = 30);

}  // namespace acw
