#include "acw/weighting.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "acw/errors.hpp"
#include "acw/newton.hpp"

namespace acw {

namespace {
constexpr double kZeroThreshold = 1e-6;

Eigen::VectorXd softmax_weights(const Eigen::MatrixXd& g, const Eigen::VectorXd& lambda) {
  Eigen::VectorXd eta = g * lambda;
  Eigen::ArrayXd w = (eta.array() - eta.maxCoeff()).exp();
  return (w / w.sum()).matrix();
}

double stable_log1pexp(double x) {
  // log(1 + e^x)
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

TargetMoments target_moments(const CombinedDataset& data, const BasisExpander& expander) {
  if (data.m == 0) throw FitError("target_moments: no OS rows");
  TargetMoments tm;
  tm.gtilde = Eigen::VectorXd::Zero(expander.dim());
  for (const auto& r : data.records) {
    if (r.source != Source::Os) continue;
    tm.gtilde += *r.design_weight * expander(r.x);
    tm.total_weight += *r.design_weight;
  }
  if (!(tm.total_weight > 0)) throw FitError("target_moments: zero total design weight");
  tm.gtilde /= tm.total_weight;
  return tm;
}

namespace {

// Shrinkage-form penalized dual: U(lambda) + q_eps(|lambda|) sign(lambda) = 0
// in the raw scale U(lambda) = sum_i exp(lambda' g_i)(g_i - gtilde), solved
// by damped quasi-Newton with an LQA diagonal and active-set thresholding.
struct CalibrationCore {
  Eigen::VectorXd lambda;
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;  // normalized balance residual, max-norm
};

CalibrationCore solve_calibration_core(const Eigen::MatrixXd& g, const Eigen::VectorXd& gtilde,
                                       const ScadSpec* penalty, Eigen::VectorXd start) {
  const Eigen::Index n = g.rows();
  const Eigen::Index k = g.cols();
  Eigen::MatrixXd h = g.rowwise() - gtilde.transpose();

  CalibrationCore out;
  if (!penalty || penalty->epsilon <= 0.0) {
    // Newton on the convex potential log sum exp(h' lambda); its gradient is
    // exactly the normalized balance residual.
    SmoothFn fn = [&](const Eigen::VectorXd& lam, double& v, Eigen::VectorXd* grad,
                      Eigen::MatrixXd* hess) {
      Eigen::VectorXd eta = h * lam;
      double shift = eta.maxCoeff();
      Eigen::ArrayXd w = (eta.array() - shift).exp();
      double s = w.sum();
      v = -(std::log(s) + shift);
      if (grad || hess) {
        Eigen::VectorXd omega = (w / s).matrix();
        Eigen::VectorXd mean = h.transpose() * omega;
        if (grad) *grad = -mean;
        if (hess) {
          Eigen::MatrixXd hw = h.array().colwise() * omega.array();
          *hess = -(h.transpose() * hw - mean * mean.transpose());
        }
      }
    };
    NewtonResult res = maximize(fn, std::move(start), 1e-8, 200);
    out.lambda = res.x;
    out.converged = res.converged;
    out.iterations = res.iterations;
    out.residual_norm = res.kkt_norm;
    return out;
  }

  // Penalized shrinkage equation U(lambda) + q_eps(|lambda|) sign(lambda) = 0,
  // solved by damped semismooth Newton with the exact Jacobian
  // dU/dlambda = sum_i e_i g_i h_i' and an active set for zeroed coordinates.
  const ScadSpec& pen = *penalty;
  const double eps = pen.epsilon;
  Eigen::VectorXd lambda = std::move(start);
  std::vector<char> active(static_cast<std::size_t>(k), 1);
  for (Eigen::Index j = 0; j < k; ++j)
    if (std::abs(lambda[j]) < kZeroThreshold) {
      lambda[j] = 0.0;
      active[static_cast<std::size_t>(j)] = 0;
    }

  auto raw_u = [&](const Eigen::VectorXd& lam, Eigen::ArrayXd& e) {
    Eigen::VectorXd eta = g * lam;
    if (eta.maxCoeff() > 500.0) throw FitError("calibration: diverging dual coefficients");
    e = eta.array().exp();
    return Eigen::VectorXd(h.transpose() * e.matrix());
  };
  // KKT residual: the penalized equation on active coordinates, the
  // subgradient slack on zeroed ones.
  auto kkt_vector = [&](const Eigen::VectorXd& lam, const Eigen::VectorXd& u) {
    Eigen::VectorXd r(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (active[static_cast<std::size_t>(j)] && std::abs(lam[j]) >= kZeroThreshold) {
        r[j] = u[j] + scad_derivative(std::abs(lam[j]), pen) * (lam[j] > 0 ? 1.0 : -1.0);
      } else {
        r[j] = std::max(0.0, std::abs(u[j]) - eps) * (u[j] > 0 ? 1.0 : -1.0);
      }
    }
    return r;
  };
  auto q_slope = [&](double labs) {
    if (labs < eps || labs >= pen.b * eps) return 0.0;
    return -1.0 / (pen.b - 1.0);
  };

  Eigen::ArrayXd e;
  for (int iter = 1; iter <= 200; ++iter) {
    out.iterations = iter;
    Eigen::VectorXd u = raw_u(lambda, e);
    const double scale = e.sum();
    const double tol = 1e-8 * std::max(1.0, scale);

    // Release zeroed coordinates whose score exceeds the subgradient cap.
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!active[static_cast<std::size_t>(j)] && std::abs(u[j]) > eps + tol) {
        active[static_cast<std::size_t>(j)] = 1;
        lambda[j] = (u[j] > 0 ? -1.0 : 1.0) * 1e-8;
      }
    }
    Eigen::VectorXd resid = kkt_vector(lambda, u);
    if (resid.lpNorm<Eigen::Infinity>() <= tol) {
      out.converged = true;
      break;
    }

    Eigen::MatrixXd jac = g.transpose() * (h.array().colwise() * e).matrix();  // sum e_i g_i h_i'
    jac.transposeInPlace();                                                    // sum e_i h_i g_i'
    for (Eigen::Index j = 0; j < k; ++j) {
      if (active[static_cast<std::size_t>(j)]) {
        jac(j, j) += q_slope(std::abs(lambda[j]));
      } else {
        jac.row(j).setZero();
        jac.col(j).setZero();
        jac(j, j) = std::max(1.0, scale);
      }
    }
    Eigen::VectorXd delta = jac.partialPivLu().solve(-resid);
    if (!delta.allFinite()) break;

    const double m0 = 0.5 * resid.squaredNorm();
    double step = 1.0;
    bool improved = false;
    for (int hl = 0; hl <= 40; ++hl) {
      Eigen::VectorXd cand = lambda + step * delta;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (!active[static_cast<std::size_t>(j)]) cand[j] = 0.0;
        // A sign flip through zero parks the coordinate at zero.
        else if (cand[j] * lambda[j] < 0.0)
          cand[j] = 0.0;
      }
      double mc;
      try {
        Eigen::ArrayXd ec;
        Eigen::VectorXd uc = raw_u(cand, ec);
        mc = 0.5 * kkt_vector(cand, uc).squaredNorm();
      } catch (const FitError&) {
        step *= 0.5;
        continue;
      }
      if (mc < m0 * (1.0 - 1e-10)) {
        lambda = cand;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    for (Eigen::Index j = 0; j < k; ++j)
      if (active[static_cast<std::size_t>(j)] && std::abs(lambda[j]) < kZeroThreshold) {
        lambda[j] = 0.0;
        active[static_cast<std::size_t>(j)] = 0;
      }
  }
  Eigen::VectorXd omega = softmax_weights(g, lambda);
  out.residual_norm = (g.transpose() * omega - gtilde).lpNorm<Eigen::Infinity>();
  out.lambda = std::move(lambda);
  return out;
}

}  // namespace

WeightFit solve_calibration(const CombinedDataset& data, const BasisExpander& expander,
                            const TargetMoments& targets, const std::optional<ScadSpec>& penalty) {
  auto rct = data.rct_indices();
  if (rct.empty()) throw FitError("solve_calibration: no RCT rows");
  Eigen::MatrixXd g = expander.matrix(data, rct);
  if (g.cols() != targets.gtilde.size()) throw ValidationError("solve_calibration: dimension mismatch");

  Eigen::VectorXd start = Eigen::VectorXd::Zero(g.cols());
  CalibrationCore unpen = solve_calibration_core(g, targets.gtilde, nullptr, start);

  CalibrationCore core;
  if (penalty && penalty->epsilon > 0.0) {
    core = solve_calibration_core(g, targets.gtilde, &*penalty, unpen.lambda);
    core.iterations += unpen.iterations;
  } else {
    core = std::move(unpen);
    if (!core.converged)
      throw FitError("calibration failed to converge (target moments likely outside the convex "
                     "hull); best balance residual = " +
                     std::to_string(core.residual_norm));
  }
  WeightFit fit;
  fit.kind = WeightKind::Calibration;
  fit.coef = core.lambda;
  fit.weights = softmax_weights(g, core.lambda);
  fit.residual_norm = (g.transpose() * fit.weights - targets.gtilde).lpNorm<Eigen::Infinity>();
  fit.converged = core.converged;
  fit.iterations = core.iterations;
  if (!fit.converged)
    throw FitError("penalized calibration failed to converge; best balance residual = " +
                   std::to_string(fit.residual_norm));
  return fit;
}

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& design, bool intercept) {
  if (!intercept) return design;
  Eigen::MatrixXd x(design.rows(), design.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(design.cols()) = design;
  return x;
}

SmoothFn logistic_fn(const Eigen::MatrixXd& x, const std::vector<char>& labels,
                     const Eigen::VectorXd* case_weights) {
  return [&x, &labels, case_weights](const Eigen::VectorXd& beta, double& v, Eigen::VectorXd* grad,
                                     Eigen::MatrixXd* hess) {
    const Eigen::Index n = x.rows();
    Eigen::VectorXd eta = x * beta;
    v = 0.0;
    Eigen::VectorXd resid(n);
    Eigen::VectorXd wvar;
    if (hess) wvar.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double w = case_weights ? (*case_weights)[i] : 1.0;
      double y = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      v += w * (y * eta[i] - stable_log1pexp(eta[i]));
      double p = 1.0 / (1.0 + std::exp(-eta[i]));
      resid[i] = w * (y - p);
      if (hess) wvar[i] = w * p * (1.0 - p);
    }
    if (grad) *grad = x.transpose() * resid;
    if (hess) *hess = -(x.transpose() * (x.array().colwise() * wvar.array()).matrix());
  };
}

}  // namespace

double logistic_loglik(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                       const Eigen::VectorXd& coef, bool intercept,
                       const Eigen::VectorXd* case_weights) {
  Eigen::MatrixXd x = with_intercept(design, intercept);
  double v = 0.0;
  Eigen::VectorXd eta = x * coef;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double w = case_weights ? (*case_weights)[i] : 1.0;
    double y = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    v += w * (y * eta[i] - stable_log1pexp(eta[i]));
  }
  return v;
}

Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                             const Eigen::VectorXd* case_weights,
                             const std::optional<ScadSpec>& penalty, bool intercept) {
  if (static_cast<std::size_t>(design.rows()) != labels.size())
    throw ValidationError("fit_logistic: design/label size mismatch");
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double w = case_weights ? (*case_weights)[static_cast<Eigen::Index>(i)] : 1.0;
    (labels[i] ? pos : neg) += w;
  }
  if (pos <= 0.0 || neg <= 0.0) throw FitError("fit_logistic: single-class input");

  Eigen::MatrixXd x = with_intercept(design, intercept);
  SmoothFn fn = logistic_fn(x, labels, case_weights);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(x.cols());
  NewtonResult unpen = maximize(fn, start);
  NewtonResult res;
  if (penalty && penalty->epsilon > 0.0) {
    std::vector<char> mask(static_cast<std::size_t>(x.cols()), 1);
    if (intercept) mask[0] = 0;
    res = maximize_scad(fn, *penalty, mask, unpen.x);
  } else {
    res = std::move(unpen);
  }
  if (res.x.lpNorm<Eigen::Infinity>() > 20.0)
    throw FitError("fit_logistic: complete separation suspected (diverging coefficients)");
  if (!res.converged) throw FitError("fit_logistic: did not converge: " + res.diagnostic);
  return res.x;
}

WeightFit ipsw_weights(const CombinedDataset& data, const BasisExpander& expander,
                       const std::optional<ScadSpec>& penalty) {
  if (data.n == 0 || data.m == 0) throw FitError("ipsw_weights: need both RCT and OS rows");
  std::vector<std::size_t> all(data.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Eigen::MatrixXd design = expander.matrix(data, all);
  std::vector<char> labels(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i)
    labels[i] = data.records[i].source == Source::Os ? 1 : 0;
  Eigen::VectorXd coef = fit_logistic(design, labels, nullptr, penalty, true);

  auto rct = data.rct_indices();
  Eigen::VectorXd w(static_cast<Eigen::Index>(rct.size()));
  for (std::size_t r = 0; r < rct.size(); ++r) {
    double eta = coef[0] + design.row(static_cast<Eigen::Index>(rct[r])).dot(coef.tail(coef.size() - 1));
    // p/(1-p) with p = P(OS | x) is exp(eta) under the logit link.
    w[static_cast<Eigen::Index>(r)] = std::exp(eta);
  }
  WeightFit fit;
  fit.kind = WeightKind::Ipsw;
  fit.coef = coef;
  fit.weights = w / w.sum();
  fit.converged = true;
  TargetMoments tm = target_moments(data, expander);
  Eigen::MatrixXd g = expander.matrix(data, rct);
  fit.residual_norm = (g.transpose() * fit.weights - tm.gtilde).lpNorm<Eigen::Infinity>();
  return fit;
}

WeightFit fit_propensity(const CombinedDataset& data, const BasisExpander& expander,
                         const std::optional<ScadSpec>& penalty) {
  auto rct = data.rct_indices();
  if (rct.empty()) throw FitError("fit_propensity: no RCT rows");
  Eigen::MatrixXd design = expander.matrix(data, rct);
  std::vector<char> labels(rct.size());
  for (std::size_t r = 0; r < rct.size(); ++r) labels[r] = *data.records[rct[r]].a ? 1 : 0;
  Eigen::VectorXd coef = fit_logistic(design, labels, nullptr, penalty, true);

  Eigen::VectorXd pi(static_cast<Eigen::Index>(rct.size()));
  for (std::size_t r = 0; r < rct.size(); ++r) {
    double eta = coef[0] + design.row(static_cast<Eigen::Index>(r)).dot(coef.tail(coef.size() - 1));
    double p = 1.0 / (1.0 + std::exp(-eta));
    pi[static_cast<Eigen::Index>(r)] = labels[r] ? p : 1.0 - p;
  }
  WeightFit fit;
  fit.kind = WeightKind::Propensity;
  fit.coef = coef;
  fit.weights = pi;
  fit.converged = true;
  return fit;
}

PenalizedTask make_calibration_cv_task(const Eigen::MatrixXd& rct_design,
                                       const Eigen::VectorXd& gtilde, const ScadSpec& spec) {
  PenalizedTask task;
  task.n_units = static_cast<std::size_t>(rct_design.rows());
  task.heldout_score = [rct_design, gtilde, spec](const std::vector<std::size_t>& train,
                                                  const std::vector<std::size_t>& test,
                                                  double eps) {
    Eigen::MatrixXd gtrain(static_cast<Eigen::Index>(train.size()), rct_design.cols());
    for (std::size_t r = 0; r < train.size(); ++r)
      gtrain.row(static_cast<Eigen::Index>(r)) = rct_design.row(static_cast<Eigen::Index>(train[r]));
    ScadSpec fold = spec;
    fold.epsilon = eps;
    Eigen::VectorXd start = Eigen::VectorXd::Zero(rct_design.cols());
    CalibrationCore unpen = solve_calibration_core(gtrain, gtilde, nullptr, start);
    CalibrationCore core = eps > 0 ? solve_calibration_core(gtrain, gtilde, &fold, unpen.lambda)
                                   : std::move(unpen);
    if (!core.converged) throw FitError("calibration cv: fold did not converge");
    Eigen::MatrixXd gtest(static_cast<Eigen::Index>(test.size()), rct_design.cols());
    for (std::size_t r = 0; r < test.size(); ++r)
      gtest.row(static_cast<Eigen::Index>(r)) = rct_design.row(static_cast<Eigen::Index>(test[r]));
    Eigen::VectorXd omega = softmax_weights(gtest, core.lambda);
    return -(gtest.transpose() * omega - gtilde).lpNorm<Eigen::Infinity>();
  };
  return task;
}

PenalizedTask make_logistic_cv_task(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                                    bool intercept, const ScadSpec& spec) {
  PenalizedTask task;
  task.n_units = static_cast<std::size_t>(design.rows());
  task.heldout_score = [design, labels, intercept, spec](const std::vector<std::size_t>& train,
                                                         const std::vector<std::size_t>& test,
                                                         double eps) {
    Eigen::MatrixXd xtrain(static_cast<Eigen::Index>(train.size()), design.cols());
    std::vector<char> ytrain(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      xtrain.row(static_cast<Eigen::Index>(r)) = design.row(static_cast<Eigen::Index>(train[r]));
      ytrain[r] = labels[train[r]];
    }
    ScadSpec fold = spec;
    fold.epsilon = eps;
    std::optional<ScadSpec> pen;
    if (eps > 0) pen = fold;
    Eigen::VectorXd coef = fit_logistic(xtrain, ytrain, nullptr, pen, intercept);
    Eigen::MatrixXd xtest(static_cast<Eigen::Index>(test.size()), design.cols());
    std::vector<char> ytest(test.size());
    for (std::size_t r = 0; r < test.size(); ++r) {
      xtest.row(static_cast<Eigen::Index>(r)) = design.row(static_cast<Eigen::Index>(test[r]));
      ytest[r] = labels[test[r]];
    }
    return logistic_loglik(xtest, ytest, coef, intercept);
  };
  return task;
}

double calibration_score_scale(const Eigen::MatrixXd& rct_design, const Eigen::VectorXd& gtilde) {
  Eigen::MatrixXd h = rct_design.rowwise() - gtilde.transpose();
  return h.colwise().sum().lpNorm<Eigen::Infinity>();
}

double logistic_score_scale(const Eigen::MatrixXd& design, const std::vector<char>& labels,
                            bool intercept) {
  Eigen::MatrixXd x = with_intercept(design, intercept);
  Eigen::VectorXd resid(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    resid[i] = (labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0) - 0.5;
  Eigen::VectorXd grad = x.transpose() * resid;
  if (intercept && grad.size() > 1) return grad.tail(grad.size() - 1).lpNorm<Eigen::Infinity>();
  return grad.lpNorm<Eigen::Infinity>();
}

}  // namespace acw
