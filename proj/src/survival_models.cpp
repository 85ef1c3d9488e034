#include "acw/survival_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acw/errors.hpp"
#include "acw/newton.hpp"

namespace acw {

std::size_t CoxProblem::n_events() const {
  return static_cast<std::size_t>(std::count(fail.begin(), fail.end(), char(1)));
}

CoxProblem make_cox_problem(const CombinedDataset& data, bool arm, CoxTarget target,
                            const BasisExpander& expander) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.source == Source::Rct && *r.a == arm) rows.push_back(i);
  }
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return *data.records[a].u < *data.records[b].u;
  });
  CoxProblem prob;
  prob.design = expander.matrix(data, rows);
  prob.time.resize(static_cast<Eigen::Index>(rows.size()));
  prob.fail.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& rec = data.records[rows[r]];
    prob.time[static_cast<Eigen::Index>(r)] = *rec.u;
    bool qualifying = (target == CoxTarget::Event) ? *rec.event : !*rec.event;
    prob.fail[r] = qualifying ? 1 : 0;
  }
  return prob;
}

namespace {

// Backward sweep over time-sorted rows with Breslow tie handling. Linear
// predictors are shifted by their max so exp() cannot overflow.
void accumulate(const CoxProblem& prob, const Eigen::VectorXd& beta,
                const std::vector<std::size_t>& rows, double& loglik, Eigen::VectorXd* grad,
                Eigen::MatrixXd* hess) {
  const Eigen::Index k = prob.design.cols();
  loglik = 0.0;
  if (grad) grad->setZero(k);
  if (hess) hess->setZero(k, k);
  if (rows.empty()) return;

  Eigen::VectorXd eta(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    eta[static_cast<Eigen::Index>(r)] = prob.design.row(static_cast<Eigen::Index>(rows[r])) * beta;
  const double shift = eta.maxCoeff();

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd s2;
  if (hess) s2.setZero(k, k);

  std::ptrdiff_t i = static_cast<std::ptrdiff_t>(rows.size()) - 1;
  while (i >= 0) {
    const double t = prob.time[static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)])];
    std::ptrdiff_t j = i;
    while (j >= 0 && prob.time[static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)])] == t) {
      const auto row = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)]);
      const double theta = std::exp(eta[static_cast<Eigen::Index>(j)] - shift);
      s0 += theta;
      if (grad) s1 += theta * prob.design.row(row).transpose();
      if (hess) s2.selfadjointView<Eigen::Lower>().rankUpdate(prob.design.row(row).transpose(), theta);
      --j;
    }
    int d = 0;
    double sum_eta = 0.0;
    Eigen::VectorXd sum_x;
    if (grad) sum_x = Eigen::VectorXd::Zero(k);
    for (std::ptrdiff_t r = j + 1; r <= i; ++r) {
      const std::size_t row = rows[static_cast<std::size_t>(r)];
      if (prob.fail[row]) {
        ++d;
        sum_eta += eta[static_cast<Eigen::Index>(r)];
        if (grad) sum_x += prob.design.row(static_cast<Eigen::Index>(row)).transpose();
      }
    }
    if (d > 0) {
      loglik += sum_eta - d * (std::log(s0) + shift);
      if (grad) *grad += sum_x - d * (s1 / s0);
      if (hess) {
        Eigen::VectorXd mean = s1 / s0;
        Eigen::MatrixXd m2 = Eigen::MatrixXd(s2.selfadjointView<Eigen::Lower>()) / s0;
        *hess -= d * (m2 - mean * mean.transpose());
      }
    }
    i = j;
  }
}

std::vector<std::size_t> all_rows(const CoxProblem& prob) {
  std::vector<std::size_t> rows(prob.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

double cox_loglik(const CoxProblem& prob, const Eigen::VectorXd& beta,
                  const std::vector<std::size_t>* subset) {
  double ll;
  accumulate(prob, beta, subset ? *subset : all_rows(prob), ll, nullptr, nullptr);
  return ll;
}

void cox_derivatives(const CoxProblem& prob, const Eigen::VectorXd& beta, double& loglik,
                     Eigen::VectorXd& grad, Eigen::MatrixXd* hess,
                     const std::vector<std::size_t>* subset) {
  accumulate(prob, beta, subset ? *subset : all_rows(prob), loglik, &grad, hess);
}

CoxCoreResult fit_cox_core(const CoxProblem& prob, const ScadSpec* penalty,
                           const std::vector<std::size_t>* subset) {
  const std::vector<std::size_t> rows = subset ? *subset : all_rows(prob);
  std::size_t events = 0;
  for (auto r : rows) events += prob.fail[r] ? 1 : 0;
  if (events == 0) throw FitError("Cox fit: no qualifying events");

  SmoothFn fn = [&prob, &rows](const Eigen::VectorXd& b, double& v, Eigen::VectorXd* g,
                               Eigen::MatrixXd* h) { accumulate(prob, b, rows, v, g, h); };
  Eigen::VectorXd start = Eigen::VectorXd::Zero(prob.design.cols());
  NewtonResult unpen = maximize(fn, start);
  NewtonResult out;
  if (penalty && penalty->epsilon > 0.0) {
    std::vector<char> penalize(static_cast<std::size_t>(prob.design.cols()), 1);
    out = maximize_scad(fn, *penalty, penalize, unpen.x);
    out.iterations += unpen.iterations;
  } else {
    out = std::move(unpen);
  }
  CoxCoreResult res;
  res.beta = std::move(out.x);
  res.converged = out.converged;
  res.iterations = out.iterations;
  res.kkt_norm = out.kkt_norm;
  res.diagnostic = out.diagnostic;
  // A monotone partial likelihood lets the score vanish as |beta| runs off;
  // a "converged" fit with huge coefficients is that failure, not a success.
  if (res.beta.lpNorm<Eigen::Infinity>() > 25.0) {
    res.converged = false;
    res.diagnostic = "monotone partial likelihood (separation suspected): " +
                     (res.diagnostic.empty() ? std::string("coefficients diverged") : res.diagnostic);
  }
  return res;
}

StepSurvival breslow_baseline(const CoxProblem& prob, const Eigen::VectorXd& beta) {
  if (!beta.allFinite()) throw ValidationError("breslow_baseline: non-finite coefficients");
  StepSurvival out;
  out.value_at_zero = 0.0;
  const std::size_t n = prob.size();
  if (n == 0) return out;
  Eigen::VectorXd eta = prob.design * beta;
  const double shift = eta.maxCoeff();

  std::vector<double> jump_times, increments;
  double s0 = 0.0;
  std::ptrdiff_t i = static_cast<std::ptrdiff_t>(n) - 1;
  while (i >= 0) {
    const double t = prob.time[static_cast<Eigen::Index>(i)];
    std::ptrdiff_t j = i;
    while (j >= 0 && prob.time[static_cast<Eigen::Index>(j)] == t) {
      s0 += std::exp(eta[static_cast<Eigen::Index>(j)] - shift);
      --j;
    }
    int d = 0;
    for (std::ptrdiff_t r = j + 1; r <= i; ++r)
      if (prob.fail[static_cast<std::size_t>(r)]) ++d;
    if (d > 0) {
      if (s0 <= 0.0) throw std::logic_error("breslow_baseline: empty risk set at event time");
      jump_times.push_back(t);
      increments.push_back(d * std::exp(-shift) / s0);
    }
    i = j;
  }
  std::reverse(jump_times.begin(), jump_times.end());
  std::reverse(increments.begin(), increments.end());
  double acc = 0.0;
  out.times = std::move(jump_times);
  out.values.resize(out.times.size());
  for (std::size_t r = 0; r < out.values.size(); ++r) {
    acc += increments[r];
    out.values[r] = acc;
  }
  return out;
}

double CoxFit::cumhaz(const Eigen::VectorXd& x_raw, double t) const {
  if (baseline.times.empty()) return 0.0;
  double lam0 = baseline.at(t);
  if (lam0 == 0.0) return 0.0;
  return lam0 * std::exp(beta.dot(expander(x_raw)));
}

CoxFit fit_cox(const CombinedDataset& data, bool arm, CoxTarget target,
               const BasisExpander& expander, const std::optional<ScadSpec>& penalty) {
  CoxProblem prob = make_cox_problem(data, arm, target, expander);
  if (prob.n_events() == 0)
    throw FitError(std::string("Cox fit: no qualifying ") +
                   (target == CoxTarget::Event ? "events" : "censorings") + " in arm " +
                   (arm ? "1" : "0"));
  CoxCoreResult core = fit_cox_core(prob, penalty ? &*penalty : nullptr);
  CoxFit fit;
  fit.beta = core.beta;
  fit.baseline = breslow_baseline(prob, core.beta);
  fit.arm = arm;
  fit.target = target;
  fit.converged = core.converged;
  fit.iterations = core.iterations;
  fit.final_gradient_norm = core.kkt_norm;
  fit.diagnostic = core.diagnostic;
  fit.expander = expander;
  return fit;
}

CoxFit fit_cox(const CombinedDataset& data, bool arm, CoxTarget target, const BasisSpec& design,
               const std::optional<ScadSpec>& penalty) {
  return fit_cox(data, arm, target, BasisExpander(data, design), penalty);
}

CoxFit zero_hazard_fit(bool arm, CoxTarget target, const BasisExpander& expander) {
  CoxFit fit;
  fit.beta = Eigen::VectorXd::Zero(expander.dim());
  fit.baseline.value_at_zero = 0.0;
  fit.arm = arm;
  fit.target = target;
  fit.converged = true;
  fit.expander = expander;
  return fit;
}

double predict_survival(const CoxFit& fit, const Eigen::VectorXd& x_raw, double t) {
  return std::exp(-fit.cumhaz(x_raw, t));
}

double cox_score_scale(const CoxProblem& prob) {
  double ll;
  Eigen::VectorXd grad(prob.design.cols());
  cox_derivatives(prob, Eigen::VectorXd::Zero(prob.design.cols()), ll, grad, nullptr);
  return grad.lpNorm<Eigen::Infinity>();
}

PenalizedTask make_cox_cv_task(const CoxProblem& prob, const ScadSpec& spec) {
  PenalizedTask task;
  task.n_units = prob.size();
  task.heldout_score = [&prob, spec](const std::vector<std::size_t>& train,
                                     const std::vector<std::size_t>& test, double eps) {
    std::size_t test_events = 0;
    for (auto r : test) test_events += prob.fail[r] ? 1 : 0;
    if (test_events == 0) throw FitError("cox cv: no events in held-out fold");
    ScadSpec fold = spec;
    fold.epsilon = eps;
    CoxCoreResult fit = fit_cox_core(prob, eps > 0 ? &fold : nullptr, &train);
    return cox_loglik(prob, fit.beta, &test);
  };
  return task;
}

}  // namespace acw
