#include "acw/newton.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace acw {

namespace {
constexpr double kZeroThreshold = 1e-6;

bool solve_ascent_step(const Eigen::MatrixXd& hess, const Eigen::VectorXd& rhs,
                       Eigen::VectorXd& delta) {
  const Eigen::Index k = hess.rows();
  double ridge = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::MatrixXd a = -hess + ridge * Eigen::MatrixXd::Identity(k, k);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
      delta = ldlt.solve(rhs);
      if (delta.allFinite() && delta.dot(rhs) > 0) return true;
    }
    ridge = (ridge == 0.0) ? 1e-10 : ridge * 100.0;
  }
  return false;
}

}  // namespace

NewtonResult maximize(const SmoothFn& fn, Eigen::VectorXd start, double tol, int max_iter,
                      int max_halvings) {
  NewtonResult res;
  Eigen::VectorXd beta = std::move(start);
  const Eigen::Index k = beta.size();
  double val;
  Eigen::VectorXd grad(k);
  Eigen::MatrixXd hess(k, k);
  fn(beta, val, &grad, &hess);
  for (int iter = 1; iter <= max_iter; ++iter) {
    res.iterations = iter;
    res.kkt_norm = grad.lpNorm<Eigen::Infinity>();
    if (res.kkt_norm <= tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd delta;
    if (!solve_ascent_step(hess, grad, delta)) {
      res.diagnostic = "singular Hessian, no ascent direction";
      break;
    }
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h <= max_halvings; ++h) {
      Eigen::VectorXd cand = beta + step * delta;
      double cand_val;
      fn(cand, cand_val, nullptr, nullptr);
      if (std::isfinite(cand_val) && cand_val >= val - 1e-14 * std::abs(val)) {
        beta = cand;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      res.diagnostic = "line search stalled";
      break;
    }
    fn(beta, val, &grad, &hess);
  }
  if (!res.converged && res.diagnostic.empty()) res.diagnostic = "iteration limit reached";
  res.x = std::move(beta);
  return res;
}

namespace {

// Exact minimizer of 0.5 a (x - z)^2 + p_eps(|x|) over x: per-region
// stationary points and boundaries, evaluated and compared directly so the
// nonconvex middle region needs no case analysis.
double scad_univariate(double z, double a, const ScadSpec& penalty) {
  const double eps = penalty.epsilon;
  const double b = penalty.b;
  const double s = z >= 0 ? 1.0 : -1.0;
  auto h = [&](double x) { return 0.5 * a * (x - z) * (x - z) + scad_penalty(std::abs(x), penalty); };

  double best = 0.0;
  double best_val = h(0.0);
  auto consider = [&](double x) {
    double v = h(x);
    if (v < best_val) {
      best_val = v;
      best = x;
    }
  };
  // Inner region |x| <= eps: soft threshold.
  double soft = s * std::max(std::abs(z) - eps / a, 0.0);
  consider(std::abs(soft) <= eps ? soft : s * eps);
  // Middle region eps < |x| <= b eps.
  const double denom = a * (b - 1.0) - 1.0;
  if (denom != 0.0) {
    double mid = s * (a * (b - 1.0) * std::abs(z) - b * eps) / denom;
    if (std::abs(mid) > eps && std::abs(mid) <= b * eps) consider(mid);
  }
  consider(s * std::min(std::max(std::abs(z), eps), b * eps));
  // Outer region: the penalty is flat.
  consider(std::abs(z) > b * eps ? z : s * b * eps);
  return best;
}

}  // namespace

NewtonResult maximize_scad(const SmoothFn& fn, const ScadSpec& penalty,
                           const std::vector<char>& penalize, Eigen::VectorXd start, double tol,
                           int max_iter, int max_halvings) {
  NewtonResult res;
  Eigen::VectorXd beta = std::move(start);
  const Eigen::Index k = beta.size();
  const double eps = penalty.epsilon;

  auto penalized_value = [&](const Eigen::VectorXd& b) {
    double v;
    fn(b, v, nullptr, nullptr);
    for (Eigen::Index j = 0; j < k; ++j)
      if (penalize[static_cast<std::size_t>(j)]) v -= scad_penalty(std::abs(b[j]), penalty);
    return v;
  };

  double val;
  Eigen::VectorXd grad(k);
  Eigen::MatrixXd hess(k, k);
  for (int iter = 1; iter <= max_iter; ++iter) {
    res.iterations = iter;
    fn(beta, val, &grad, &hess);

    double kkt = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const bool pen = penalize[static_cast<std::size_t>(j)];
      double v;
      if (!pen) {
        v = std::abs(grad[j]);
      } else if (std::abs(beta[j]) >= kZeroThreshold) {
        v = std::abs(grad[j] -
                     scad_derivative(std::abs(beta[j]), penalty) * (beta[j] > 0 ? 1.0 : -1.0));
      } else {
        v = std::max(0.0, std::abs(grad[j]) - eps);
      }
      kkt = std::max(kkt, v);
    }
    res.kkt_norm = kkt;
    if (kkt <= tol) {
      res.converged = true;
      break;
    }

    // Coordinate descent on the penalized local quadratic model.
    Eigen::VectorXd cand = beta;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(k);  // hess * (cand - beta)
    const double curv_floor = 1e-10 * std::max(1.0, hess.cwiseAbs().maxCoeff());
    for (int sweep = 0; sweep < 200; ++sweep) {
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double a = std::max(-hess(j, j), curv_floor);
        const double gq = grad[j] + r[j];  // quadratic-model gradient at cand
        const double z = cand[j] + gq / a;
        double updated;
        if (penalize[static_cast<std::size_t>(j)]) {
          updated = scad_univariate(z, a, penalty);
        } else {
          updated = z;
        }
        const double delta = updated - cand[j];
        if (delta != 0.0) {
          cand[j] = updated;
          r += delta * hess.col(j);
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      if (max_change < 1e-13 * std::max(1.0, cand.lpNorm<Eigen::Infinity>())) break;
    }

    const double pobj = penalized_value(beta);
    Eigen::VectorXd direction = cand - beta;
    if (direction.lpNorm<Eigen::Infinity>() == 0.0) {
      res.diagnostic = "penalized model produced no step";
      break;
    }
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h <= max_halvings; ++h) {
      Eigen::VectorXd trial = beta + step * direction;
      for (Eigen::Index j = 0; j < k; ++j)
        if (penalize[static_cast<std::size_t>(j)] && std::abs(trial[j]) < kZeroThreshold)
          trial[j] = 0.0;
      double trial_obj = penalized_value(trial);
      if (std::isfinite(trial_obj) && trial_obj >= pobj + 1e-14 * std::abs(pobj)) {
        beta = trial;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      // The model step is already a stationary candidate; accept equal value
      // once, otherwise stop.
      Eigen::VectorXd trial = cand;
      for (Eigen::Index j = 0; j < k; ++j)
        if (penalize[static_cast<std::size_t>(j)] && std::abs(trial[j]) < kZeroThreshold)
          trial[j] = 0.0;
      double trial_obj = penalized_value(trial);
      if (std::isfinite(trial_obj) && trial_obj >= pobj - 1e-12 * std::max(1.0, std::abs(pobj)) &&
          (trial - beta).lpNorm<Eigen::Infinity>() > 0) {
        beta = trial;
      } else {
        res.diagnostic = "penalized line search stalled";
        break;
      }
    }
  }
  if (!res.converged && res.diagnostic.empty()) res.diagnostic = "iteration limit reached";
  res.x = std::move(beta);
  return res;
}

}  // namespace acw
