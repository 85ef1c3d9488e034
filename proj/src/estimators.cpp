#include "acw/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "acw/errors.hpp"
#include "acw/rng.hpp"

namespace acw {

std::string method_name(Method m) {
  switch (m) {
    case Method::Naive: return "naive";
    case Method::Or: return "or";
    case Method::Ipsw: return "ipsw";
    case Method::Cw: return "cw";
    case Method::Acw1: return "acw1";
    case Method::Acw2: return "acw2";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& name) {
  if (name == "naive") return Method::Naive;
  if (name == "or") return Method::Or;
  if (name == "ipsw") return Method::Ipsw;
  if (name == "cw") return Method::Cw;
  if (name == "acw1") return Method::Acw1;
  if (name == "acw2") return Method::Acw2;
  return std::nullopt;
}

std::string estimand_name(EstimandSpec::Kind k) {
  switch (k) {
    case EstimandSpec::Kind::SurvDiffAt: return "survdiff";
    case EstimandSpec::Kind::RmstDiff: return "rmstdiff";
    case EstimandSpec::Kind::RmtlRatio: return "rmtlratio";
    case EstimandSpec::Kind::QuantileDiff: return "quantilediff";
  }
  return "?";
}

std::optional<EstimandSpec::Kind> parse_estimand(const std::string& name) {
  if (name == "survdiff") return EstimandSpec::Kind::SurvDiffAt;
  if (name == "rmstdiff") return EstimandSpec::Kind::RmstDiff;
  if (name == "rmtlratio") return EstimandSpec::Kind::RmtlRatio;
  if (name == "quantilediff") return EstimandSpec::Kind::QuantileDiff;
  return std::nullopt;
}

const WeightFit& NuisanceBundle::sampling() const {
  if (calibration) return *calibration;
  if (ipsw) return *ipsw;
  throw FitError("nuisance bundle carries no sampling-weight fit");
}

namespace {

std::size_t count_censored(const CombinedDataset& data, bool arm) {
  std::size_t c = 0;
  for (const auto& r : data.records)
    if (r.source == Source::Rct && *r.a == arm && !*r.event) ++c;
  return c;
}

ScadSpec with_grid(const ScadSpec& base, double scale) {
  ScadSpec s = base;
  if (s.epsilon_grid.empty()) s.epsilon_grid = default_epsilon_grid(scale);
  return s;
}

}  // namespace

PenaltySet select_penalties(const CombinedDataset& data, const BasisExpander& expander,
                            const ScadSpec& base, bool want_calibration, bool want_ipsw,
                            std::uint64_t seed) {
  PenaltySet out;
  base.check();
  // Outcome and censoring Cox models per arm.
  for (int arm = 0; arm <= 1; ++arm) {
    for (CoxTarget target : {CoxTarget::Event, CoxTarget::Censoring}) {
      CoxProblem prob = make_cox_problem(data, arm == 1, target, expander);
      if (prob.n_events() == 0) continue;  // zero-hazard fit, nothing to tune
      ScadSpec spec = with_grid(base, cox_score_scale(prob));
      PenalizedTask task = make_cox_cv_task(prob, spec);
      spec.epsilon = select_epsilon(task, spec, derive_seed(seed, 1, static_cast<std::uint64_t>(arm),
                                                            target == CoxTarget::Event ? 0 : 1));
      auto& slot = (target == CoxTarget::Event) ? (arm == 1 ? out.outcome1 : out.outcome0)
                                                : (arm == 1 ? out.censoring1 : out.censoring0);
      slot = spec;
    }
  }
  auto rct = data.rct_indices();
  Eigen::MatrixXd rct_design = expander.matrix(data, rct);
  if (want_calibration) {
    TargetMoments tm = target_moments(data, expander);
    ScadSpec spec = with_grid(base, calibration_score_scale(rct_design, tm.gtilde));
    PenalizedTask task = make_calibration_cv_task(rct_design, tm.gtilde, spec);
    spec.epsilon = select_epsilon(task, spec, derive_seed(seed, 2));
    out.calibration = spec;
  }
  {
    std::vector<char> labels(rct.size());
    for (std::size_t r = 0; r < rct.size(); ++r) labels[r] = *data.records[rct[r]].a ? 1 : 0;
    ScadSpec spec = with_grid(base, logistic_score_scale(rct_design, labels, true));
    PenalizedTask task = make_logistic_cv_task(rct_design, labels, true, spec);
    spec.epsilon = select_epsilon(task, spec, derive_seed(seed, 3));
    out.propensity = spec;
  }
  if (want_ipsw) {
    std::vector<std::size_t> all(data.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Eigen::MatrixXd design = expander.matrix(data, all);
    std::vector<char> labels(all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      labels[i] = data.records[i].source == Source::Os ? 1 : 0;
    ScadSpec spec = with_grid(base, logistic_score_scale(design, labels, true));
    PenalizedTask task = make_logistic_cv_task(design, labels, true, spec);
    spec.epsilon = select_epsilon(task, spec, derive_seed(seed, 4));
    out.ipsw = spec;
  }
  return out;
}

NuisanceBundle fit_nuisances(const CombinedDataset& data, const BasisExpander& expander,
                             const PenaltySet& penalties, bool want_calibration, bool want_ipsw) {
  data.require_fittable();
  NuisanceBundle b;
  b.expander = expander;

  auto fit_outcome = [&](bool arm, const std::optional<ScadSpec>& pen) {
    CoxFit f = fit_cox(data, arm, CoxTarget::Event, expander, pen);
    if (!f.converged)
      throw FitError(std::string("outcome Cox model (arm ") + (arm ? "1" : "0") +
                     ") did not converge: " + f.diagnostic);
    return f;
  };
  auto fit_censoring = [&](bool arm, const std::optional<ScadSpec>& pen) {
    if (count_censored(data, arm) == 0) return zero_hazard_fit(arm, CoxTarget::Censoring, expander);
    CoxFit f = fit_cox(data, arm, CoxTarget::Censoring, expander, pen);
    if (!f.converged)
      throw FitError(std::string("censoring Cox model (arm ") + (arm ? "1" : "0") +
                     ") did not converge: " + f.diagnostic);
    return f;
  };
  b.outcome1 = fit_outcome(true, penalties.outcome1);
  b.outcome0 = fit_outcome(false, penalties.outcome0);
  b.censoring1 = fit_censoring(true, penalties.censoring1);
  b.censoring0 = fit_censoring(false, penalties.censoring0);
  b.propensity = fit_propensity(data, expander, penalties.propensity);
  if (want_calibration) {
    TargetMoments tm = target_moments(data, expander);
    b.calibration = solve_calibration(data, expander, tm, penalties.calibration);
  }
  if (want_ipsw) b.ipsw = ipsw_weights(data, expander, penalties.ipsw);
  return b;
}

namespace {

// Arm-a working arrays for the curve sweep, subjects sorted by follow-up.
struct SweepPrep {
  std::vector<double> u;
  std::vector<char> ev;
  Eigen::VectorXd w_acw, w_cw, w_ipsw, w_naive;  // weights already divided by pi_a
  Eigen::VectorXd rout, rcen;
  Eigen::VectorXd os_dnorm, os_rout;
};

SweepPrep prepare_sweep(const CombinedDataset& data, const NuisanceBundle& bundle, bool arm,
                        bool need_cw, bool need_ipsw, bool need_acw) {
  SweepPrep p;
  auto rct = data.rct_indices();
  const auto& prop = bundle.propensity;

  struct ArmRow {
    double u;
    char ev;
    double pia, wacw, wcw, wipsw;
    Eigen::VectorXd g;
  };
  std::vector<ArmRow> rows;
  rows.reserve(rct.size());
  const WeightFit* sampling = (need_acw) ? &bundle.sampling() : nullptr;
  for (std::size_t r = 0; r < rct.size(); ++r) {
    const auto& rec = data.records[rct[r]];
    if (*rec.a != arm) continue;
    double own = prop.weights[static_cast<Eigen::Index>(r)];
    double pa = *rec.a ? own : 1.0 - own;  // P(A = 1 | X)
    ArmRow row;
    row.u = *rec.u;
    row.ev = *rec.event ? 1 : 0;
    row.pia = arm ? pa : 1.0 - pa;
    row.wacw = sampling ? sampling->weights[static_cast<Eigen::Index>(r)] : 0.0;
    row.wcw = (need_cw && bundle.calibration)
                  ? bundle.calibration->weights[static_cast<Eigen::Index>(r)]
                  : 0.0;
    row.wipsw = (need_ipsw && bundle.ipsw) ? bundle.ipsw->weights[static_cast<Eigen::Index>(r)] : 0.0;
    row.g = bundle.expander(rec.x);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ArmRow& a, const ArmRow& b) { return a.u < b.u; });

  const Eigen::Index na = static_cast<Eigen::Index>(rows.size());
  p.u.resize(rows.size());
  p.ev.resize(rows.size());
  p.w_acw.resize(na);
  p.w_cw.resize(na);
  p.w_ipsw.resize(na);
  p.w_naive.resize(na);
  p.rout.resize(na);
  p.rcen.resize(na);
  const Eigen::VectorXd& bout = bundle.outcome(arm).beta;
  const Eigen::VectorXd& bcen = bundle.censoring(arm).beta;
  const double inv_n = data.n > 0 ? 1.0 / static_cast<double>(data.n) : 0.0;
  for (Eigen::Index i = 0; i < na; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    p.u[static_cast<std::size_t>(i)] = row.u;
    p.ev[static_cast<std::size_t>(i)] = row.ev;
    p.w_acw[i] = row.wacw / row.pia;
    p.w_cw[i] = row.wcw / row.pia;
    p.w_ipsw[i] = row.wipsw / row.pia;
    p.w_naive[i] = inv_n / row.pia;
    p.rout[i] = std::exp(bout.dot(row.g));
    p.rcen[i] = std::exp(bcen.dot(row.g));
  }

  auto os = data.os_indices();
  p.os_dnorm.resize(static_cast<Eigen::Index>(os.size()));
  p.os_rout.resize(static_cast<Eigen::Index>(os.size()));
  double total_d = 0.0;
  for (auto j : os) total_d += *data.records[j].design_weight;
  for (std::size_t j = 0; j < os.size(); ++j) {
    const auto& rec = data.records[os[j]];
    p.os_dnorm[static_cast<Eigen::Index>(j)] = *rec.design_weight / total_d;
    p.os_rout[static_cast<Eigen::Index>(j)] = std::exp(bout.dot(bundle.expander(rec.x)));
  }
  return p;
}

std::vector<double> curve_grid(const CombinedDataset& data, double t_max) {
  std::vector<double> grid;
  grid.reserve(data.n + 1);
  for (const auto& r : data.records)
    if (r.source == Source::Rct && *r.u <= t_max) grid.push_back(*r.u);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  while (!grid.empty() && grid.front() <= 0.0) grid.erase(grid.begin());
  if (std::isfinite(t_max) && (grid.empty() || grid.back() < t_max)) grid.push_back(t_max);
  return grid;
}

}  // namespace

std::map<Method, CurveEstimate> estimate_curves(const CombinedDataset& data,
                                                const NuisanceBundle& bundle,
                                                const std::vector<Method>& methods, bool arm,
                                                double t_max) {
  auto want = [&](Method m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  };
  const bool need_acw2 = want(Method::Acw2);
  const bool need_acw1 = want(Method::Acw1) || need_acw2;
  const bool need_cw = want(Method::Cw);
  const bool need_ipsw = want(Method::Ipsw);
  const bool need_naive = want(Method::Naive);
  const bool need_or = want(Method::Or) || need_acw1;

  if ((need_or || need_acw1) && data.m == 0)
    throw FitError("estimator requires OS rows for the design-weighted average");
  if (need_cw && !bundle.calibration) throw FitError("CW estimator requires calibration weights");
  if (need_ipsw && !bundle.ipsw) throw FitError("IPSW estimator requires IPSW weights");

  SweepPrep p = prepare_sweep(data, bundle, arm, need_cw, need_ipsw, need_acw1);
  const std::vector<double> grid = curve_grid(data, t_max);
  const Eigen::Index na = p.w_acw.size();
  const std::size_t n_arm = static_cast<std::size_t>(na);

  const StepSurvival& ob = bundle.outcome(arm).baseline;
  const StepSurvival& cb = bundle.censoring(arm).baseline;

  std::map<Method, std::vector<double>> vals;
  for (Method m : methods) vals[m].assign(grid.size(), 0.0);
  std::vector<double> acw1_vals;
  if (need_acw1) acw1_vals.assign(grid.size(), 0.0);

  // State along the sweep.
  std::size_t risk_ptr = 0;
  std::size_t op = 0, cp = 0;
  double lam0 = 0.0, lamc0 = 0.0;
  Eigen::VectorXd mint = Eigen::VectorXd::Zero(na);
  Eigen::ArrayXd earm = Eigen::ArrayXd::Ones(na);
  Eigen::ArrayXd eos = Eigen::ArrayXd::Ones(p.os_rout.size());
  Eigen::ArrayXd ecen = Eigen::ArrayXd::Ones(na);
  double s_acw = need_acw1 ? p.w_acw.sum() : 0.0;
  double s_cw = need_cw ? p.w_cw.sum() : 0.0;
  double s_ipsw = need_ipsw ? p.w_ipsw.sum() : 0.0;
  double s_naive = need_naive ? p.w_naive.sum() : 0.0;
  double acw1_prev = 1.0;
  double cumhaz2 = 0.0;
  int clamped = 0;

  auto rebuild_risk_sums = [&]() {
    s_acw = s_cw = s_ipsw = s_naive = 0.0;
    for (std::size_t i = risk_ptr; i < n_arm; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      ecen[ii] = std::exp(lamc0 * p.rcen[ii]);
      if (need_acw1) s_acw += p.w_acw[ii] * ecen[ii];
      if (need_cw) s_cw += p.w_cw[ii] * ecen[ii];
      if (need_ipsw) s_ipsw += p.w_ipsw[ii] * ecen[ii];
      if (need_naive) s_naive += p.w_naive[ii] * ecen[ii];
    }
  };
  auto drop_subject = [&]() {
    const auto ii = static_cast<Eigen::Index>(risk_ptr);
    if (need_acw1) s_acw -= p.w_acw[ii] * ecen[ii];
    if (need_cw) s_cw -= p.w_cw[ii] * ecen[ii];
    if (need_ipsw) s_ipsw -= p.w_ipsw[ii] * ecen[ii];
    if (need_naive) s_naive -= p.w_naive[ii] * ecen[ii];
    ++risk_ptr;
  };

  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid[k];

    // Integral updates below use the at-risk set {U >= t}.
    while (risk_ptr < n_arm && p.u[risk_ptr] < t) drop_subject();

    const bool jump_out = op < ob.times.size() && ob.times[op] == t;
    const bool jump_cen = cp < cb.times.size() && cb.times[cp] == t;
    const double dlam0 = jump_out ? ob.values[op] - lam0 : 0.0;
    const double dlamc0 = jump_cen ? cb.values[cp] - lamc0 : 0.0;

    if (need_acw1) {
      // Censoring-martingale updates use left limits of both baselines.
      if (dlamc0 > 0.0) {
        for (std::size_t i = risk_ptr; i < n_arm; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          mint[ii] -= dlamc0 * p.rcen[ii] * std::exp(lamc0 * p.rcen[ii] + lam0 * p.rout[ii]);
        }
      }
      for (std::size_t i = risk_ptr; i < n_arm && p.u[i] == t; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!p.ev[i]) mint[ii] += std::exp(lamc0 * p.rcen[ii] + lam0 * p.rout[ii]);
      }
    }

    if (need_acw2 && jump_out) {
      double part1 = 0.0;
      for (std::size_t i = risk_ptr; i < n_arm && p.u[i] == t; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (p.ev[i]) part1 += p.w_acw[ii] * std::exp(lamc0 * p.rcen[ii]);
      }
      double aug = (p.os_dnorm.array() * p.os_rout.array() * eos).sum();
      if (na > 0)
        aug -= (p.w_acw.array() * p.rout.array() * earm * (1.0 - mint.array())).sum();
      const double neg_ds = part1 + dlam0 * aug;
      if (!(acw1_prev > 0.0))
        throw FitError("ACW2: nonpositive ACW1 left limit at t = " + std::to_string(t));
      double inc = neg_ds / acw1_prev;
      if (inc < 0.0) {
        inc = 0.0;
        ++clamped;
      }
      cumhaz2 += inc;
    }

    if (jump_out) {
      lam0 = ob.values[op];
      ++op;
      if (need_acw1 || need_or) {
        earm = (-lam0 * p.rout.array()).exp();
        eos = (-lam0 * p.os_rout.array()).exp();
      }
    }
    if (jump_cen) {
      lamc0 = cb.values[cp];
      ++cp;
      rebuild_risk_sums();
    }

    // Stored step values are right-continuous: the drop at t is included, so
    // the evaluation risk set is {U > t}.
    while (risk_ptr < n_arm && p.u[risk_ptr] == t) drop_subject();

    double or_t = 0.0;
    if (need_or) or_t = (p.os_dnorm.array() * eos).sum();
    if (need_acw1) {
      double aug = (p.w_acw.array() * earm * (1.0 - mint.array())).sum();
      const double acw1_t = s_acw + or_t - aug;
      acw1_vals[k] = acw1_t;
      acw1_prev = acw1_t;
    }
    if (want(Method::Naive)) vals[Method::Naive][k] = s_naive;
    if (want(Method::Cw)) vals[Method::Cw][k] = s_cw;
    if (want(Method::Ipsw)) vals[Method::Ipsw][k] = s_ipsw;
    if (want(Method::Or)) vals[Method::Or][k] = or_t;
    if (want(Method::Acw1)) vals[Method::Acw1][k] = acw1_vals[k];
    if (need_acw2) vals[Method::Acw2][k] = std::exp(-cumhaz2);
  }

  std::map<Method, CurveEstimate> out;
  for (Method m : methods) {
    CurveEstimate est;
    est.method = m;
    est.arm = arm;
    est.curve.times = grid;
    est.curve.values = std::move(vals[m]);
    switch (m) {
      case Method::Naive: est.curve.value_at_zero = need_naive ? p.w_naive.sum() : 0.0; break;
      case Method::Cw: est.curve.value_at_zero = p.w_cw.sum(); break;
      case Method::Ipsw: est.curve.value_at_zero = p.w_ipsw.sum(); break;
      // Cumulative hazards vanish at t = 0, so these averages of unit terms
      // are exactly one.
      case Method::Or:
      case Method::Acw1:
      case Method::Acw2: est.curve.value_at_zero = 1.0; break;
    }
    if (m == Method::Acw2) est.clamped_increments = clamped;
    out[m] = std::move(est);
  }
  return out;
}

CurveEstimate estimate_curve_naive(const CombinedDataset& data, const NuisanceBundle& bundle,
                                   bool arm) {
  return estimate_curves(data, bundle, {Method::Naive}, arm).at(Method::Naive);
}

CurveEstimate estimate_curve_or(const CombinedDataset& data, const NuisanceBundle& bundle,
                                bool arm) {
  return estimate_curves(data, bundle, {Method::Or}, arm).at(Method::Or);
}

CurveEstimate estimate_curve_weighted(const CombinedDataset& data, const NuisanceBundle& bundle,
                                      bool arm, Method method) {
  if (method != Method::Cw && method != Method::Ipsw)
    throw ValidationError("estimate_curve_weighted: method must be cw or ipsw");
  return estimate_curves(data, bundle, {method}, arm).at(method);
}

CurveEstimate estimate_curve_acw1(const CombinedDataset& data, const NuisanceBundle& bundle,
                                  bool arm) {
  return estimate_curves(data, bundle, {Method::Acw1}, arm).at(Method::Acw1);
}

CurveEstimate estimate_curve_acw2(const CombinedDataset& data, const NuisanceBundle& bundle,
                                  bool arm) {
  return estimate_curves(data, bundle, {Method::Acw2}, arm).at(Method::Acw2);
}

Eigen::VectorXd censoring_martingale_terms(const CombinedDataset& data,
                                           const NuisanceBundle& bundle, bool arm, double t) {
  const StepSurvival& ob = bundle.outcome(arm).baseline;
  const StepSurvival& cb = bundle.censoring(arm).baseline;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.records.size()));
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (rec.source != Source::Rct || *rec.a != arm) continue;
    Eigen::VectorXd g = bundle.expander(rec.x);
    const double rout = std::exp(bundle.outcome(arm).beta.dot(g));
    const double rcen = std::exp(bundle.censoring(arm).beta.dot(g));
    double term = 0.0;
    if (!*rec.event && *rec.u <= t)
      term += std::exp(cb.at_left(*rec.u) * rcen + ob.at_left(*rec.u) * rout);
    double prev = 0.0;
    for (std::size_t j = 0; j < cb.times.size() && cb.times[j] <= t; ++j) {
      const double uj = cb.times[j];
      const double dl = cb.values[j] - prev;
      prev = cb.values[j];
      if (*rec.u >= uj)
        term -= dl * rcen * std::exp(cb.at_left(uj) * rcen + ob.at_left(uj) * rout);
    }
    out[static_cast<Eigen::Index>(i)] = term;
  }
  return out;
}

Eigen::VectorXd estimate_eif_values(const CombinedDataset& data, const NuisanceBundle& bundle,
                                    bool arm, double t, double s_plugin) {
  const double n_total = static_cast<double>(data.records.size());
  const StepSurvival& ob = bundle.outcome(arm).baseline;
  const StepSurvival& cb = bundle.censoring(arm).baseline;
  const WeightFit& sampling = bundle.sampling();
  Eigen::VectorXd mint = censoring_martingale_terms(data, bundle, arm, t);

  double total_d = 0.0;
  for (const auto& rec : data.records)
    if (rec.source == Source::Os) total_d += *rec.design_weight;

  Eigen::VectorXd out(static_cast<Eigen::Index>(data.records.size()));
  std::size_t rct_pos = 0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    Eigen::VectorXd g = bundle.expander(rec.x);
    const double surv = std::exp(-ob.at(t) * std::exp(bundle.outcome(arm).beta.dot(g)));
    double val;
    if (rec.source == Source::Os) {
      val = n_total * (*rec.design_weight / total_d) * surv - s_plugin;
    } else {
      const double own = bundle.propensity.weights[static_cast<Eigen::Index>(rct_pos)];
      const double pa1 = *rec.a ? own : 1.0 - own;
      const double pia = arm ? pa1 : 1.0 - pa1;
      const double omega = sampling.weights[static_cast<Eigen::Index>(rct_pos)];
      const double a_ai = (*rec.a == arm) ? 1.0 : 0.0;
      // Right-continuous convention, matching the stored curve values.
      const double y_t = (*rec.u > t) ? 1.0 : 0.0;
      const double ipcw = std::exp(cb.at(t) * std::exp(bundle.censoring(arm).beta.dot(g)));
      double term = a_ai / pia * y_t * ipcw;
      term -= (a_ai - pia) / pia * surv;
      term -= surv;
      term += a_ai / pia * surv * mint[static_cast<Eigen::Index>(i)];
      val = n_total * omega * term - s_plugin;
      ++rct_pos;
    }
    out[static_cast<Eigen::Index>(i)] = val;
  }
  return out;
}

double apply_estimand(const StepSurvival& s1, const StepSurvival& s0, const EstimandSpec& spec) {
  switch (spec.kind) {
    case EstimandSpec::Kind::SurvDiffAt:
      return s1.at(spec.tau) - s0.at(spec.tau);
    case EstimandSpec::Kind::RmstDiff:
      return s1.integral(spec.tau) - s0.integral(spec.tau);
    case EstimandSpec::Kind::RmtlRatio: {
      const double denom = spec.tau - s0.integral(spec.tau);
      if (denom == 0.0) throw FitError("RMTL ratio: zero denominator");
      return (spec.tau - s1.integral(spec.tau)) / denom;
    }
    case EstimandSpec::Kind::QuantileDiff: {
      auto quantile = [&](const StepSurvival& s) {
        if (s.value_at_zero <= spec.tau) return 0.0;
        for (std::size_t j = 0; j < s.times.size(); ++j)
          if (s.values[j] <= spec.tau) return s.times[j];
        throw FitError("quantile: curve never reaches level " + std::to_string(spec.tau));
      };
      return quantile(s1) - quantile(s0);
    }
  }
  throw ValidationError("apply_estimand: unknown estimand");
}

}  // namespace acw
