#include "acw/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acw/errors.hpp"
#include "acw/parallel.hpp"

namespace acw {

TruthSpec make_truth(bool outcome_correct, bool weights_correct) {
  TruthSpec t;
  if (outcome_correct) {
    t.outcome1 = {-3.7, {-1.0, -1.0, -1.5}, {false, false, false}};
    t.outcome0 = {-3.0, {-1.8, -1.5, -1.0}, {false, false, false}};
  } else {
    t.outcome1 = {-0.8, {-1.0, -1.0, -1.5}, {true, true, false}};
    t.outcome0 = {1.5, {-1.8, -1.5, -1.0}, {true, true, false}};
  }
  if (weights_correct) {
    t.sampling = {-3.9, {-0.5, -0.5, -0.3}, {false, false, false}};
    t.propensity = {0.0, {0.0, 0.0, 0.0}, {false, false, false}};
    t.censoring1 = {-4.5, {-0.5, -1.0, -1.0}, {false, false, false}};
    t.censoring0 = {-3.5, {-0.5, -1.0, -1.0}, {false, false, false}};
  } else {
    t.sampling = {-2.5, {-0.5, -0.5, -0.3}, {true, true, false}};
    t.propensity = {-1.0, {0.5, 0.5, -0.5}, {true, true, true}};
    t.censoring1 = {-2.5, {-0.5, -1.0, -1.0}, {true, true, false}};
    t.censoring0 = {-1.5, {-0.5, -1.0, -1.0}, {true, true, false}};
  }
  return t;
}

void ScenarioSpec::check() const {
  if (pop_size != rct_pool + os_pool)
    throw ValidationError("scenario: pop_size must equal rct_pool + os_pool");
  if (os_sample > os_pool) throw ValidationError("scenario: os_sample exceeds os_pool");
  if (tau <= 0) throw ValidationError("scenario: tau must be positive");
}

ScenarioSpec scenario(int id) {
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case 1: s.outcome_correct = true, s.weights_correct = true; break;
    case 2: s.outcome_correct = true, s.weights_correct = false; break;
    case 3: s.outcome_correct = false, s.weights_correct = true; break;
    case 4: s.outcome_correct = false, s.weights_correct = false; break;
    default: throw ValidationError("scenario id must be 1..4");
  }
  return s;
}

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// T with hazard t * exp(lp): Lambda(t) = t^2/2 * exp(lp), so
/// T = sqrt(2 E / exp(lp)) for E ~ Exp(1).
double draw_time(double lp, Rng& rng) { return std::sqrt(2.0 * exponential(rng) / std::exp(lp)); }

}  // namespace

CombinedDataset generate_replicate(const ScenarioSpec& sc, const TruthSpec& truth, Rng& rng) {
  sc.check();
  std::vector<Eigen::VectorXd> pop(sc.pop_size);
  for (std::size_t i = 0; i < sc.pop_size; ++i) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = truncated_normal(rng, -4.0, 4.0);
    pop[i] = std::move(x);
  }

  std::vector<SubjectRecord> records;
  records.reserve(sc.os_sample + 2000);
  for (std::size_t i = 0; i < sc.rct_pool; ++i) {
    const Eigen::VectorXd& x = pop[i];
    if (uniform01(rng) >= expit(truth.sampling.eval(x))) continue;
    SubjectRecord rec;
    rec.id = "r" + std::to_string(i);
    rec.source = Source::Rct;
    rec.x = x;
    bool a = uniform01(rng) < expit(truth.propensity.eval(x));
    double t_event = draw_time((a ? truth.outcome1 : truth.outcome0).eval(x), rng);
    double t_cens = draw_time((a ? truth.censoring1 : truth.censoring0).eval(x), rng);
    rec.a = a;
    rec.u = std::min(t_event, t_cens);
    rec.event = t_event <= t_cens;
    records.push_back(std::move(rec));
  }

  // Simple random sample without replacement from the OS pool.
  std::vector<std::size_t> pool_idx(sc.os_pool);
  std::iota(pool_idx.begin(), pool_idx.end(), sc.rct_pool);
  const double d = static_cast<double>(sc.os_pool) / static_cast<double>(sc.os_sample);
  for (std::size_t j = 0; j < sc.os_sample; ++j) {
    std::size_t pick = j + uniform_below(rng, sc.os_pool - j);
    std::swap(pool_idx[j], pool_idx[pick]);
    SubjectRecord rec;
    rec.id = "o" + std::to_string(pool_idx[j]);
    rec.source = Source::Os;
    rec.x = pop[pool_idx[j]];
    rec.design_weight = d;
    records.push_back(std::move(rec));
  }
  return CombinedDataset(std::move(records));
}

TrueValues true_ate(const TruthSpec& truth, double tau, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw ValidationError("true_ate: n_mc too small");
  TrueValues out;
  out.seed = seed;
  if (tau <= 0.0) return out;
  Rng rng = make_rng(seed, 0x7247ULL);
  double sum1 = 0.0, sum0 = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  Eigen::VectorXd x(3);
  for (std::size_t i = 0; i < n_mc; ++i) {
    for (int j = 0; j < 3; ++j) x[j] = truncated_normal(rng, -4.0, 4.0);
    // integral_0^tau exp(-t^2 rate / 2) dt, rate = exp(linpred)
    auto rmst = [&](const LinPred& lp) {
      double rate = std::exp(lp.eval(x));
      double s = std::sqrt(rate / 2.0);
      return std::sqrt(M_PI) / (2.0 * s) * std::erf(tau * s);
    };
    double i1 = rmst(truth.outcome1);
    double i0 = rmst(truth.outcome0);
    sum1 += i1;
    sum0 += i0;
    sum_d += i1 - i0;
    sum_d2 += (i1 - i0) * (i1 - i0);
  }
  const double n = static_cast<double>(n_mc);
  out.mu1 = sum1 / n;
  out.mu0 = sum0 / n;
  out.theta = sum_d / n;
  out.mc_se = std::sqrt(std::max(0.0, sum_d2 / n - out.theta * out.theta) / n);
  return out;
}

std::vector<std::pair<Method, bool>> default_mc_estimators() {
  return {{Method::Naive, false}, {Method::Ipsw, false}, {Method::Cw, false},
          {Method::Or, false},    {Method::Acw1, false}, {Method::Acw2, false},
          {Method::Acw1, true},   {Method::Acw2, true}};
}

namespace {

struct RepOutcome {
  bool ok = false;
  // per estimator (in options order): {mu1, mu0, theta} x {point, se, cil, cih}
  std::vector<std::array<std::array<double, 4>, 3>> cells;
};

std::string estimator_label(Method m, bool sieve) {
  return method_name(m) + (sieve ? std::string("(s)") : std::string());
}

}  // namespace

McReport run_mc_study(const ScenarioSpec& sc, const McOptions& options) {
  sc.check();
  if (options.reps < 2) throw ValidationError("run_mc_study: reps must be >= 2");
  const auto estimators = options.estimators.empty() ? default_mc_estimators() : options.estimators;
  const TruthSpec truth = make_truth(sc.outcome_correct, sc.weights_correct);

  // Frozen oracle value: fixed internal seed so every run of a scenario
  // shares the same reference.
  const std::uint64_t truth_seed = derive_seed(0xACE0ULL, static_cast<std::uint64_t>(sc.outcome_correct));
  const TrueValues truth_vals = true_ate(truth, sc.tau, 1000000, truth_seed);

  std::vector<Method> plain_methods, sieve_methods;
  for (auto [m, sieve] : estimators) (sieve ? sieve_methods : plain_methods).push_back(m);

  const EstimandSpec estimand{EstimandSpec::Kind::RmstDiff, sc.tau};
  const bool do_boot = options.bootstrap_b >= 2;

  std::vector<RepOutcome> reps(static_cast<std::size_t>(options.reps));
  parallel_for(static_cast<std::size_t>(options.reps), options.threads, [&](std::size_t r) {
    Rng rng = make_rng(options.seed, 0x9e0ULL, r);
    try {
      CombinedDataset data = generate_replicate(sc, truth, rng);

      auto needs_cal = [](const std::vector<Method>& ms) {
        return std::find(ms.begin(), ms.end(), Method::Cw) != ms.end() ||
               std::find(ms.begin(), ms.end(), Method::Acw1) != ms.end() ||
               std::find(ms.begin(), ms.end(), Method::Acw2) != ms.end();
      };
      auto needs_ipsw = [](const std::vector<Method>& ms) {
        return std::find(ms.begin(), ms.end(), Method::Ipsw) != ms.end();
      };

      std::vector<DesignPlan> plans;
      int plain_idx = -1, sieve_idx = -1;
      if (!plain_methods.empty()) {
        DesignPlan plan;
        plan.label = "";
        plan.methods = plain_methods;
        plan.basis = BasisSpec{1, true, true};
        plan.want_calibration = needs_cal(plain_methods);
        plan.want_ipsw = needs_ipsw(plain_methods);
        plain_idx = static_cast<int>(plans.size());
        plans.push_back(std::move(plan));
      }
      if (!sieve_methods.empty()) {
        DesignPlan plan;
        plan.label = "(s)";
        plan.methods = sieve_methods;
        plan.basis = BasisSpec{2, true, true};
        plan.want_calibration = needs_cal(sieve_methods);
        plan.want_ipsw = needs_ipsw(sieve_methods);
        ScadSpec base;
        base.cv_folds = 5;
        BasisExpander expander(data, plan.basis);
        plan.penalties = select_penalties(data, expander, base, plan.want_calibration,
                                          plan.want_ipsw, derive_seed(options.seed, 0xcf0ULL, r));
        sieve_idx = static_cast<int>(plans.size());
        plans.push_back(std::move(plan));
      }

      RepOutcome rep;
      rep.cells.resize(estimators.size());
      if (do_boot) {
        BootstrapSpec bspec;
        bspec.b = options.bootstrap_b;
        bspec.seed = derive_seed(options.seed, 0xb0075ULL, r);
        bspec.ci = options.ci;
        bspec.threads = 1;
        auto boot = bootstrap_designs(data, plans, estimand, bspec);
        for (std::size_t e = 0; e < estimators.size(); ++e) {
          auto [m, sieve] = estimators[e];
          const TripleSummary& s = boot.at({sieve ? sieve_idx : plain_idx, m});
          rep.cells[e] = {{{s.mu1.point, s.mu1.se, s.mu1.ci_low, s.mu1.ci_high},
                           {s.mu0.point, s.mu0.se, s.mu0.ci_low, s.mu0.ci_high},
                           {s.theta.point, s.theta.se, s.theta.ci_low, s.theta.ci_high}}};
        }
      } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<DesignResult> results(plans.size());
        for (std::size_t d = 0; d < plans.size(); ++d)
          results[d] = run_design(data, plans[d], estimand, sc.tau);
        for (std::size_t e = 0; e < estimators.size(); ++e) {
          auto [m, sieve] = estimators[e];
          const DesignResult& res = results[static_cast<std::size_t>(sieve ? sieve_idx : plain_idx)];
          rep.cells[e] = {{{res.mu1.at(m), nan, nan, nan},
                           {res.mu0.at(m), nan, nan, nan},
                           {res.theta.at(m), nan, nan, nan}}};
        }
      }
      rep.ok = true;
      reps[r] = std::move(rep);
    } catch (const FitError&) {
      // counted against the failure budget
    }
  });

  int failed = 0;
  for (const auto& rep : reps)
    if (!rep.ok) ++failed;
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(options.reps))
    throw FitError("run_mc_study: " + std::to_string(failed) + " of " +
                   std::to_string(options.reps) + " replicates failed (budget 5%)");

  McReport report;
  report.scenario_id = sc.id;
  report.reps = options.reps;
  report.bootstrap_b = options.bootstrap_b;
  report.seed = options.seed;
  report.truth = truth_vals;
  report.failed_replicates = failed;

  const double truths[3] = {truth_vals.mu1, truth_vals.mu0, truth_vals.theta};
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    McRow row;
    row.estimator = estimator_label(estimators[e].first, estimators[e].second);
    McCell* cells[3] = {&row.mu1, &row.mu0, &row.theta};
    for (int q = 0; q < 3; ++q) {
      std::vector<double> points, ses;
      int covered = 0, with_ci = 0;
      for (const auto& rep : reps) {
        if (!rep.ok) continue;
        const auto& c = rep.cells[e][static_cast<std::size_t>(q)];
        points.push_back(c[0]);
        if (std::isfinite(c[1])) ses.push_back(c[1]);
        if (std::isfinite(c[2]) && std::isfinite(c[3])) {
          ++with_ci;
          if (c[2] <= truths[q] && truths[q] <= c[3]) ++covered;
        }
      }
      McCell& cell = *cells[q];
      const double nrep = static_cast<double>(points.size());
      double mean = std::accumulate(points.begin(), points.end(), 0.0) / nrep;
      cell.bias = mean - truths[q];
      double ss = 0.0;
      for (double v : points) ss += (v - mean) * (v - mean);
      cell.ese = nrep > 1 ? std::sqrt(ss / (nrep - 1.0)) : 0.0;
      if (!ses.empty() && cell.ese > 0) {
        double mse = std::accumulate(ses.begin(), ses.end(), 0.0) / static_cast<double>(ses.size());
        cell.rse_percent = 100.0 * (mse / cell.ese - 1.0);
      } else {
        cell.rse_percent = std::numeric_limits<double>::quiet_NaN();
      }
      cell.cp_percent = with_ci > 0 ? 100.0 * static_cast<double>(covered) / with_ci
                                    : std::numeric_limits<double>::quiet_NaN();
    }
    report.rows.push_back(std::move(row));

    if (options.keep_replicate_log) {
      std::vector<double> draws;
      for (const auto& rep : reps)
        if (rep.ok) draws.push_back(rep.cells[e][2][0]);
      report.replicate_log.emplace_back(report.rows.back().estimator, std::move(draws));
    }
  }
  return report;
}

}  // namespace acw
