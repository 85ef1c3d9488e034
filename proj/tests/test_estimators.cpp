#include <doctest.h>

#include <cmath>

#include "acw/estimators.hpp"
#include "acw/rng.hpp"

using namespace acw;

namespace {

SubjectRecord rct(double u, bool event, bool a, double x) {
  static int id = 0;
  SubjectRecord r;
  r.id = "r" + std::to_string(id++);
  r.source = Source::Rct;
  r.x = Eigen::VectorXd::Constant(1, x);
  r.u = u;
  r.event = event;
  r.a = a;
  return r;
}

SubjectRecord os(double x, double d = 1.0) {
  static int id = 0;
  SubjectRecord r;
  r.id = "o" + std::to_string(id++);
  r.source = Source::Os;
  r.x = Eigen::VectorXd::Constant(1, x);
  r.design_weight = d;
  return r;
}

BasisExpander raw(const CombinedDataset& data) {
  return BasisExpander(data, BasisSpec{1, true, false});
}

WeightFit make_weights(WeightKind kind, std::initializer_list<double> w, Eigen::Index k = 1) {
  WeightFit f;
  f.kind = kind;
  f.coef = Eigen::VectorXd::Zero(k);
  f.weights = Eigen::VectorXd(static_cast<Eigen::Index>(w.size()));
  Eigen::Index i = 0;
  for (double v : w) f.weights[i++] = v;
  f.converged = true;
  return f;
}

CoxFit make_cox(bool arm, CoxTarget target, const BasisExpander& ex, double beta,
                std::vector<double> times, std::vector<double> values) {
  CoxFit f;
  f.beta = Eigen::VectorXd::Constant(ex.dim(), beta);
  f.baseline.value_at_zero = 0.0;
  f.baseline.times = std::move(times);
  f.baseline.values = std::move(values);
  f.arm = arm;
  f.target = target;
  f.converged = true;
  f.expander = ex;
  return f;
}

// Four RCT subjects (two per arm), all events, plus two OS rows; propensity
// fixed at 1/2, no censoring.
struct Toy {
  CombinedDataset data;
  NuisanceBundle bundle;
};

Toy basic_toy() {
  std::vector<SubjectRecord> recs;
  recs.push_back(rct(5.0, true, true, 0.0));
  recs.push_back(rct(6.0, true, true, 0.0));
  recs.push_back(rct(4.0, true, false, 0.0));
  recs.push_back(rct(7.0, true, false, 0.0));
  recs.push_back(os(0.0, 2.0));
  recs.push_back(os(0.0, 2.0));
  Toy toy{CombinedDataset(recs), {}};
  BasisExpander ex = raw(toy.data);
  toy.bundle.expander = ex;
  toy.bundle.outcome1 = make_cox(true, CoxTarget::Event, ex, 0.0, {5.0, 6.0}, {0.5, 1.5});
  toy.bundle.outcome0 = make_cox(false, CoxTarget::Event, ex, 0.0, {4.0, 7.0}, {0.5, 1.5});
  toy.bundle.censoring1 = zero_hazard_fit(true, CoxTarget::Censoring, ex);
  toy.bundle.censoring0 = zero_hazard_fit(false, CoxTarget::Censoring, ex);
  toy.bundle.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5, 0.5, 0.5});
  toy.bundle.calibration = make_weights(WeightKind::Calibration, {0.25, 0.25, 0.25, 0.25});
  toy.bundle.ipsw = make_weights(WeightKind::Ipsw, {0.25, 0.25, 0.25, 0.25});
  return toy;
}

CombinedDataset random_dataset(Rng& rng, int n_per_arm, int m, double censor_scale = 1.0) {
  std::vector<SubjectRecord> recs;
  for (int arm = 0; arm <= 1; ++arm) {
    for (int i = 0; i < n_per_arm; ++i) {
      double x = normal(rng);
      double t_event = exponential(rng) * std::exp(-0.4 * x);
      double t_cens = censor_scale * exponential(rng);
      SubjectRecord r = rct(std::min(t_event, t_cens), t_event <= t_cens, arm == 1, x);
      if (i == 0) r.event = true;  // guarantee an event per arm
      recs.push_back(std::move(r));
    }
  }
  for (int j = 0; j < m; ++j) recs.push_back(os(normal(rng) * 0.9 + 0.3, 0.5 + uniform01(rng)));
  return CombinedDataset(std::move(recs));
}

// Literal per-subject evaluation of the augmented estimator, kept independent
// of the sweep implementation.
double brute_acw1(const CombinedDataset& data, const NuisanceBundle& bundle, bool arm, double t) {
  Eigen::VectorXd mart = censoring_martingale_terms(data, bundle, arm, t);
  double total_d = 0.0;
  for (const auto& r : data.records)
    if (r.source == Source::Os) total_d += *r.design_weight;
  double acc = 0.0;
  std::size_t rct_pos = 0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (rec.source == Source::Os) {
      acc += *rec.design_weight / total_d * predict_survival(bundle.outcome(arm), rec.x, t);
      continue;
    }
    const double own = bundle.propensity.weights[static_cast<Eigen::Index>(rct_pos)];
    const double pa1 = *rec.a ? own : 1.0 - own;
    const double pia = arm ? pa1 : 1.0 - pa1;
    const double omega = bundle.sampling().weights[static_cast<Eigen::Index>(rct_pos)];
    ++rct_pos;
    if (*rec.a != arm) continue;
    const double w = omega / pia;
    if (*rec.u > t) acc += w * std::exp(bundle.censoring(arm).cumhaz(rec.x, t));
    acc -= predict_survival(bundle.outcome(arm), rec.x, t) *
           w * (1.0 - mart[static_cast<Eigen::Index>(i)]);
  }
  return acc;
}

}  // namespace

TEST_CASE("naive curve: telescoping at zero, empty risk set, single survivor") {
  Toy toy = basic_toy();
  CurveEstimate naive = estimate_curve_naive(toy.data, toy.bundle, true);
  CHECK(naive.curve.value_at_zero == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(naive.curve.at(10.0) == 0.0);
  // At t = 5.5 only the U=6 treated subject is at risk: (1/4)/(1/2).
  CHECK(naive.curve.at(5.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("outcome-regression curve averages predicted survival over OS rows") {
  Toy toy = basic_toy();
  CurveEstimate orc = estimate_curve_or(toy.data, toy.bundle, true);
  CHECK(orc.curve.value_at_zero == 1.0);
  // Both OS rows share x = 0: curve equals exp(-Lambda0).
  CHECK(orc.curve.at(5.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(orc.curve.at(6.5) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));

  // Two OS rows with different covariates and distinct predictions.
  std::vector<SubjectRecord> recs;
  recs.push_back(rct(1.0, true, true, 0.0));
  recs.push_back(rct(2.0, true, true, 0.0));
  recs.push_back(rct(1.5, true, false, 0.0));
  recs.push_back(rct(2.5, true, false, 0.0));
  recs.push_back(os(0.0, 3.0));
  recs.push_back(os(1.0, 3.0));
  CombinedDataset data(recs);
  BasisExpander ex = raw(data);
  NuisanceBundle b;
  b.expander = ex;
  const double lam = -std::log(0.8);
  const double beta = std::log(std::log(0.6) / std::log(0.8));
  b.outcome1 = make_cox(true, CoxTarget::Event, ex, beta, {1.0}, {lam});
  b.outcome0 = make_cox(false, CoxTarget::Event, ex, 0.0, {1.5}, {lam});
  b.censoring1 = zero_hazard_fit(true, CoxTarget::Censoring, ex);
  b.censoring0 = zero_hazard_fit(false, CoxTarget::Censoring, ex);
  b.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5, 0.5, 0.5});
  CurveEstimate mixed = estimate_curve_or(data, b, true);
  CHECK(mixed.curve.at(1.2) == doctest::Approx(0.5 * (0.8 + 0.6)).epsilon(1e-10));

  // Single OS subject: the curve is that subject's predicted survival.
  recs.pop_back();
  CombinedDataset single(recs);
  CurveEstimate sc = estimate_curve_or(single, b, true);
  CHECK(sc.curve.at(1.2) == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("weighted curves telescope, vanish, and can exceed one") {
  Toy toy = basic_toy();
  CurveEstimate cw = estimate_curve_weighted(toy.data, toy.bundle, true, Method::Cw);
  CHECK(cw.curve.value_at_zero == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cw.curve.at(4.9) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cw.curve.at(10.0) == 0.0);
  CurveEstimate ipsw = estimate_curve_weighted(toy.data, toy.bundle, true, Method::Ipsw);
  CHECK(ipsw.curve.at(4.9) == doctest::Approx(1.0).epsilon(1e-12));

  // One subject per arm with lopsided calibration weights.
  std::vector<SubjectRecord> recs;
  recs.push_back(rct(3.0, true, false, 0.0));
  recs.push_back(rct(5.0, true, true, 0.0));
  recs.push_back(os(0.0, 1.0));
  CombinedDataset data(recs);
  BasisExpander ex = raw(data);
  NuisanceBundle b;
  b.expander = ex;
  b.outcome1 = make_cox(true, CoxTarget::Event, ex, 0.0, {5.0}, {1.0});
  b.outcome0 = make_cox(false, CoxTarget::Event, ex, 0.0, {3.0}, {1.0});
  b.censoring1 = zero_hazard_fit(true, CoxTarget::Censoring, ex);
  b.censoring0 = zero_hazard_fit(false, CoxTarget::Censoring, ex);
  b.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5});
  b.calibration = make_weights(WeightKind::Calibration, {0.25, 0.75});
  CurveEstimate lop = estimate_curve_weighted(data, b, true, Method::Cw);
  CHECK(lop.curve.at(4.0) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("censoring martingale terms: no censoring, early horizon, hand case") {
  Toy toy = basic_toy();
  Eigen::VectorXd zero = censoring_martingale_terms(toy.data, toy.bundle, true, 20.0);
  CHECK(zero.isZero());

  std::vector<SubjectRecord> recs;
  recs.push_back(rct(1.0, false, true, 0.0));  // censored at 1
  recs.push_back(rct(2.0, true, true, 0.0));   // at risk through both jumps
  recs.push_back(os(0.0, 1.0));
  CombinedDataset data(recs);
  BasisExpander ex = raw(data);
  NuisanceBundle b;
  b.expander = ex;
  b.outcome1 = make_cox(true, CoxTarget::Event, ex, 0.0, {0.5}, {0.3});
  b.outcome0 = b.outcome1;
  b.censoring1 = make_cox(true, CoxTarget::Censoring, ex, 0.0, {0.5, 1.0}, {0.2, 0.7});
  b.censoring0 = b.censoring1;
  b.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5});
  b.calibration = make_weights(WeightKind::Calibration, {0.5, 0.5});

  Eigen::VectorXd early = censoring_martingale_terms(data, b, true, 0.4);
  CHECK(early.isZero());

  Eigen::VectorXd at1 = censoring_martingale_terms(data, b, true, 1.0);
  const double e05 = std::exp(0.5);
  // Censored subject: dN^C gives e^{0.2+0.3}; compensator jumps -0.2 e^0 and
  // -0.5 e^{0.5}.
  CHECK(at1[0] == doctest::Approx(e05 - 0.2 - 0.5 * e05).epsilon(1e-12));
  // Still-at-risk subject gets the compensator only.
  CHECK(at1[1] == doctest::Approx(-0.2 - 0.5 * e05).epsilon(1e-12));
  CHECK(at1[2] == 0.0);  // OS row

  // Between the jumps only the first compensator term has accrued.
  Eigen::VectorXd mid = censoring_martingale_terms(data, b, true, 0.7);
  CHECK(mid[0] == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(mid[1] == doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("acw1 equals a literal per-subject evaluation on random data") {
  Rng rng = make_rng(1234);
  for (int rep = 0; rep < 6; ++rep) {
    CombinedDataset data = random_dataset(rng, 12, 15);
    BasisExpander ex(data, BasisSpec{1, true, true});
    NuisanceBundle bundle;
    try {
      bundle = fit_nuisances(data, ex, {}, true, false);
    } catch (const FitError&) {
      continue;
    }
    for (bool arm : {true, false}) {
      CurveEstimate acw1 = estimate_curve_acw1(data, bundle, arm);
      CHECK(acw1.curve.value_at_zero == 1.0);
      for (double t : {0.2, 0.5, 0.9, 1.7, 2.6}) {
        double brute = brute_acw1(data, bundle, arm, t);
        CHECK(acw1.curve.at(t) == doctest::Approx(brute).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("acw1 on the saturated two-subject toy collapses to the OS average") {
  std::vector<SubjectRecord> recs;
  recs.push_back(rct(1.0, true, true, 0.0));
  recs.push_back(rct(2.0, true, false, 0.0));
  recs.push_back(os(0.0, 2.0));
  CombinedDataset data(recs);
  BasisExpander ex = raw(data);
  NuisanceBundle b;
  b.expander = ex;
  b.outcome1 = make_cox(true, CoxTarget::Event, ex, 0.0, {1.0}, {1.0});
  b.outcome0 = make_cox(false, CoxTarget::Event, ex, 0.0, {2.0}, {1.0});
  b.censoring1 = zero_hazard_fit(true, CoxTarget::Censoring, ex);
  b.censoring0 = zero_hazard_fit(false, CoxTarget::Censoring, ex);
  b.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5});
  b.calibration = make_weights(WeightKind::Calibration, {0.5, 0.5});

  CurveEstimate acw1 = estimate_curve_acw1(data, b, true);
  CurveEstimate orc = estimate_curve_or(data, b, true);
  // Expanded by hand: before the event both terms cancel except the OS
  // average; after it the weighted term vanishes with Y(t).
  CHECK(acw1.curve.at(0.5) == doctest::Approx(1.0 + orc.curve.at(0.5) - 1.0).epsilon(1e-12));
  CHECK(acw1.curve.at(1.5) ==
        doctest::Approx(orc.curve.at(1.5) - std::exp(-1.0)).epsilon(1e-12));
  CHECK(brute_acw1(data, b, true, 0.5) == doctest::Approx(acw1.curve.at(0.5)).epsilon(1e-12));
}

TEST_CASE("acw2 is a proper survival curve and tracks acw1") {
  Rng rng = make_rng(77);
  for (int rep = 0; rep < 4; ++rep) {
    CombinedDataset data = random_dataset(rng, 40, 40);
    BasisExpander ex(data, BasisSpec{1, true, true});
    NuisanceBundle bundle;
    try {
      bundle = fit_nuisances(data, ex, {}, true, false);
    } catch (const FitError&) {
      continue;
    }
    for (bool arm : {true, false}) {
      CurveEstimate acw2 = estimate_curve_acw2(data, bundle, arm);
      CHECK(acw2.curve.value_at_zero == 1.0);
      double prev = 1.0;
      for (std::size_t k = 0; k < acw2.curve.values.size(); ++k) {
        double v = acw2.curve.values[k];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v <= prev + 1e-12);
        prev = v;
      }
    }
  }
}

TEST_CASE("eif values: zero martingale block, zero mean at the acw1 plug-in") {
  Rng rng = make_rng(4321);
  // No censoring: the martingale term vanishes identically.
  CombinedDataset nocens = random_dataset(rng, 10, 12, 1e9);
  BasisExpander ex(nocens, BasisSpec{1, true, true});
  NuisanceBundle bundle = fit_nuisances(nocens, ex, {}, true, false);
  CHECK(censoring_martingale_terms(nocens, bundle, true, 5.0).isZero());

  for (int rep = 0; rep < 3; ++rep) {
    CombinedDataset data = random_dataset(rng, 15, 20);
    BasisExpander ex2(data, BasisSpec{1, true, true});
    NuisanceBundle b2;
    try {
      b2 = fit_nuisances(data, ex2, {}, true, false);
    } catch (const FitError&) {
      continue;
    }
    for (bool arm : {true, false}) {
      CurveEstimate acw1 = estimate_curve_acw1(data, b2, arm);
      for (std::size_t k = 0; k < acw1.curve.times.size(); k += 7) {
        double t = acw1.curve.times[k];
        Eigen::VectorXd eif = estimate_eif_values(data, b2, arm, t, acw1.curve.at(t));
        CHECK(std::abs(eif.mean()) <= 1e-8);
      }
    }
  }
}

TEST_CASE("eif values on the two-subject toy match hand arithmetic") {
  std::vector<SubjectRecord> recs;
  recs.push_back(rct(1.0, true, true, 0.0));
  recs.push_back(rct(2.0, true, false, 0.0));
  recs.push_back(os(0.0, 2.0));
  CombinedDataset data(recs);
  BasisExpander ex = raw(data);
  NuisanceBundle b;
  b.expander = ex;
  b.outcome1 = make_cox(true, CoxTarget::Event, ex, 0.0, {1.0}, {1.0});
  b.outcome0 = make_cox(false, CoxTarget::Event, ex, 0.0, {2.0}, {1.0});
  b.censoring1 = zero_hazard_fit(true, CoxTarget::Censoring, ex);
  b.censoring0 = zero_hazard_fit(false, CoxTarget::Censoring, ex);
  b.propensity = make_weights(WeightKind::Propensity, {0.5, 0.5});
  b.calibration = make_weights(WeightKind::Calibration, {0.5, 0.5});

  const double t = 1.5;
  CurveEstimate acw1 = estimate_curve_acw1(data, b, true);
  double plugin = acw1.curve.at(t);
  CHECK(plugin == doctest::Approx(0.0).epsilon(1e-12));
  Eigen::VectorXd eif = estimate_eif_values(data, b, true, t, plugin);
  const double e1 = std::exp(-1.0);
  CHECK(eif[0] == doctest::Approx(-3.0 * e1).epsilon(1e-12));
  CHECK(eif[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eif[2] == doctest::Approx(3.0 * e1).epsilon(1e-12));
}

TEST_CASE("estimand functionals: identity inputs, rectangles, quantiles") {
  StepSurvival s;
  s.value_at_zero = 1.0;
  s.times = {1.0};
  s.values = {0.5};

  CHECK(apply_estimand(s, s, {EstimandSpec::Kind::RmstDiff, 2.0}) == 0.0);
  CHECK(apply_estimand(s, s, {EstimandSpec::Kind::SurvDiffAt, 1.5}) == 0.0);
  CHECK(apply_estimand(s, s, {EstimandSpec::Kind::RmtlRatio, 2.0}) == doctest::Approx(1.0));

  StepSurvival flat;
  flat.value_at_zero = 1.0;
  CHECK(s.integral(2.0) == doctest::Approx(1.5));
  CHECK(apply_estimand(s, flat, {EstimandSpec::Kind::RmstDiff, 2.0}) == doctest::Approx(-0.5));

  StepSurvival q;
  q.value_at_zero = 1.0;
  q.times = {1.0, 3.0};
  q.values = {0.6, 0.4};
  StepSurvival qzero;
  qzero.value_at_zero = 0.4;
  CHECK(apply_estimand(q, qzero, {EstimandSpec::Kind::QuantileDiff, 0.5}) == doctest::Approx(3.0));

  StepSurvival never;
  never.value_at_zero = 1.0;
  never.times = {1.0};
  never.values = {0.9};
  CHECK_THROWS_AS(apply_estimand(never, q, {EstimandSpec::Kind::QuantileDiff, 0.5}), FitError);

  StepSurvival one;
  one.value_at_zero = 1.0;
  CHECK_THROWS_AS(apply_estimand(s, one, {EstimandSpec::Kind::RmtlRatio, 5.0}), FitError);
}

TEST_CASE("exact step integration matches a lattice-aligned Riemann oracle") {
  Rng rng = make_rng(99999);
  const double tau = 5.0;
  const std::size_t cells = 1000000;
  const double dt = tau / static_cast<double>(cells);
  for (int rep = 0; rep < 3; ++rep) {
    StepSurvival s;
    s.value_at_zero = 1.0;
    double v = 1.0;
    for (int j = 0; j < 20; ++j) {
      // Jump times on the Riemann lattice so the left-endpoint sum is exact.
      std::size_t cell = static_cast<std::size_t>(j) * (cells / 25) + 1 +
                         uniform_below(rng, cells / 25 - 1);
      s.times.push_back(static_cast<double>(cell) * dt);
      v *= 0.75 + 0.2 * uniform01(rng);
      s.values.push_back(v);
    }
    double riemann = 0.0;
    for (std::size_t c = 0; c < cells; ++c) riemann += s.at(static_cast<double>(c) * dt) * dt;
    CHECK(std::abs(s.integral(tau) - riemann) < 1e-9);
  }
}

TEST_CASE("curves are exactly representable on the follow-up grid") {
  Rng rng = make_rng(808);
  CombinedDataset data = random_dataset(rng, 20, 20);
  BasisExpander ex(data, BasisSpec{1, true, true});
  NuisanceBundle bundle = fit_nuisances(data, ex, {}, true, true);
  auto curves = estimate_curves(data, bundle,
                                {Method::Naive, Method::Or, Method::Ipsw, Method::Cw, Method::Acw1,
                                 Method::Acw2},
                                true);
  for (auto& [m, est] : curves) {
    const auto& c = est.curve;
    for (std::size_t k = 0; k + 1 < c.times.size(); ++k) {
      double mid = 0.5 * (c.times[k] + c.times[k + 1]);
      CHECK(c.at(mid) == c.values[k]);
    }
  }
  // Off-grid ACW1 values agree with the literal formula evaluated there.
  for (double t : {0.33, 1.11, 2.49}) {
    double brute = brute_acw1(data, bundle, true, t);
    CHECK(curves.at(Method::Acw1).curve.at(t) == doctest::Approx(brute).epsilon(1e-10));
  }
}
