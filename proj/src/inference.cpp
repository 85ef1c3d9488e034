#include "acw/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "acw/errors.hpp"
#include "acw/parallel.hpp"

namespace acw {

DesignResult run_design(const CombinedDataset& data, const DesignPlan& plan,
                        const EstimandSpec& estimand, double t_max) {
  BasisExpander expander(data, plan.basis);
  NuisanceBundle bundle =
      fit_nuisances(data, expander, plan.penalties, plan.want_calibration, plan.want_ipsw);
  auto curves1 = estimate_curves(data, bundle, plan.methods, true, t_max);
  auto curves0 = estimate_curves(data, bundle, plan.methods, false, t_max);

  DesignResult out;
  const bool tau_is_time = estimand.kind != EstimandSpec::Kind::QuantileDiff;
  for (Method m : plan.methods) {
    const auto& c1 = curves1.at(m);
    const auto& c0 = curves0.at(m);
    double theta = apply_estimand(c1.curve, c0.curve, estimand);
    if (!std::isfinite(theta))
      throw FitError("non-finite " + method_name(m) + " estimate");
    out.theta[m] = theta;
    if (tau_is_time) {
      out.mu1[m] = c1.curve.integral(estimand.tau);
      out.mu0[m] = c0.curve.integral(estimand.tau);
    } else {
      out.mu1[m] = std::numeric_limits<double>::quiet_NaN();
      out.mu0[m] = std::numeric_limits<double>::quiet_NaN();
    }
    out.curves.emplace(m, std::make_pair(std::move(curves1.at(m)), std::move(curves0.at(m))));
  }
  return out;
}

CombinedDataset resample(const CombinedDataset& data, Rng& rng) {
  auto rct = data.rct_indices();
  auto os = data.os_indices();
  std::vector<SubjectRecord> records;
  records.reserve(data.records.size());
  for (std::size_t i = 0; i < rct.size(); ++i)
    records.push_back(data.records[rct[uniform_below(rng, rct.size())]]);
  for (std::size_t j = 0; j < os.size(); ++j)
    records.push_back(data.records[os[uniform_below(rng, os.size())]]);
  return CombinedDataset(std::move(records));
}

double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double h = (static_cast<double>(v.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = h - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

namespace {

struct TripleDraws {
  std::vector<double> mu1, mu0, theta;
};

BootstrapSummary summarize(double point, const std::vector<double>& draws, int b, int failures,
                           BootstrapSpec::Ci ci) {
  BootstrapSummary s;
  s.point = point;
  s.b = b;
  s.failures = failures;
  const std::size_t k = draws.size();
  if (k >= 2) {
    double mean = 0.0;
    for (double d : draws) mean += d;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (double d : draws) ss += (d - mean) * (d - mean);
    s.se = std::sqrt(ss / static_cast<double>(k - 1));
  } else {
    s.se = 0.0;
  }
  if (ci == BootstrapSpec::Ci::Normal) {
    s.ci_low = point - 1.96 * s.se;
    s.ci_high = point + 1.96 * s.se;
  } else {
    s.ci_low = quantile_type7(draws, 0.025);
    s.ci_high = quantile_type7(draws, 0.975);
  }
  return s;
}

}  // namespace

std::map<EstimatorKey, TripleSummary> bootstrap_designs(const CombinedDataset& data,
                                                        const std::vector<DesignPlan>& plans,
                                                        const EstimandSpec& estimand,
                                                        const BootstrapSpec& spec) {
  if (spec.b < 2) throw ValidationError("bootstrap: b must be >= 2");
  const double t_max =
      estimand.kind == EstimandSpec::Kind::QuantileDiff
          ? std::numeric_limits<double>::infinity()
          : estimand.tau;

  // Point estimates on the original data.
  std::vector<DesignResult> base(plans.size());
  for (std::size_t d = 0; d < plans.size(); ++d) base[d] = run_design(data, plans[d], estimand, t_max);

  struct RepResult {
    bool ok = false;
    std::vector<std::map<Method, std::array<double, 3>>> values;  // per design: mu1, mu0, theta
  };
  std::vector<RepResult> reps(static_cast<std::size_t>(spec.b));

  parallel_for(static_cast<std::size_t>(spec.b), spec.threads, [&](std::size_t r) {
    for (std::uint64_t attempt = 0; attempt < 6; ++attempt) {
      Rng rng = make_rng(spec.seed, 0xb007, r, attempt);
      try {
        CombinedDataset re = resample(data, rng);
        RepResult rep;
        rep.values.resize(plans.size());
        for (std::size_t d = 0; d < plans.size(); ++d) {
          DesignResult res = run_design(re, plans[d], estimand, t_max);
          for (Method m : plans[d].methods)
            rep.values[d][m] = {res.mu1.at(m), res.mu0.at(m), res.theta.at(m)};
        }
        rep.ok = true;
        reps[r] = std::move(rep);
        return;
      } catch (const FitError&) {
        // degenerate resample, redraw
      }
    }
  });

  int failures = 0;
  for (const auto& rep : reps)
    if (!rep.ok) ++failures;
  if (2 * failures >= spec.b)
    throw FitError("bootstrap: " + std::to_string(failures) + " of " + std::to_string(spec.b) +
                   " replicates failed");

  std::map<EstimatorKey, TripleSummary> out;
  for (std::size_t d = 0; d < plans.size(); ++d) {
    for (Method m : plans[d].methods) {
      TripleDraws draws;
      for (const auto& rep : reps) {
        if (!rep.ok) continue;
        const auto& v = rep.values[d].at(m);
        draws.mu1.push_back(v[0]);
        draws.mu0.push_back(v[1]);
        draws.theta.push_back(v[2]);
      }
      TripleSummary s;
      s.mu1 = summarize(base[d].mu1.at(m), draws.mu1, spec.b, failures, spec.ci);
      s.mu0 = summarize(base[d].mu0.at(m), draws.mu0, spec.b, failures, spec.ci);
      s.theta = summarize(base[d].theta.at(m), draws.theta, spec.b, failures, spec.ci);
      out[{static_cast<int>(d), m}] = s;
    }
  }
  return out;
}

BootstrapSummary bootstrap(const CombinedDataset& data, const DesignPlan& plan,
                           const EstimandSpec& estimand, int b, std::uint64_t seed,
                           BootstrapSpec::Ci ci, int threads) {
  BootstrapSpec spec;
  spec.b = b;
  spec.seed = seed;
  spec.ci = ci;
  spec.threads = threads;
  auto all = bootstrap_designs(data, {plan}, estimand, spec);
  return all.at({0, plan.methods.front()}).theta;
}

}  // namespace acw
