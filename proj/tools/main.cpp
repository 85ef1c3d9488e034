#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "acw/data_model.hpp"
#include "acw/errors.hpp"
#include "acw/estimators.hpp"
#include "acw/inference.hpp"
#include "acw/parallel.hpp"
#include "acw/simulation.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using acw::FitError;
using acw::IoError;
using acw::Method;
using acw::ValidationError;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

// Flat key = value files; [section] headers and # comments are skipped.
std::map<std::string, std::string> load_config(const std::string& path) {
  std::map<std::string, std::string> cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line without '=': " + t);
    cfg[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

std::string cfg_str(const std::map<std::string, std::string>& cfg, const std::string& key,
                    const std::string& fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

double cfg_num(const std::map<std::string, std::string>& cfg, const std::string& key,
               double fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": not a number: " + it->second);
  }
}

bool cfg_bool(const std::map<std::string, std::string>& cfg, const std::string& key,
              bool fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ValidationError("config key " + key + ": expected true/false");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct EstimatorToken {
  Method method;
  bool sieve;
};

std::vector<EstimatorToken> parse_estimators(const std::string& list) {
  const std::string allowed =
      "naive, or, ipsw, cw, acw1, acw2, acw1s, acw2s (s = penalized sieve design)";
  std::vector<EstimatorToken> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    std::string name = cur;
    bool sieve = false;
    if (name.size() > 3 && name.substr(name.size() - 3) == "(s)") {
      sieve = true;
      name = name.substr(0, name.size() - 3);
    } else if (name.size() > 1 && name.back() == 's' && name != "ipsw") {
      sieve = true;
      name.pop_back();
    }
    auto m = acw::parse_method(name);
    if (!m) throw ValidationError("unknown estimator '" + cur + "'; allowed: " + allowed);
    out.push_back({*m, sieve});
    cur.clear();
  };
  for (char c : list) {
    if (c == ',' || c == ' ') {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  if (out.empty()) throw ValidationError("empty estimator list; allowed: " + allowed);
  return out;
}

std::ofstream open_output(const std::string& dir, const std::string& name,
                          const std::string& header_comment) {
  std::filesystem::path p = dir.empty() ? std::filesystem::path(name)
                                        : std::filesystem::path(dir) / name;
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << header_comment << "\n";
  return out;
}

struct CommonOpts {
  std::string out_dir;
  std::uint64_t seed = 1;
  int threads = acw::default_threads();
};

struct EstimateOpts {
  std::string input;
  std::string estimators = "acw2";
  std::string estimand = "rmstdiff";
  double tau = 20.0;
  int basis_degree = 1;
  bool basis_interactions = true;
  bool standardize = true;
  double penalty_epsilon = -1.0;  // < 0: cross-validated for sieve designs
  int cv_folds = 5;
  std::string weighting = "calibration";
  int bootstrap_b = 0;
  std::string ci = "normal";
};

// Builds the design plans implied by the estimator list: one plain design
// and, for the (s)-suffixed estimators, one SCAD-penalized sieve design.
std::vector<acw::DesignPlan> build_plans(const acw::CombinedDataset& data,
                                         const std::vector<EstimatorToken>& tokens,
                                         const EstimateOpts& opt, std::uint64_t seed) {
  std::vector<Method> plain, sieve;
  for (const auto& t : tokens) (t.sieve ? sieve : plain).push_back(t.method);
  if (opt.weighting != "calibration" && opt.weighting != "ipsw")
    throw ValidationError("weighting must be calibration or ipsw");
  auto acw_family = [](const std::vector<Method>& ms) {
    return std::any_of(ms.begin(), ms.end(), [](Method m) {
      return m == Method::Cw || m == Method::Acw1 || m == Method::Acw2;
    });
  };
  auto needs_cal = [&](const std::vector<Method>& ms) {
    return acw_family(ms) && opt.weighting == "calibration";
  };
  auto needs_ipsw = [&](const std::vector<Method>& ms) {
    if (std::find(ms.begin(), ms.end(), Method::Ipsw) != ms.end()) return true;
    return acw_family(ms) && opt.weighting == "ipsw";
  };

  auto fixed_penalties = [&]() {
    acw::ScadSpec s;
    s.epsilon = opt.penalty_epsilon;
    s.cv_folds = opt.cv_folds;
    acw::PenaltySet pens;
    pens.outcome1 = pens.outcome0 = pens.censoring1 = pens.censoring0 = s;
    pens.calibration = pens.propensity = pens.ipsw = s;
    return pens;
  };

  std::vector<acw::DesignPlan> plans;
  if (!plain.empty()) {
    acw::DesignPlan plan;
    plan.label = "";
    plan.methods = plain;
    plan.basis = acw::BasisSpec{opt.basis_degree, opt.basis_interactions, opt.standardize};
    plan.want_calibration = needs_cal(plain);
    plan.want_ipsw = needs_ipsw(plain);
    if (opt.penalty_epsilon >= 0.0) plan.penalties = fixed_penalties();
    plans.push_back(std::move(plan));
  }
  if (!sieve.empty()) {
    acw::DesignPlan plan;
    plan.label = "(s)";
    plan.methods = sieve;
    plan.basis = acw::BasisSpec{std::max(2, opt.basis_degree), true, opt.standardize};
    plan.want_calibration = needs_cal(sieve);
    plan.want_ipsw = needs_ipsw(sieve);
    if (opt.penalty_epsilon >= 0.0) {
      plan.penalties = fixed_penalties();
    } else {
      acw::ScadSpec base;
      base.cv_folds = opt.cv_folds;
      acw::BasisExpander expander(data, plan.basis);
      plan.penalties = acw::select_penalties(data, expander, base, plan.want_calibration,
                                             plan.want_ipsw, acw::derive_seed(seed, 0xcf0ULL));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

int cmd_estimate(const CommonOpts& common, const EstimateOpts& opt, bool require_bootstrap) {
  if (opt.input.empty()) throw ValidationError("--input is required");
  if (require_bootstrap && opt.bootstrap_b < 2)
    throw ValidationError("bootstrap subcommand requires --bootstrap >= 2");
  if (opt.ci != "normal" && opt.ci != "percentile")
    throw ValidationError("--ci must be normal or percentile");
  acw::CombinedDataset data = acw::ingest_csv(opt.input);
  if (data.n == 0) throw ValidationError("no RCT rows in " + opt.input);
  data.require_fittable();

  auto tokens = parse_estimators(opt.estimators);
  auto kind = acw::parse_estimand(opt.estimand);
  if (!kind)
    throw ValidationError("unknown estimand '" + opt.estimand +
                          "'; allowed: survdiff, rmstdiff, rmtlratio, quantilediff");
  acw::EstimandSpec estimand{*kind, opt.tau};
  if (estimand.kind == acw::EstimandSpec::Kind::QuantileDiff &&
      (opt.tau <= 0.0 || opt.tau >= 1.0))
    throw ValidationError("quantilediff needs a level in (0,1) via --tau");

  std::vector<acw::DesignPlan> plans = build_plans(data, tokens, opt, common.seed);

  std::string config_echo = "estimate input=" + opt.input + " estimators=" + opt.estimators +
                            " estimand=" + opt.estimand + " tau=" + fmt(opt.tau) +
                            " basis_degree=" + std::to_string(opt.basis_degree) +
                            " weighting=" + opt.weighting +
                            " penalty_epsilon=" + fmt(opt.penalty_epsilon) +
                            " bootstrap=" + std::to_string(opt.bootstrap_b) + " ci=" + opt.ci;
  char header[256];
  std::snprintf(header, sizeof(header), "# acwsurv %s seed=%llu config=%016llx", kVersion,
                static_cast<unsigned long long>(common.seed),
                static_cast<unsigned long long>(fnv1a(config_echo)));

  // Full curves for export; the estimand only needs [0, tau].
  std::vector<acw::DesignResult> results(plans.size());
  for (std::size_t d = 0; d < plans.size(); ++d)
    results[d] = acw::run_design(data, plans[d], estimand);
  std::map<acw::EstimatorKey, acw::TripleSummary> boot;
  if (opt.bootstrap_b >= 2) {
    acw::BootstrapSpec bspec;
    bspec.b = opt.bootstrap_b;
    bspec.seed = common.seed;
    bspec.ci = opt.ci == "percentile" ? acw::BootstrapSpec::Ci::Percentile
                                      : acw::BootstrapSpec::Ci::Normal;
    bspec.threads = common.threads;
    boot = acw::bootstrap_designs(data, plans, estimand, bspec);
  }

  std::ofstream curves = open_output(common.out_dir, "curves.csv", header);
  curves << "method,arm,t,value\n";
  for (std::size_t d = 0; d < plans.size(); ++d) {
    for (Method m : plans[d].methods) {
      std::string label = acw::method_name(m) + plans[d].label;
      for (int arm = 1; arm >= 0; --arm) {
        const acw::CurveEstimate& est =
            arm ? results[d].curves.at(m).first : results[d].curves.at(m).second;
        curves << label << ',' << arm << ",0," << fmt(est.curve.value_at_zero) << '\n';
        for (std::size_t k = 0; k < est.curve.times.size(); ++k)
          curves << label << ',' << arm << ',' << fmt(est.curve.times[k]) << ','
                 << fmt(est.curve.values[k]) << '\n';
      }
    }
  }

  std::ofstream estimates = open_output(common.out_dir, "estimates.csv", header);
  estimates << "method,estimand,tau,point,se,ci_low,ci_high\n";
  for (std::size_t d = 0; d < plans.size(); ++d) {
    for (Method m : plans[d].methods) {
      std::string label = acw::method_name(m) + plans[d].label;
      estimates << label << ',' << opt.estimand << ',' << fmt(opt.tau) << ','
                << fmt(results[d].theta.at(m));
      if (opt.bootstrap_b >= 2) {
        const auto& s = boot.at({static_cast<int>(d), m}).theta;
        estimates << ',' << fmt(s.se) << ',' << fmt(s.ci_low) << ',' << fmt(s.ci_high);
      } else {
        estimates << ",,,";
      }
      estimates << '\n';
    }
  }
  return 0;
}

struct SimulateOpts {
  int scenario = 1;
  int reps = 200;
  int bootstrap_b = 50;
  std::string estimators = "naive,ipsw,cw,or,acw1,acw2,acw1s,acw2s";
  std::string ci = "normal";
  double tau = 20.0;
  std::size_t pop_size = 200000, rct_pool = 50000, os_pool = 150000, os_sample = 5000;
  bool write_replicates = false;
};

int cmd_simulate(const CommonOpts& common, const SimulateOpts& opt) {
  if (opt.reps < 2) throw ValidationError("--reps must be >= 2");
  acw::ScenarioSpec sc = acw::scenario(opt.scenario);
  sc.tau = opt.tau;
  sc.pop_size = opt.pop_size;
  sc.rct_pool = opt.rct_pool;
  sc.os_pool = opt.os_pool;
  sc.os_sample = opt.os_sample;

  acw::McOptions mc;
  mc.reps = opt.reps;
  mc.bootstrap_b = opt.bootstrap_b;
  mc.seed = common.seed;
  mc.threads = common.threads;
  mc.keep_replicate_log = opt.write_replicates;
  if (opt.ci == "percentile")
    mc.ci = acw::BootstrapSpec::Ci::Percentile;
  else if (opt.ci != "normal")
    throw ValidationError("--ci must be normal or percentile");
  for (const auto& t : parse_estimators(opt.estimators))
    mc.estimators.push_back({t.method, t.sieve});

  acw::McReport report = acw::run_mc_study(sc, mc);

  std::string config_echo = "simulate scenario=" + std::to_string(opt.scenario) +
                            " reps=" + std::to_string(opt.reps) +
                            " bootstrap=" + std::to_string(opt.bootstrap_b) +
                            " estimators=" + opt.estimators + " tau=" + fmt(opt.tau) +
                            " sizes=" + std::to_string(opt.pop_size) + "/" +
                            std::to_string(opt.rct_pool) + "/" + std::to_string(opt.os_pool) +
                            "/" + std::to_string(opt.os_sample) + " ci=" + opt.ci;
  char header[256];
  std::snprintf(header, sizeof(header), "# acwsurv %s seed=%llu config=%016llx", kVersion,
                static_cast<unsigned long long>(common.seed),
                static_cast<unsigned long long>(fnv1a(config_echo)));

  std::ofstream out = open_output(common.out_dir, "mc_report.csv", header);
  out << "# scenario=" << report.scenario_id << " reps=" << report.reps
      << " bootstrap_b=" << report.bootstrap_b << " failed=" << report.failed_replicates
      << " truth_mu1=" << fmt(report.truth.mu1) << " truth_mu0=" << fmt(report.truth.mu0)
      << " truth_theta=" << fmt(report.truth.theta) << " truth_seed=" << report.truth.seed
      << "\n";
  out << "estimator,bias_mu1,bias_mu0,bias_theta,ese_mu1,ese_mu0,ese_theta,"
         "rse_mu1,rse_mu0,rse_theta,cp_mu1,cp_mu0,cp_theta\n";
  for (const auto& row : report.rows) {
    out << row.estimator << ',' << fmt(row.mu1.bias) << ',' << fmt(row.mu0.bias) << ','
        << fmt(row.theta.bias) << ',' << fmt(row.mu1.ese) << ',' << fmt(row.mu0.ese) << ','
        << fmt(row.theta.ese) << ',' << fmt(row.mu1.rse_percent) << ','
        << fmt(row.mu0.rse_percent) << ',' << fmt(row.theta.rse_percent) << ','
        << fmt(row.mu1.cp_percent) << ',' << fmt(row.mu0.cp_percent) << ','
        << fmt(row.theta.cp_percent) << '\n';
  }

  if (opt.write_replicates) {
    std::ofstream reps_out = open_output(common.out_dir, "replicates.csv", header);
    reps_out << "estimator,replicate,theta\n";
    for (const auto& [label, draws] : report.replicate_log)
      for (std::size_t r = 0; r < draws.size(); ++r)
        reps_out << label << ',' << r << ',' << fmt(draws[r]) << '\n';
  }
  return 0;
}

struct TruthOpts {
  int scenario = 1;
  double tau = 20.0;
  std::size_t n_mc = 1000000;
};

int cmd_truth(const CommonOpts& common, const TruthOpts& opt) {
  acw::ScenarioSpec sc = acw::scenario(opt.scenario);
  acw::TruthSpec truth = acw::make_truth(sc.outcome_correct, sc.weights_correct);
  acw::TrueValues v = acw::true_ate(truth, opt.tau, opt.n_mc, common.seed);
  std::printf("scenario=%d tau=%s n_mc=%zu seed=%llu\n", opt.scenario, fmt(opt.tau).c_str(),
              opt.n_mc, static_cast<unsigned long long>(common.seed));
  std::printf("mu1=%s mu0=%s theta=%s mc_se=%s\n", fmt(v.mu1).c_str(), fmt(v.mu0).c_str(),
              fmt(v.theta).c_str(), fmt(v.mc_se).c_str());
  return 0;
}

std::string prescan_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  try {
    auto cfg = load_config(prescan_config(argc, argv));

    CLI::App app{"Survival treatment-effect generalization from an RCT to a target population"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOpts common;
    common.seed = static_cast<std::uint64_t>(cfg_num(cfg, "seed", 1));
    common.threads = static_cast<int>(cfg_num(cfg, "threads", acw::default_threads()));
    common.out_dir = cfg_str(cfg, "out_dir", "");
    std::string config_path;

    EstimateOpts est;
    est.input = cfg_str(cfg, "input", "");
    est.estimators = cfg_str(cfg, "estimators", est.estimators);
    est.estimand = cfg_str(cfg, "estimand", est.estimand);
    est.tau = cfg_num(cfg, "tau", est.tau);
    est.basis_degree = static_cast<int>(cfg_num(cfg, "basis_degree", est.basis_degree));
    est.basis_interactions = cfg_bool(cfg, "basis_interactions", est.basis_interactions);
    est.standardize = cfg_bool(cfg, "standardize", est.standardize);
    est.penalty_epsilon = cfg_num(cfg, "penalty_epsilon", est.penalty_epsilon);
    est.cv_folds = static_cast<int>(cfg_num(cfg, "cv_folds", est.cv_folds));
    est.weighting = cfg_str(cfg, "weighting", est.weighting);
    est.bootstrap_b = static_cast<int>(cfg_num(cfg, "bootstrap", est.bootstrap_b));
    est.ci = cfg_str(cfg, "ci", est.ci);

    SimulateOpts sim;
    sim.scenario = static_cast<int>(cfg_num(cfg, "scenario", sim.scenario));
    sim.reps = static_cast<int>(cfg_num(cfg, "reps", sim.reps));
    sim.bootstrap_b = static_cast<int>(cfg_num(cfg, "bootstrap", sim.bootstrap_b));
    sim.estimators = cfg_str(cfg, "estimators", sim.estimators);
    sim.ci = cfg_str(cfg, "ci", sim.ci);
    sim.tau = cfg_num(cfg, "tau", sim.tau);
    sim.pop_size = static_cast<std::size_t>(cfg_num(cfg, "pop_size", sim.pop_size));
    sim.rct_pool = static_cast<std::size_t>(cfg_num(cfg, "rct_pool", sim.rct_pool));
    sim.os_pool = static_cast<std::size_t>(cfg_num(cfg, "os_pool", sim.os_pool));
    sim.os_sample = static_cast<std::size_t>(cfg_num(cfg, "os_sample", sim.os_sample));
    sim.write_replicates = cfg_bool(cfg, "write_replicates", sim.write_replicates);

    TruthOpts tru;
    tru.scenario = sim.scenario;
    tru.tau = cfg_num(cfg, "tau", tru.tau);
    tru.n_mc = static_cast<std::size_t>(cfg_num(cfg, "n_mc", tru.n_mc));

    auto add_common = [&](CLI::App* sub) {
      sub->add_option("--config", config_path, "flat key = value config file");
      sub->add_option("--out-dir", common.out_dir, "output directory");
      sub->add_option("--seed", common.seed, "master RNG seed");
      sub->add_option("--threads", common.threads, "parallel workers");
    };

    CLI::App* estimate = app.add_subcommand("estimate", "estimate curves and treatment effects");
    CLI::App* boot = app.add_subcommand("bootstrap", "estimate with bootstrap inference");
    for (CLI::App* sub : {estimate, boot}) {
      add_common(sub);
      sub->add_option("--input", est.input, "combined-sample CSV");
      sub->add_option("--estimators", est.estimators, "comma list, e.g. or,cw,acw2,acw2s");
      sub->add_option("--estimand", est.estimand, "survdiff|rmstdiff|rmtlratio|quantilediff");
      sub->add_option("--tau", est.tau, "horizon (or quantile level)");
      sub->add_option("--basis-degree", est.basis_degree, "power-series degree of g(X)");
      sub->add_option("--penalty-epsilon", est.penalty_epsilon, "fixed SCAD epsilon (>= 0)");
      sub->add_option("--penalty-cv", est.cv_folds, "CV folds for epsilon selection");
      sub->add_option("--weighting", est.weighting, "calibration|ipsw");
      sub->add_option("--bootstrap", est.bootstrap_b, "bootstrap replicates B");
      sub->add_option("--ci", est.ci, "normal|percentile");
    }

    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study");
    add_common(simulate);
    simulate->add_option("--scenario", sim.scenario, "1..4");
    simulate->add_option("--reps", sim.reps, "Monte Carlo replicates");
    simulate->add_option("--bootstrap", sim.bootstrap_b, "bootstrap B per replicate");
    simulate->add_option("--estimators", sim.estimators, "comma list, s suffix = sieve");
    simulate->add_option("--ci", sim.ci, "normal|percentile");
    simulate->add_option("--tau", sim.tau, "RMST horizon");
    simulate->add_option("--pop-size", sim.pop_size, "target population size");
    simulate->add_option("--rct-pool", sim.rct_pool, "RCT-eligible pool size");
    simulate->add_option("--os-pool", sim.os_pool, "OS pool size");
    simulate->add_option("--os-sample", sim.os_sample, "OS sample size m");
    simulate->add_flag("--write-replicates", sim.write_replicates, "emit replicates.csv");

    CLI::App* truth = app.add_subcommand("truth", "Monte Carlo oracle for the true effect");
    add_common(truth);
    truth->add_option("--scenario", tru.scenario, "1..4 (selects the outcome hazards)");
    truth->add_option("--tau", tru.tau, "RMST horizon");
    truth->add_option("--n-mc", tru.n_mc, "oracle sample size");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
      std::cerr << e.what() << "\n";
      return 1;
    }

    if (estimate->parsed()) return cmd_estimate(common, est, false);
    if (boot->parsed()) return cmd_estimate(common, est, true);
    if (simulate->parsed()) return cmd_simulate(common, sim);
    if (truth->parsed()) return cmd_truth(common, tru);
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}
