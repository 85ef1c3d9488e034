#include <doctest.h>

#include <cmath>

#include "acw/basis.hpp"
#include "acw/rng.hpp"
#include "acw/weighting.hpp"

using namespace acw;

namespace {
Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}
}  // namespace

TEST_CASE("degree-1 expansion reproduces the raw covariates") {
  BasisSpec spec{1, true, false};
  Eigen::VectorXd out = expand(vec3(1, 2, 3), spec);
  REQUIRE(out.size() == 3);
  CHECK(out.isApprox(vec3(1, 2, 3)));
}

TEST_CASE("degree-2 expansion follows the linear/interaction/square order") {
  BasisSpec spec{2, true, false};
  Eigen::VectorXd out = expand(vec3(1, 2, 3), spec);
  REQUIRE(out.size() == 9);
  Eigen::VectorXd expected(9);
  expected << 1, 2, 3, 2, 3, 6, 1, 4, 9;
  CHECK(out.isApprox(expected));
  CHECK(expand(vec3(0, 0, 0), spec).isZero());

  BasisSpec no_inter{2, false, false};
  Eigen::VectorXd pure = expand(vec3(1, 2, 3), no_inter);
  REQUIRE(pure.size() == 6);
  Eigen::VectorXd expected_pure(6);
  expected_pure << 1, 2, 3, 1, 4, 9;
  CHECK(pure.isApprox(expected_pure));
}

TEST_CASE("expansion is permutation-equivariant in the linear block") {
  BasisSpec spec{2, true, false};
  Rng rng = make_rng(7);
  Eigen::VectorXd x(4);
  for (int j = 0; j < 4; ++j) x[j] = normal(rng);
  Eigen::VectorXd perm(4);
  perm << x[2], x[0], x[3], x[1];
  Eigen::VectorXd e1 = expand(x, spec);
  Eigen::VectorXd e2 = expand(perm, spec);
  CHECK(e2[0] == e1[2]);
  CHECK(e2[1] == e1[0]);
  CHECK(e2[2] == e1[3]);
  CHECK(e2[3] == e1[1]);
}

TEST_CASE("scad derivative matches the displayed formula") {
  ScadSpec spec;
  spec.epsilon = 0.4;
  CHECK(scad_derivative(0.5 * spec.epsilon, spec) == doctest::Approx(spec.epsilon));
  CHECK(scad_derivative(3.7 * spec.epsilon, spec) == doctest::Approx(0.0));
  CHECK(scad_derivative(2.0 * spec.epsilon, spec) ==
        doctest::Approx(spec.epsilon * (3.7 - 2.0) / (3.7 - 1.0)));
  CHECK(scad_derivative(2.0 * spec.epsilon, spec) == doctest::Approx(0.62963 * spec.epsilon).epsilon(1e-4));
}

TEST_CASE("scad derivative is continuous, flat at eps, zero beyond b eps") {
  ScadSpec spec;
  spec.epsilon = 0.7;
  for (double x = 0.0; x <= spec.epsilon; x += 0.05)
    CHECK(scad_derivative(x, spec) == doctest::Approx(spec.epsilon));
  for (double x = spec.b * spec.epsilon; x < spec.b * spec.epsilon + 2; x += 0.1)
    CHECK(scad_derivative(x, spec) == doctest::Approx(0.0));
  for (double x = 0.01; x < 4; x += 0.01) {
    double lhs = scad_derivative(x - 0.005, spec);
    double rhs = scad_derivative(x + 0.005, spec);
    CHECK(std::abs(lhs - rhs) < 0.02);
  }
  ScadSpec off;
  off.epsilon = 0.0;
  CHECK(scad_derivative(1.0, off) == 0.0);
}

TEST_CASE("scad penalty is the antiderivative of its derivative") {
  ScadSpec spec;
  spec.epsilon = 0.3;
  double acc = 0.0;
  double prev = 0.0;
  const double h = 1e-4;
  for (double x = h; x < 2.0; x += h) {
    acc += 0.5 * (scad_derivative(prev, spec) + scad_derivative(x, spec)) * h;
    prev = x;
    if (std::fmod(x, 0.25) < h) CHECK(scad_penalty(x, spec) == doctest::Approx(acc).epsilon(1e-4));
  }
  CHECK(scad_penalty(10.0, spec) == doctest::Approx(0.5 * (spec.b + 1.0) * spec.epsilon * spec.epsilon));
}

TEST_CASE("standardized expansion equals expansion of pre-standardized input") {
  Rng rng = make_rng(11);
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 40; ++i) {
    SubjectRecord r;
    r.id = std::to_string(i);
    r.x = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return 2.0 * normal(rng) + 1.0; });
    if (i < 30) {
      r.source = Source::Rct;
      r.u = uniform01(rng);
      r.event = true;
      r.a = i % 2 == 0;
    } else {
      r.source = Source::Os;
      r.design_weight = 1.0;
    }
    recs.push_back(std::move(r));
  }
  CombinedDataset data(recs);
  BasisSpec spec{2, true, true};
  BasisExpander expander(data, spec);

  auto rct = data.rct_indices();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (auto i : rct) mean += data.records[i].x;
  mean /= static_cast<double>(rct.size());
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(3);
  for (auto i : rct) ss += (data.records[i].x - mean).cwiseAbs2();
  Eigen::VectorXd sd = (ss / static_cast<double>(rct.size() - 1)).cwiseSqrt();

  BasisSpec plain{2, true, false};
  for (auto i : {std::size_t(0), std::size_t(7), std::size_t(35)}) {
    Eigen::VectorXd z = (data.records[i].x - mean).cwiseQuotient(sd);
    Eigen::VectorXd a = expander(data.records[i].x);
    Eigen::VectorXd b = expand(z, plain);
    CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("select_epsilon: singleton grid, tie-break, and dense-model choice") {
  ScadSpec spec;
  spec.cv_folds = 3;

  PenalizedTask constant_task;
  constant_task.n_units = 12;
  constant_task.heldout_score = [](const std::vector<std::size_t>&,
                                   const std::vector<std::size_t>&, double) { return 1.0; };
  ScadSpec singleton = spec;
  singleton.epsilon_grid = {0.0};
  CHECK(select_epsilon(constant_task, singleton, 1) == 0.0);

  ScadSpec tie = spec;
  tie.epsilon_grid = {0.01, 0.02};
  CHECK(select_epsilon(constant_task, tie, 1) == 0.02);

  // Dense logistic model: the unpenalized fit must win over a crushing
  // penalty; verified against direct fold evaluation.
  Rng rng = make_rng(99);
  const int n = 120;
  Eigen::MatrixXd design(n, 2);
  std::vector<char> labels(n);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = normal(rng);
    design(i, 1) = normal(rng);
    double eta = 1.5 * design(i, 0) - 2.0 * design(i, 1);
    labels[static_cast<std::size_t>(i)] = uniform01(rng) < 1.0 / (1.0 + std::exp(-eta));
  }
  ScadSpec dense = spec;
  dense.cv_folds = 4;
  dense.epsilon_grid = {0.0, 1e6};
  PenalizedTask task = make_logistic_cv_task(design, labels, true, dense);
  CHECK(select_epsilon(task, dense, 5) == 0.0);

  // Direct fold evaluation confirms the ranking on one split.
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
    (i % 4 == 0 ? test : train).push_back(i);
  CHECK(task.heldout_score(train, test, 0.0) > task.heldout_score(train, test, 1e6));
}

TEST_CASE("select_epsilon errors when every fold is degenerate") {
  ScadSpec spec;
  spec.cv_folds = 3;
  spec.epsilon_grid = {0.0, 0.1};
  PenalizedTask task;
  task.n_units = 9;
  task.heldout_score = [](const std::vector<std::size_t>&, const std::vector<std::size_t>&,
                          double) -> double { throw FitError("no events in fold"); };
  CHECK_THROWS_AS(select_epsilon(task, spec, 1), FitError);
}

TEST_CASE("default epsilon grid spans three decades of the score scale") {
  auto grid = default_epsilon_grid(50.0);
  REQUIRE(grid.size() == 10);
  CHECK(grid.front() == doctest::Approx(0.05));
  CHECK(grid.back() == doctest::Approx(50.0));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}
