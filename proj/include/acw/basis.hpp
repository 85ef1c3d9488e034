#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "acw/data_model.hpp"

namespace acw {

/// Power-series design g(X): linear terms, then (optionally) pairwise
/// interactions in lexicographic index order, then pure powers, per degree
/// level. standardize centers/scales raw coordinates by RCT-sample moments
/// before expansion.
struct BasisSpec {
  int degree = 1;
  bool include_interactions = true;
  bool standardize = false;

  void check() const {
    if (degree < 1) throw ValidationError("basis degree must be >= 1");
  }
};

/// SCAD penalty configuration. epsilon = 0 means unpenalized.
struct ScadSpec {
  double b = 3.7;
  double epsilon = 0.0;
  int cv_folds = 5;
  std::vector<double> epsilon_grid;

  void check() const {
    if (!(b > 2.0)) throw ValidationError("SCAD b must exceed 2");
    if (epsilon < 0) throw ValidationError("SCAD epsilon must be nonnegative");
  }
};

/// Plain (unstandardized) expansion of one covariate vector.
Eigen::VectorXd expand(const Eigen::VectorXd& x, const BasisSpec& spec);

Eigen::Index expanded_dim(Eigen::Index p, const BasisSpec& spec);

/// Expansion bound to the RCT standardization moments of one dataset, so a
/// single map g(.) applies to RCT and OS rows alike.
class BasisExpander {
 public:
  BasisExpander() = default;
  BasisExpander(const CombinedDataset& data, const BasisSpec& spec);

  Eigen::VectorXd operator()(const Eigen::VectorXd& x_raw) const;
  /// One expanded row per record index in `rows`.
  Eigen::MatrixXd matrix(const CombinedDataset& data, const std::vector<std::size_t>& rows) const;

  Eigen::Index dim() const { return dim_; }
  const BasisSpec& spec() const { return spec_; }

 private:
  BasisSpec spec_;
  Eigen::VectorXd center_, scale_;
  Eigen::Index dim_ = 0;
};

/// SCAD derivative q_eps(|lambda|).
double scad_derivative(double lambda_abs, const ScadSpec& spec);

/// SCAD penalty p_eps(|lambda|), the antiderivative of scad_derivative.
double scad_penalty(double lambda_abs, const ScadSpec& spec);

/// Ten log-spaced grid points on [1e-3, 1] * score_scale.
std::vector<double> default_epsilon_grid(double score_scale);

/// A cross-validatable penalized fitting problem: score a held-out fold for
/// a candidate epsilon, higher is better. Throws FitError on a degenerate
/// fold (e.g. no events).
struct PenalizedTask {
  std::size_t n_units = 0;
  std::function<double(const std::vector<std::size_t>& train,
                       const std::vector<std::size_t>& test, double epsilon)>
      heldout_score;
};

/// Grid member maximizing the mean held-out criterion; ties break toward the
/// larger (sparser) epsilon. Folds are shuffled deterministically from seed.
double select_epsilon(const PenalizedTask& task, const ScadSpec& spec, std::uint64_t seed);

}  // namespace acw
