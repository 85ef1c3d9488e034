#include "acw/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acw/errors.hpp"
#include "acw/rng.hpp"

namespace acw {

namespace {

// Multi-indices of total degree g over p variables: mixed monomials (>= 2
// distinct variables) in lexicographic order first, then pure powers.
void monomials_of_degree(Eigen::Index p, int g, std::vector<std::vector<Eigen::Index>>& out) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(g), 0);
  std::vector<std::vector<Eigen::Index>> mixed;
  std::vector<std::vector<Eigen::Index>> pure;
  // Combinations with repetition i1 <= i2 <= ... <= ig in lexicographic order.
  for (;;) {
    bool is_pure = std::all_of(idx.begin(), idx.end(), [&](Eigen::Index i) { return i == idx[0]; });
    (is_pure ? pure : mixed).push_back(idx);
    int k = g - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == p - 1) --k;
    if (k < 0) break;
    Eigen::Index v = ++idx[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < g; ++j) idx[static_cast<std::size_t>(j)] = v;
  }
  for (auto& m : mixed) out.push_back(std::move(m));
  for (auto& m : pure) out.push_back(std::move(m));
}

std::vector<std::vector<Eigen::Index>> monomial_table(Eigen::Index p, const BasisSpec& spec) {
  std::vector<std::vector<Eigen::Index>> table;
  for (int g = 1; g <= spec.degree; ++g) {
    std::vector<std::vector<Eigen::Index>> level;
    monomials_of_degree(p, g, level);
    for (auto& m : level) {
      if (!spec.include_interactions && g >= 2) {
        bool pure = std::all_of(m.begin(), m.end(), [&](Eigen::Index i) { return i == m[0]; });
        if (!pure) continue;
      }
      table.push_back(std::move(m));
    }
  }
  return table;
}

}  // namespace

Eigen::Index expanded_dim(Eigen::Index p, const BasisSpec& spec) {
  spec.check();
  if (p == 0) return 0;
  return static_cast<Eigen::Index>(monomial_table(p, spec).size());
}

Eigen::VectorXd expand(const Eigen::VectorXd& x, const BasisSpec& spec) {
  spec.check();
  auto table = monomial_table(x.size(), spec);
  Eigen::VectorXd out(static_cast<Eigen::Index>(table.size()));
  for (std::size_t k = 0; k < table.size(); ++k) {
    double v = 1.0;
    for (Eigen::Index i : table[k]) v *= x[i];
    out[static_cast<Eigen::Index>(k)] = v;
  }
  return out;
}

BasisExpander::BasisExpander(const CombinedDataset& data, const BasisSpec& spec) : spec_(spec) {
  spec_.check();
  center_ = Eigen::VectorXd::Zero(data.p);
  scale_ = Eigen::VectorXd::Ones(data.p);
  if (spec_.standardize) {
    auto rct = data.rct_indices();
    if (rct.size() >= 2) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.p);
      for (auto i : rct) mean += data.records[i].x;
      mean /= static_cast<double>(rct.size());
      Eigen::VectorXd ss = Eigen::VectorXd::Zero(data.p);
      for (auto i : rct) ss += (data.records[i].x - mean).cwiseAbs2();
      Eigen::VectorXd sd = (ss / static_cast<double>(rct.size() - 1)).cwiseSqrt();
      center_ = mean;
      for (Eigen::Index j = 0; j < data.p; ++j) scale_[j] = sd[j] > 0 ? sd[j] : 1.0;
    }
  }
  dim_ = expanded_dim(data.p, spec_);
}

Eigen::VectorXd BasisExpander::operator()(const Eigen::VectorXd& x_raw) const {
  if (spec_.standardize && center_.size() == x_raw.size()) {
    Eigen::VectorXd z = (x_raw - center_).cwiseQuotient(scale_);
    return expand(z, spec_);
  }
  return expand(x_raw, spec_);
}

Eigen::MatrixXd BasisExpander::matrix(const CombinedDataset& data,
                                      const std::vector<std::size_t>& rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), dim_);
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = (*this)(data.records[rows[r]].x).transpose();
  return out;
}

double scad_derivative(double lambda_abs, const ScadSpec& spec) {
  spec.check();
  double eps = spec.epsilon;
  if (eps == 0.0) return 0.0;
  if (lambda_abs < eps) return eps;
  double pos = std::max(spec.b * eps - lambda_abs, 0.0);
  return pos / (spec.b - 1.0);
}

double scad_penalty(double lambda_abs, const ScadSpec& spec) {
  spec.check();
  double eps = spec.epsilon;
  if (eps == 0.0) return 0.0;
  double x = lambda_abs;
  if (x <= eps) return eps * x;
  if (x <= spec.b * eps) {
    return eps * eps + (spec.b * eps * (x - eps) - 0.5 * (x * x - eps * eps)) / (spec.b - 1.0);
  }
  return 0.5 * (spec.b + 1.0) * eps * eps;
}

std::vector<double> default_epsilon_grid(double score_scale) {
  std::vector<double> grid(10);
  double lo = std::log(1e-3), hi = std::log(1.0);
  for (int k = 0; k < 10; ++k)
    grid[static_cast<std::size_t>(k)] = std::exp(lo + (hi - lo) * k / 9.0) * std::max(score_scale, 0.0);
  return grid;
}

double select_epsilon(const PenalizedTask& task, const ScadSpec& spec, std::uint64_t seed) {
  spec.check();
  if (spec.epsilon_grid.empty()) throw ValidationError("select_epsilon: empty grid");
  if (spec.cv_folds < 2) throw ValidationError("select_epsilon: cv_folds must be >= 2");
  if (spec.epsilon_grid.size() == 1) return spec.epsilon_grid.front();

  std::size_t n = task.n_units;
  int folds = std::min<int>(spec.cv_folds, static_cast<int>(n));
  if (folds < 2) throw FitError("select_epsilon: not enough units for cross validation");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x6376ULL);  // fold shuffle stream
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[uniform_below(rng, i)]);

  std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < n; ++i)
    fold_members[i % static_cast<std::size_t>(folds)].push_back(order[i]);

  double best_eps = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (double eps : spec.epsilon_grid) {
    double sum = 0.0;
    int valid = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> test = fold_members[static_cast<std::size_t>(f)];
      std::vector<std::size_t> train;
      train.reserve(n - test.size());
      for (int g = 0; g < folds; ++g)
        if (g != f)
          train.insert(train.end(), fold_members[static_cast<std::size_t>(g)].begin(),
                       fold_members[static_cast<std::size_t>(g)].end());
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());
      try {
        sum += task.heldout_score(train, test, eps);
        ++valid;
      } catch (const FitError&) {
        // degenerate fold, skip
      }
    }
    if (valid == 0) continue;
    double mean = sum / valid;
    // >= implements the tie-break toward larger epsilon for an ascending or
    // arbitrary grid ordering.
    if (!any || mean > best_score || (mean == best_score && eps > best_eps)) {
      best_score = mean;
      best_eps = eps;
      any = true;
    }
  }
  if (!any) throw FitError("select_epsilon: all folds degenerate");
  return best_eps;
}

}  // namespace acw
