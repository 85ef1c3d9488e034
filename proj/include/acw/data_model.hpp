#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "acw/errors.hpp"

namespace acw {

enum class Source { Rct, Os };

/// One subject of the combined sample. RCT rows carry follow-up time u,
/// event indicator and treatment; OS rows carry only covariates and a
/// positive design weight.
struct SubjectRecord {
  std::string id;
  Source source = Source::Rct;
  Eigen::VectorXd x;
  std::optional<double> u;
  std::optional<bool> event;
  std::optional<bool> a;
  std::optional<double> design_weight;

  void validate(std::size_t row_index) const;
};

struct CombinedDataset {
  std::vector<SubjectRecord> records;
  std::size_t n = 0;  // RCT rows
  std::size_t m = 0;  // OS rows
  Eigen::Index p = 0;

  CombinedDataset() = default;
  explicit CombinedDataset(std::vector<SubjectRecord> recs);

  bool empty() const { return records.empty(); }

  std::vector<std::size_t> rct_indices() const;
  std::vector<std::size_t> os_indices() const;

  /// Throws FitError unless every treatment arm has >= 2 RCT subjects and
  /// at least one observed event.
  void require_fittable() const;
};

/// RCT rows with treatment == a plus all OS rows, order preserved.
CombinedDataset arm_subset(const CombinedDataset& data, bool a);

/// Right-continuous piecewise-constant curve: value_at_zero on [0, times[0]),
/// values[j] on [times[j], times[j+1]).
struct StepSurvival {
  std::vector<double> times;   // strictly increasing, nonnegative
  std::vector<double> values;  // one per time
  double value_at_zero = 1.0;

  double at(double t) const;
  /// Value just before t: sup limit from the left.
  double at_left(double t) const;
  /// Exact integral over [0, tau].
  double integral(double tau) const;
  void check() const;
};

/// Maps CSV header names onto the dataset schema. Covariates are the
/// consecutive columns `<x_prefix>1 ... <x_prefix>p`.
struct ColumnMap {
  std::string id = "id";
  std::string source = "source";
  std::string u = "u";
  std::string event = "event";
  std::string a = "a";
  std::string design_weight = "design_weight";
  std::string x_prefix = "x";
};

CombinedDataset ingest_csv(const std::string& path, const ColumnMap& schema = {});
void write_csv(const CombinedDataset& data, const std::string& path,
               const ColumnMap& schema = {});

}  // namespace acw
