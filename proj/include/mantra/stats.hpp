#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mantra {

inline constexpr double kSignificanceLevel = 0.1;

/// 100 * (baseline - ours) / baseline. Negative when ours is worse.
double improvement_pct(double ours, double baseline);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double x, double a, double b);

/// CDF of Student's t with `dof` degrees of freedom (dof may be fractional).
double student_t_cdf(double t, double dof);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  bool significant = false;
  bool degenerate = false;  // both variances zero with equal means; p = 1 by convention
};

/// Two-sided Welch unequal-variance t-test. Each sample needs at least two
/// finite values. Throws ConfigError when both variances are zero and the
/// means differ (no finite statistic).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct ComparisonRow {
  std::string dataset;
  int horizon = 0;
  std::string metric;
  std::vector<double> ours;
  std::vector<double> baseline;
};

struct ComparisonResult {
  ComparisonRow row;
  double ours_mean = 0.0;
  double baseline_mean = 0.0;
  double improvement = 0.0;
  bool tested = false;  // false when either side has fewer than two runs
  WelchResult welch;
};

ComparisonResult compare_row(const ComparisonRow& row);

/// Header: dataset,horizon,metric,ours,baseline,improvement_pct,p_value,significant
/// Untested rows leave p_value and significant empty.
void write_comparison_csv(std::ostream& out, std::span<const ComparisonResult> rows);

}  // namespace mantra
