#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfcp/types.hpp"

namespace cfcp {

/// Per-class empirical coverage. Classes absent from the test set are
/// undefined (NaN coverage, count 0) and are excluded from all aggregates.
struct ClasswiseCoverage {
  Vector coverage;                  // C, NaN when undefined
  std::vector<Index> counts;        // test points per class
  int defined = 0;

  bool is_defined(int c) const { return counts[static_cast<std::size_t>(c)] > 0; }
};

ClasswiseCoverage classwise_coverage(const std::vector<std::vector<int>>& sets,
                                     const IntVector& labels, int class_count);

/// Fraction of defined classes whose coverage meets 1 - alpha (inclusive).
double cov_fraction(const ClasswiseCoverage& classwise, double alpha);

double avg_set_size(const std::vector<std::vector<int>>& sets);

/// Weighted under-coverage: sum_c w_c [(1-alpha) - Cov_c]_+^p with p in {1,2}.
/// Undefined classes must carry weight zero.
double wuc(const ClasswiseCoverage& classwise, const Vector& class_weights, double alpha, int p);

/// Worst classwise deficit max_c [(1-alpha) - Cov_c]_+ over defined classes.
double maxce(const ClasswiseCoverage& classwise, double alpha);

/// Number of defined classes whose coverage falls below 1 - alpha.
int coverage_misses(const ClasswiseCoverage& classwise, double alpha);

struct EvaluationReport {
  ClasswiseCoverage classwise;
  Vector class_weights;   // empirical test prevalence (0 for absent classes)
  Vector class_avg_size;  // mean set size per true class, NaN when absent
  double alpha = 0.1;
  int wuc_p = 1;
  double cov = 0.0;
  double avg_size = 0.0;
  double wuc_value = 0.0;
  double maxce_value = 0.0;
  double marginal_coverage = 0.0;

  // Identity columns for report rows.
  std::string method;
  std::string score_family;
  std::uint64_t seed = 0;
  int repeat = -1;
};

/// Evaluates sets against labels; class weights default to the empirical test
/// prevalence but can be overridden (they must then sum to 1 and give weight
/// zero to absent classes).
EvaluationReport evaluate_sets(const std::vector<std::vector<int>>& sets, const IntVector& labels,
                               int class_count, double alpha, int wuc_p = 1,
                               const std::optional<Vector>& weight_override = std::nullopt);

std::string report_csv_header();
std::string report_csv_row(const EvaluationReport& report);
std::string report_json(const EvaluationReport& report);

}  // namespace cfcp
