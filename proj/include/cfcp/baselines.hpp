#pragma once

#include <string>
#include <vector>

#include "cfcp/conformal.hpp"
#include "cfcp/types.hpp"

namespace cfcp {

/// Classwise (Mondrian/ICP) calibration: one threshold per class, with the
/// all-inclusive sentinel for classes whose calibration count is too small.
struct MondrianModel {
  ScoreConfig score;
  double alpha = 0.1;
  std::vector<double> thresholds;   // per class, may be the sentinel
  std::vector<Index> class_counts;  // calibration points per class
};

MondrianModel mondrian_calibrate(const std::vector<double>& cal_scores, const IntVector& cal_labels,
                                 int class_count, const ScoreConfig& cfg, double alpha);

/// Mondrian calibration straight from probability rows (scores drawn from the
/// shared calibration stream, identical to the Split/CFCP paths).
MondrianModel mondrian_calibrate_rows(const Matrix& q_rows, const IntVector& labels,
                                      int class_count, const ScoreConfig& cfg, double alpha);

/// {c : score(q, c, u) <= threshold_c} with a top-1 fallback.
std::vector<int> mondrian_build_set(const Vector& q, const MondrianModel& model,
                                    std::optional<double> u = std::nullopt);

std::vector<std::vector<int>> mondrian_build_sets(const Matrix& q_rows, const MondrianModel& model);

void save_mondrian_model(const MondrianModel& model, const std::string& path);
MondrianModel load_mondrian_model(const std::string& path);

/// Split conformal baseline: the CFCP thresholding pipeline applied to the
/// base-model probability rows directly.
struct SplitResult {
  ConformalModel model;
  std::vector<std::vector<int>> sets;
};

SplitResult split_baseline(const Matrix& cal_probs, const IntVector& cal_labels,
                           const Matrix& test_probs, const ScoreConfig& cfg, double alpha);

}  // namespace cfcp
