#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cfcp/types.hpp"

namespace cfcp {

enum class ScoreFamily { Lac, Aps, Raps, Saps };

std::string family_name(ScoreFamily f);
ScoreFamily family_from_name(const std::string& name);

struct ScoreConfig {
  ScoreFamily family = ScoreFamily::Aps;
  bool randomized = true;     // LAC ignores this
  double raps_lambda = 0.0;   // RAPS only
  int raps_kreg = 1;          // RAPS only, 1-indexed un-penalized rank
  double saps_weight = 0.2;   // SAPS only
  std::uint64_t seed = 0;     // randomization stream
};

void validate_score_config(const ScoreConfig& cfg);

/// Labels sorted by descending probability, exact ties broken by ascending
/// class index. rank[c] is the 0-based position of class c in order.
struct LabelRanking {
  std::vector<int> order;
  std::vector<int> rank;
};
LabelRanking rank_labels(const Vector& q);

// Nonconformity scores. Ranks follow the sorted order of q. APS/RAPS use
// 1-indexed ranks in their prefix-sum and penalty definitions; SAPS uses
// 0-indexed ranks r in {0..C-1}, and its randomized variant discounts the
// top-ranked label's own mass (p1 - u*p1) instead of the rank increment.
// A randomized score is requested by passing u in [0,1]; the same u must be
// shared across all candidate labels of a test point.
double score_lac(const Vector& q, int label);
double score_aps(const Vector& q, int label, std::optional<double> u = std::nullopt);
double score_raps(const Vector& q, int label, std::optional<double> u, double lambda, int kreg);
double score_saps(const Vector& q, int label, std::optional<double> u, double weight);

/// Dispatch on the configured family. Randomized families require u.
double score(const Vector& q, int label, const ScoreConfig& cfg,
             std::optional<double> u = std::nullopt);

inline constexpr double kAllInclusiveThreshold = std::numeric_limits<double>::infinity();

/// k-th smallest calibration score with k = ceil((n+1)(1-alpha)). Returns the
/// all-inclusive sentinel when k exceeds n.
double calibrate_threshold(const std::vector<double>& scores, double alpha);

struct ConformalModel {
  ScoreConfig score;
  double alpha = 0.1;
  double threshold = kAllInclusiveThreshold;
  Index calibration_size = 0;

  bool all_inclusive() const { return std::isinf(threshold); }
};

/// Labels whose score is within the threshold (ascending class ids). Empty
/// results fall back to the top-ranked label.
std::vector<int> build_set(const Vector& q, const ConformalModel& model,
                           std::optional<double> u = std::nullopt);

// Per-row uniform draws: calibration row i uses calibration_stream(seed), test
// row j uses test_stream(seed). Shared across methods so pipelines compared
// under the same seed see identical randomization.
std::uint64_t calibration_stream(std::uint64_t seed);
std::uint64_t test_stream(std::uint64_t seed);

/// Scores of the true labels over calibration rows; randomized families draw
/// u per row from the calibration stream.
std::vector<double> calibration_scores(const Matrix& q_rows, const IntVector& labels,
                                       const ScoreConfig& cfg);

/// Calibrates a ConformalModel from per-row probability vectors.
ConformalModel calibrate(const Matrix& q_rows, const IntVector& labels, const ScoreConfig& cfg,
                         double alpha);

/// Prediction sets over test rows; randomized families draw u per row from
/// the test stream.
std::vector<std::vector<int>> build_sets(const Matrix& q_rows, const ConformalModel& model);

void save_conformal_model(const ConformalModel& model, const std::string& path);
ConformalModel load_conformal_model(const std::string& path);

}  // namespace cfcp
