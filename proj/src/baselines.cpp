#include "cfcp/baselines.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "cfcp/rng.hpp"

namespace cfcp {

MondrianModel mondrian_calibrate(const std::vector<double>& cal_scores, const IntVector& cal_labels,
                                 int class_count, const ScoreConfig& cfg, double alpha) {
  if (cal_scores.size() != static_cast<std::size_t>(cal_labels.size())) {
    throw DataError("calibration scores and labels disagree in length");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  MondrianModel model;
  model.score = cfg;
  model.alpha = alpha;
  model.thresholds.assign(static_cast<std::size_t>(class_count), kAllInclusiveThreshold);
  model.class_counts.assign(static_cast<std::size_t>(class_count), 0);

  std::vector<std::vector<double>> per_class(static_cast<std::size_t>(class_count));
  for (Index i = 0; i < cal_labels.size(); ++i) {
    const int c = cal_labels[i];
    if (c < 0 || c >= class_count) {
      throw DataError("calibration label out of range at row " + std::to_string(i));
    }
    per_class[static_cast<std::size_t>(c)].push_back(cal_scores[static_cast<std::size_t>(i)]);
  }
  for (int c = 0; c < class_count; ++c) {
    const auto& scores = per_class[static_cast<std::size_t>(c)];
    model.class_counts[static_cast<std::size_t>(c)] = static_cast<Index>(scores.size());
    if (!scores.empty()) {
      model.thresholds[static_cast<std::size_t>(c)] = calibrate_threshold(scores, alpha);
    }
    // Empty classes keep the all-inclusive sentinel.
  }
  return model;
}

MondrianModel mondrian_calibrate_rows(const Matrix& q_rows, const IntVector& labels,
                                      int class_count, const ScoreConfig& cfg, double alpha) {
  return mondrian_calibrate(calibration_scores(q_rows, labels, cfg), labels, class_count, cfg,
                            alpha);
}

std::vector<int> mondrian_build_set(const Vector& q, const MondrianModel& model,
                                    std::optional<double> u) {
  const int c = static_cast<int>(q.size());
  if (static_cast<std::size_t>(c) != model.thresholds.size()) {
    throw ConfigError("probability vector length does not match the per-class thresholds");
  }
  const bool wants_u = model.score.randomized && model.score.family != ScoreFamily::Lac;
  if (wants_u && !u) throw ConfigError("randomized " + family_name(model.score.family) + " requires u");
  const std::optional<double> used = (wants_u && u) ? u : std::nullopt;

  std::vector<int> set;
  int argmax = 0;
  for (int label = 0; label < c; ++label) {
    if (q[label] > q[argmax]) argmax = label;
    const double t = model.thresholds[static_cast<std::size_t>(label)];
    if (std::isinf(t) || score(q, label, model.score, used) <= t) set.push_back(label);
  }
  if (set.empty()) set.push_back(argmax);
  return set;
}

std::vector<std::vector<int>> mondrian_build_sets(const Matrix& q_rows,
                                                  const MondrianModel& model) {
  const Index n = q_rows.rows();
  const std::uint64_t stream = test_stream(model.score.seed);
  const bool wants_u = model.score.randomized && model.score.family != ScoreFamily::Lac;
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::optional<double> u =
        wants_u ? std::optional<double>(uniform_at(stream, static_cast<std::uint64_t>(i)))
                : std::nullopt;
    sets[static_cast<std::size_t>(i)] = mondrian_build_set(q_rows.row(i).transpose(), model, u);
  }
  return sets;
}

void save_mondrian_model(const MondrianModel& model, const std::string& path) {
  nlohmann::json j;
  j["family"] = family_name(model.score.family);
  j["randomized"] = model.score.randomized;
  j["raps_lambda"] = model.score.raps_lambda;
  j["raps_kreg"] = model.score.raps_kreg;
  j["saps_weight"] = model.score.saps_weight;
  j["seed"] = model.score.seed;
  j["alpha"] = model.alpha;
  nlohmann::json thresholds = nlohmann::json::array();
  for (double t : model.thresholds) {
    if (std::isinf(t)) {
      thresholds.push_back(nullptr);
    } else {
      thresholds.push_back(t);
    }
  }
  j["thresholds"] = thresholds;
  j["class_counts"] = model.class_counts;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

MondrianModel load_mondrian_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  MondrianModel model;
  model.score.family = family_from_name(j["family"].get<std::string>());
  model.score.randomized = j["randomized"].get<bool>();
  model.score.raps_lambda = j["raps_lambda"].get<double>();
  model.score.raps_kreg = j["raps_kreg"].get<int>();
  model.score.saps_weight = j["saps_weight"].get<double>();
  model.score.seed = j["seed"].get<std::uint64_t>();
  model.alpha = j["alpha"].get<double>();
  for (const auto& t : j["thresholds"]) {
    model.thresholds.push_back(t.is_null() ? kAllInclusiveThreshold : t.get<double>());
  }
  model.class_counts = j["class_counts"].get<std::vector<Index>>();
  return model;
}

SplitResult split_baseline(const Matrix& cal_probs, const IntVector& cal_labels,
                           const Matrix& test_probs, const ScoreConfig& cfg, double alpha) {
  SplitResult out;
  out.model = calibrate(cal_probs, cal_labels, cfg, alpha);
  out.sets = build_sets(test_probs, out.model);
  return out;
}

}  // namespace cfcp
