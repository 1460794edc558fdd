#include "cfcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfcp/rng.hpp"

namespace cfcp {

std::string family_name(ScoreFamily f) {
  switch (f) {
    case ScoreFamily::Lac: return "LAC";
    case ScoreFamily::Aps: return "APS";
    case ScoreFamily::Raps: return "RAPS";
    case ScoreFamily::Saps: return "SAPS";
  }
  return "?";
}

ScoreFamily family_from_name(const std::string& name) {
  if (name == "LAC" || name == "lac") return ScoreFamily::Lac;
  if (name == "APS" || name == "aps") return ScoreFamily::Aps;
  if (name == "RAPS" || name == "raps") return ScoreFamily::Raps;
  if (name == "SAPS" || name == "saps") return ScoreFamily::Saps;
  throw ConfigError("unknown score family: " + name);
}

void validate_score_config(const ScoreConfig& cfg) {
  if (cfg.family == ScoreFamily::Raps) {
    if (cfg.raps_lambda < 0.0) throw ConfigError("raps_lambda must be nonnegative");
    if (cfg.raps_kreg < 1) throw ConfigError("raps_kreg must be at least 1");
  }
  if (cfg.family == ScoreFamily::Saps && !(cfg.saps_weight > 0.0)) {
    throw ConfigError("saps_weight must be positive");
  }
}

LabelRanking rank_labels(const Vector& q) {
  const int c = static_cast<int>(q.size());
  LabelRanking out;
  out.order.resize(static_cast<std::size_t>(c));
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&q](int a, int b) {
    if (q[a] != q[b]) return q[a] > q[b];
    return a < b;
  });
  out.rank.resize(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) out.rank[static_cast<std::size_t>(out.order[static_cast<std::size_t>(j)])] = j;
  return out;
}

namespace {

void check_u(const std::optional<double>& u) {
  if (u && !(*u >= 0.0 && *u <= 1.0)) {
    throw ConfigError("u must lie in [0,1]; got " + std::to_string(*u));
  }
}

struct SortedView {
  LabelRanking ranking;
  Vector sorted_q;    // Q^(j), descending
  Vector cumulative;  // prefix sums of sorted_q, left-to-right accumulation
};

SortedView sorted_view(const Vector& q) {
  SortedView view;
  view.ranking = rank_labels(q);
  const Index c = q.size();
  view.sorted_q.resize(c);
  view.cumulative.resize(c);
  double running = 0.0;
  for (Index j = 0; j < c; ++j) {
    view.sorted_q[j] = q[view.ranking.order[static_cast<std::size_t>(j)]];
    running += view.sorted_q[j];
    view.cumulative[j] = running;
  }
  return view;
}

// Score of the label at 0-based sorted position j0. All public score
// functions and build_set evaluate through here, so set membership matches
// the score/threshold comparison bit for bit. u is read only when use_u.
double rank_score(const SortedView& view, Index j0, const ScoreConfig& cfg, bool use_u,
                  double u) {
  switch (cfg.family) {
    case ScoreFamily::Lac:
      return 1.0 - view.sorted_q[j0];
    case ScoreFamily::Aps:
    case ScoreFamily::Raps: {
      double s;
      if (use_u) {
        const double before = (j0 == 0) ? 0.0 : view.cumulative[j0 - 1];
        s = before + u * view.sorted_q[j0];
      } else {
        s = view.cumulative[j0];
      }
      if (cfg.family == ScoreFamily::Raps) {
        const long rank1 = static_cast<long>(j0) + 1;
        const long over = std::max(0L, rank1 - static_cast<long>(cfg.raps_kreg));
        s += cfg.raps_lambda * static_cast<double>(over);
      }
      return s;
    }
    case ScoreFamily::Saps: {
      const double p1 = view.sorted_q[0];
      const double r = static_cast<double>(j0);  // 0-indexed rank
      if (!use_u) return p1 + cfg.saps_weight * r;
      if (j0 == 0) return p1 - u * p1;
      return p1 + cfg.saps_weight * r - u * cfg.saps_weight;
    }
  }
  throw ConfigError("unknown score family");
}

double rank_score(const SortedView& view, Index j0, const ScoreConfig& cfg,
                  const std::optional<double>& u) {
  return rank_score(view, j0, cfg, u.has_value(), u.has_value() ? *u : 0.0);
}

void check_label(const Vector& q, int label) {
  if (label < 0 || label >= static_cast<int>(q.size())) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(q.size()) + " classes");
  }
}

}  // namespace

double score_lac(const Vector& q, int label) {
  check_label(q, label);
  return 1.0 - q[label];
}

double score_aps(const Vector& q, int label, std::optional<double> u) {
  check_label(q, label);
  check_u(u);
  const SortedView view = sorted_view(q);
  ScoreConfig cfg;
  cfg.family = ScoreFamily::Aps;
  return rank_score(view, view.ranking.rank[static_cast<std::size_t>(label)], cfg, u);
}

double score_raps(const Vector& q, int label, std::optional<double> u, double lambda, int kreg) {
  check_label(q, label);
  check_u(u);
  if (lambda < 0.0) throw ConfigError("raps_lambda must be nonnegative");
  if (kreg < 1) throw ConfigError("raps_kreg must be at least 1");
  const SortedView view = sorted_view(q);
  ScoreConfig cfg;
  cfg.family = ScoreFamily::Raps;
  cfg.raps_lambda = lambda;
  cfg.raps_kreg = kreg;
  return rank_score(view, view.ranking.rank[static_cast<std::size_t>(label)], cfg, u);
}

double score_saps(const Vector& q, int label, std::optional<double> u, double weight) {
  check_label(q, label);
  check_u(u);
  if (!(weight > 0.0)) throw ConfigError("saps_weight must be positive");
  const SortedView view = sorted_view(q);
  ScoreConfig cfg;
  cfg.family = ScoreFamily::Saps;
  cfg.saps_weight = weight;
  return rank_score(view, view.ranking.rank[static_cast<std::size_t>(label)], cfg, u);
}

double score(const Vector& q, int label, const ScoreConfig& cfg, std::optional<double> u) {
  validate_score_config(cfg);
  check_label(q, label);
  check_u(u);
  const bool wants_u = cfg.randomized && cfg.family != ScoreFamily::Lac;
  if (wants_u && !u) throw ConfigError("randomized " + family_name(cfg.family) + " requires u");
  const SortedView view = sorted_view(q);
  return rank_score(view, view.ranking.rank[static_cast<std::size_t>(label)], cfg,
                    wants_u, (wants_u && u) ? *u : 0.0);
}

double calibrate_threshold(const std::vector<double>& scores, double alpha) {
  if (scores.empty()) throw ConfigError("empty score vector");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const auto n = static_cast<double>(scores.size());
  // Guard the ceil against fp overshoot: (n+1)*(1-alpha) can land a hair
  // above an exact integer (e.g. 20*0.9).
  const double x = (n + 1.0) * (1.0 - alpha);
  const auto k = static_cast<std::int64_t>(std::ceil(x - 1e-12 * x));
  if (k > static_cast<std::int64_t>(scores.size())) return kAllInclusiveThreshold;
  std::vector<double> scratch = scores;
  std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
  return scratch[static_cast<std::size_t>(k - 1)];
}

std::vector<int> build_set(const Vector& q, const ConformalModel& model, std::optional<double> u) {
  const int c = static_cast<int>(q.size());
  std::vector<int> set;
  if (model.all_inclusive()) {
    set.resize(static_cast<std::size_t>(c));
    std::iota(set.begin(), set.end(), 0);
    return set;
  }
  const ScoreConfig& cfg = model.score;
  const bool wants_u = cfg.randomized && cfg.family != ScoreFamily::Lac;
  if (wants_u && !u) throw ConfigError("randomized " + family_name(cfg.family) + " requires u");
  check_u(u);
  const double uval = (wants_u && u) ? *u : 0.0;

  const SortedView view = sorted_view(q);
  for (Index j0 = 0; j0 < q.size(); ++j0) {
    if (rank_score(view, j0, cfg, wants_u, uval) <= model.threshold) {
      set.push_back(view.ranking.order[static_cast<std::size_t>(j0)]);
    }
  }
  if (set.empty()) set.push_back(view.ranking.order[0]);  // top-1 fallback
  std::sort(set.begin(), set.end());
  return set;
}

std::uint64_t calibration_stream(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t test_stream(std::uint64_t seed) { return derive_seed(seed, 2); }

std::vector<double> calibration_scores(const Matrix& q_rows, const IntVector& labels,
                                       const ScoreConfig& cfg) {
  validate_score_config(cfg);
  const Index n = q_rows.rows();
  if (labels.size() != n) throw DataError("calibration labels and rows disagree in length");
  const std::uint64_t stream = calibration_stream(cfg.seed);
  const bool wants_u = cfg.randomized && cfg.family != ScoreFamily::Lac;
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double u = wants_u ? uniform_at(stream, static_cast<std::uint64_t>(i)) : 0.0;
    const Vector q = q_rows.row(i).transpose();
    const SortedView view = sorted_view(q);
    scores[static_cast<std::size_t>(i)] =
        rank_score(view, view.ranking.rank[static_cast<std::size_t>(labels[i])], cfg, wants_u, u);
  }
  return scores;
}

ConformalModel calibrate(const Matrix& q_rows, const IntVector& labels, const ScoreConfig& cfg,
                         double alpha) {
  ConformalModel model;
  model.score = cfg;
  model.alpha = alpha;
  model.calibration_size = q_rows.rows();
  model.threshold = calibrate_threshold(calibration_scores(q_rows, labels, cfg), alpha);
  return model;
}

std::vector<std::vector<int>> build_sets(const Matrix& q_rows, const ConformalModel& model) {
  const Index n = q_rows.rows();
  const std::uint64_t stream = test_stream(model.score.seed);
  const bool wants_u = model.score.randomized && model.score.family != ScoreFamily::Lac;
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::optional<double> u =
        wants_u ? std::optional<double>(uniform_at(stream, static_cast<std::uint64_t>(i)))
                : std::nullopt;
    sets[static_cast<std::size_t>(i)] = build_set(q_rows.row(i).transpose(), model, u);
  }
  return sets;
}

void save_conformal_model(const ConformalModel& model, const std::string& path) {
  nlohmann::json j;
  j["family"] = family_name(model.score.family);
  j["randomized"] = model.score.randomized;
  j["raps_lambda"] = model.score.raps_lambda;
  j["raps_kreg"] = model.score.raps_kreg;
  j["saps_weight"] = model.score.saps_weight;
  j["seed"] = model.score.seed;
  j["alpha"] = model.alpha;
  j["all_inclusive"] = model.all_inclusive();
  if (model.all_inclusive()) {
    j["threshold"] = nullptr;
  } else {
    j["threshold"] = model.threshold;
  }
  j["calibration_size"] = model.calibration_size;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

ConformalModel load_conformal_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  ConformalModel model;
  model.score.family = family_from_name(j["family"].get<std::string>());
  model.score.randomized = j["randomized"].get<bool>();
  model.score.raps_lambda = j["raps_lambda"].get<double>();
  model.score.raps_kreg = j["raps_kreg"].get<int>();
  model.score.saps_weight = j["saps_weight"].get<double>();
  model.score.seed = j["seed"].get<std::uint64_t>();
  model.alpha = j["alpha"].get<double>();
  model.threshold = j["all_inclusive"].get<bool>() ? kAllInclusiveThreshold
                                                   : j["threshold"].get<double>();
  model.calibration_size = j["calibration_size"].get<Index>();
  return model;
}

}  // namespace cfcp
