#include "cfcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

namespace cfcp {

ClasswiseCoverage classwise_coverage(const std::vector<std::vector<int>>& sets,
                                     const IntVector& labels, int class_count) {
  if (sets.size() != static_cast<std::size_t>(labels.size())) {
    throw DataError("sets and labels disagree in length");
  }
  ClasswiseCoverage out;
  out.counts.assign(static_cast<std::size_t>(class_count), 0);
  std::vector<Index> hits(static_cast<std::size_t>(class_count), 0);
  for (Index i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= class_count) throw DataError("label out of range at row " + std::to_string(i));
    ++out.counts[static_cast<std::size_t>(y)];
    const auto& set = sets[static_cast<std::size_t>(i)];
    if (std::find(set.begin(), set.end(), y) != set.end()) ++hits[static_cast<std::size_t>(y)];
  }
  out.coverage.resize(class_count);
  for (int c = 0; c < class_count; ++c) {
    if (out.counts[static_cast<std::size_t>(c)] > 0) {
      out.coverage[c] = static_cast<double>(hits[static_cast<std::size_t>(c)]) /
                        static_cast<double>(out.counts[static_cast<std::size_t>(c)]);
      ++out.defined;
    } else {
      out.coverage[c] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

double cov_fraction(const ClasswiseCoverage& classwise, double alpha) {
  if (classwise.defined < 1) throw ConfigError("no class has test points; COV is undefined");
  const double target = 1.0 - alpha;
  Index met = 0;
  for (Index c = 0; c < classwise.coverage.size(); ++c) {
    if (!classwise.is_defined(static_cast<int>(c))) continue;
    if (classwise.coverage[c] >= target) ++met;
  }
  return static_cast<double>(met) / static_cast<double>(classwise.defined);
}

double avg_set_size(const std::vector<std::vector<int>>& sets) {
  if (sets.empty()) throw ConfigError("cannot average sizes of an empty test set");
  double total = 0.0;
  for (const auto& s : sets) total += static_cast<double>(s.size());
  return total / static_cast<double>(sets.size());
}

double wuc(const ClasswiseCoverage& classwise, const Vector& class_weights, double alpha, int p) {
  if (p != 1 && p != 2) throw ConfigError("wuc exponent p must be 1 or 2");
  if (class_weights.size() != classwise.coverage.size()) {
    throw ConfigError("class weights and coverage disagree in length");
  }
  if (std::abs(class_weights.sum() - 1.0) > 1e-6) {
    throw ConfigError("class weights must sum to 1");
  }
  const double target = 1.0 - alpha;
  double total = 0.0;
  for (Index c = 0; c < classwise.coverage.size(); ++c) {
    if (!classwise.is_defined(static_cast<int>(c))) {
      if (class_weights[c] != 0.0) {
        throw ConfigError("absent class " + std::to_string(c) + " must have weight zero");
      }
      continue;
    }
    const double deficit = std::max(0.0, target - classwise.coverage[c]);
    total += class_weights[c] * (p == 1 ? deficit : deficit * deficit);
  }
  return total;
}

int coverage_misses(const ClasswiseCoverage& classwise, double alpha) {
  const double target = 1.0 - alpha;
  int misses = 0;
  for (Index c = 0; c < classwise.coverage.size(); ++c) {
    if (!classwise.is_defined(static_cast<int>(c))) continue;
    if (classwise.coverage[c] < target) ++misses;
  }
  return misses;
}

double maxce(const ClasswiseCoverage& classwise, double alpha) {
  if (classwise.defined < 1) throw ConfigError("no class has test points; MaxCE is undefined");
  const double target = 1.0 - alpha;
  double worst = 0.0;
  for (Index c = 0; c < classwise.coverage.size(); ++c) {
    if (!classwise.is_defined(static_cast<int>(c))) continue;
    worst = std::max(worst, std::max(0.0, target - classwise.coverage[c]));
  }
  return worst;
}

EvaluationReport evaluate_sets(const std::vector<std::vector<int>>& sets, const IntVector& labels,
                               int class_count, double alpha, int wuc_p,
                               const std::optional<Vector>& weight_override) {
  EvaluationReport report;
  report.alpha = alpha;
  report.wuc_p = wuc_p;
  report.classwise = classwise_coverage(sets, labels, class_count);

  if (weight_override) {
    report.class_weights = *weight_override;
  } else {
    report.class_weights.resize(class_count);
    for (int c = 0; c < class_count; ++c) {
      report.class_weights[c] = static_cast<double>(report.classwise.counts[static_cast<std::size_t>(c)]) /
                                static_cast<double>(labels.size());
    }
  }

  report.cov = cov_fraction(report.classwise, alpha);
  report.avg_size = avg_set_size(sets);
  report.wuc_value = wuc(report.classwise, report.class_weights, alpha, wuc_p);
  report.maxce_value = maxce(report.classwise, alpha);

  Index hits = 0;
  Vector size_sums = Vector::Zero(class_count);
  for (Index i = 0; i < labels.size(); ++i) {
    const auto& set = sets[static_cast<std::size_t>(i)];
    if (std::find(set.begin(), set.end(), labels[i]) != set.end()) ++hits;
    size_sums[labels[i]] += static_cast<double>(set.size());
  }
  report.marginal_coverage = static_cast<double>(hits) / static_cast<double>(labels.size());
  report.class_avg_size.resize(class_count);
  for (int c = 0; c < class_count; ++c) {
    report.class_avg_size[c] =
        report.classwise.is_defined(c)
            ? size_sums[c] / static_cast<double>(report.classwise.counts[static_cast<std::size_t>(c)])
            : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string report_csv_header() {
  return "method,score,seed,repeat,cov,size,wuc,maxce,marginal_coverage";
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_csv_row(const EvaluationReport& r) {
  std::string row = r.method + "," + r.score_family + "," + std::to_string(r.seed) + "," +
                    std::to_string(r.repeat) + "," + fmt(r.cov) + "," + fmt(r.avg_size) + "," +
                    fmt(r.wuc_value) + "," + fmt(r.maxce_value) + "," +
                    fmt(r.marginal_coverage);
  return row;
}

std::string report_json(const EvaluationReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["score"] = r.score_family;
  j["seed"] = r.seed;
  j["repeat"] = r.repeat;
  j["alpha"] = r.alpha;
  j["cov"] = r.cov;
  j["size"] = r.avg_size;
  j["wuc"] = r.wuc_value;
  j["wuc_p"] = r.wuc_p;
  j["maxce"] = r.maxce_value;
  j["marginal_coverage"] = r.marginal_coverage;
  j["classes_defined"] = r.classwise.defined;
  nlohmann::json per_class = nlohmann::json::array();
  for (Index c = 0; c < r.classwise.coverage.size(); ++c) {
    nlohmann::json entry;
    entry["class"] = c;
    entry["count"] = r.classwise.counts[static_cast<std::size_t>(c)];
    if (r.classwise.is_defined(static_cast<int>(c))) {
      entry["coverage"] = r.classwise.coverage[c];
    } else {
      entry["coverage"] = nullptr;
      entry["undefined"] = true;
    }
    entry["weight"] = r.class_weights[c];
    per_class.push_back(entry);
  }
  j["classwise"] = per_class;
  return j.dump(2);
}

}  // namespace cfcp
