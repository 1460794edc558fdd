#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfcp/baselines.hpp"
#include "cfcp/conformal.hpp"
#include "cfcp/dataset.hpp"
#include "cfcp/local_model.hpp"
#include "cfcp/metrics.hpp"
#include "cfcp/synth.hpp"

namespace cfcp {

enum class Method { Cfcp, Split, Mondrian };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

enum class SelectionMetric { Misses, Wuc };

/// Hyperparameter grid; scalars are one-element lists.
struct GridSpec {
  std::vector<Index> k{10};
  std::vector<int> m{1};
  std::vector<double> tau{0.1};
  std::vector<double> beta{1.0};
  std::vector<double> gamma{1.0};
  std::vector<double> beta_sup{1.0};

  std::size_t size() const {
    return k.size() * m.size() * tau.size() * beta.size() * gamma.size() * beta_sup.size();
  }
};

struct GridPoint {
  Index k = 10;
  int m = 1;
  double tau = 0.1;
  double beta = 1.0;
  double gamma = 1.0;
  double beta_sup = 1.0;
};

struct ExperimentConfig {
  // Data: file paths, or a synthetic oracle spec when use_synth is set.
  std::string embeddings_path, labels_path, probs_path;
  MatrixFormat format = MatrixFormat::Auto;
  std::optional<std::string> cluster_pool_path;
  bool use_synth = false;
  OracleSpec synth;
  Index synth_n = 0;

  Method method = Method::Cfcp;
  ScoreConfig score;
  double alpha = 0.1;

  int repeats = 5;
  std::uint64_t base_seed = 0;
  double test_fraction = 0.25;
  SplitSpec split;  // fractions only; the seed is derived per repeat
  bool t_interval = false;
  int wuc_p = 1;

  GridSpec grid;
  PriorMode prior_mode = PriorMode::EmpiricalLabels;
  SelectionMetric selection = SelectionMetric::Misses;
  KMeansOptions kmeans;

  std::string out_dir;
  bool per_class_csv = false;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

/// Loads the configured files or generates the synthetic dataset.
Dataset materialize_dataset(const ExperimentConfig& config);

Matrix take_rows(const Matrix& m, const std::vector<Index>& idx);
IntVector take_labels(const IntVector& v, const std::vector<Index>& idx);

struct GridRow {
  GridPoint point;
  double misses = 0.0;
  double size = 0.0;
  double wuc = 0.0;
  double maxce = 0.0;
};

struct GridSearchResult {
  GridPoint best;
  std::vector<GridRow> table;  // sorted by the selection chain
};

/// Fits every grid point on the stat rows, calibrates on an internal split of
/// the tune rows and evaluates on the rest. Selection: fewest classwise
/// misses (or WUC), ties by smaller average size, then by hyperparameter
/// values, so the result does not depend on grid enumeration order.
GridSearchResult grid_search(const Dataset& normalized, const std::vector<Index>& stat_idx,
                             const std::vector<Index>& tune_idx, const ExperimentConfig& config,
                             std::uint64_t repeat_seed);

struct RepeatDetail {
  std::vector<Index> test_idx, stat_idx, tune_idx, quantile_idx;
  Matrix q_test;
  double threshold = kAllInclusiveThreshold;  // NaN for mondrian
  std::optional<GridPoint> chosen;
  std::vector<std::vector<int>> sets;
  EvaluationReport report;
};

/// One full protocol repeat: holdout split, stat/tune/quantile partition,
/// tuning (CFCP with a non-trivial grid), refit on stat+tune, threshold on
/// the quantile split, evaluation on the test split.
RepeatDetail run_repeat(const Dataset& normalized, const ExperimentConfig& config,
                        int repeat_index);

struct AggregateStats {
  int repeats = 0;
  double cov = 0, size = 0, wuc = 0, maxce = 0, marginal = 0;
  double cov_hw = 0, size_hw = 0, wuc_hw = 0, maxce_hw = 0, marginal_hw = 0;  // CI half-widths
};

struct RunResult {
  std::vector<EvaluationReport> reports;
  AggregateStats aggregate;
  std::vector<std::string> errors;  // one entry per failed repeat
  bool partial = false;
};

/// Runs all repeats; a failing repeat is logged and skipped, marking the run
/// partial. Identical configs produce identical results.
RunResult run_experiment(const ExperimentConfig& config);

/// Writes run_<r>.json per repeat, aggregate.csv, summary.json and optionally
/// per_class.csv into out_dir. Reruns with the same inputs are byte-identical.
void emit_reports(const RunResult& result, const ExperimentConfig& config,
                  const std::string& out_dir);

void emit_grid_table(const GridSearchResult& grid, const ExperimentConfig& config,
                     const std::string& out_dir);

}  // namespace cfcp
