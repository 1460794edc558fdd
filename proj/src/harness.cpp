#include "cfcp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <tuple>

#include "cfcp/rng.hpp"

namespace cfcp {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Two-sided 95% Student-t quantiles for small df; normal beyond the table.
double ci_critical(int df, bool t_interval) {
  static const double t975[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (!t_interval) return 1.96;
  if (df < 1) return 0.0;
  if (df <= 30) return t975[df - 1];
  return 1.96;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Cfcp: return "cfcp";
    case Method::Split: return "split";
    case Method::Mondrian: return "mondrian";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "cfcp") return Method::Cfcp;
  if (name == "split") return Method::Split;
  if (name == "mondrian") return Method::Mondrian;
  throw ConfigError("unknown method: " + name);
}

namespace {

template <typename T>
std::vector<T> parse_list(const json& j, const std::string& key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_array()) {
    auto out = v.get<std::vector<T>>();
    if (out.empty()) throw ConfigError("grid list '" + key + "' must be non-empty");
    return out;
  }
  return {v.get<T>()};
}

MatrixFormat format_from_name(const std::string& name) {
  if (name == "auto") return MatrixFormat::Auto;
  if (name == "csv") return MatrixFormat::Csv;
  if (name == "binary") return MatrixFormat::Binary;
  throw ConfigError("unknown matrix format: " + name);
}

OracleSpec parse_synth(const json& j) {
  OracleSpec spec;
  spec.k_true = j.value("k_true", 2);
  spec.class_count = j.value("classes", 2);
  spec.dim = j.value("dim", Index{2});
  spec.noise_scale = j.value("noise_scale", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.misspecification = j.value("misspecification", 0.0);

  if (j.contains("cluster_laws") && !j.at("cluster_laws").is_null()) {
    const auto laws = j.at("cluster_laws").get<std::vector<std::vector<double>>>();
    if (laws.size() != static_cast<std::size_t>(spec.k_true)) {
      throw ConfigError("cluster_laws must have k_true rows");
    }
    spec.cluster_laws.resize(spec.k_true, spec.class_count);
    for (int k = 0; k < spec.k_true; ++k) {
      if (laws[static_cast<std::size_t>(k)].size() != static_cast<std::size_t>(spec.class_count)) {
        throw ConfigError("cluster_laws row " + std::to_string(k) + " has wrong length");
      }
      for (int c = 0; c < spec.class_count; ++c) {
        spec.cluster_laws(k, c) = laws[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
      }
    }
  } else {
    // Random Dirichlet(1) laws derived from the spec seed.
    Rng rng(derive_seed(spec.seed, 0x1A));
    spec.cluster_laws.resize(spec.k_true, spec.class_count);
    for (int k = 0; k < spec.k_true; ++k) {
      double total = 0.0;
      for (int c = 0; c < spec.class_count; ++c) {
        double u = rng.uniform();
        if (u < 1e-300) u = 1e-300;
        spec.cluster_laws(k, c) = -std::log(u);
        total += spec.cluster_laws(k, c);
      }
      spec.cluster_laws.row(k) /= total;
    }
  }

  if (j.contains("cluster_weights") && !j.at("cluster_weights").is_null()) {
    const auto w = j.at("cluster_weights").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(spec.k_true)) {
      throw ConfigError("cluster_weights must have k_true entries");
    }
    spec.cluster_weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
  } else {
    spec.cluster_weights =
        Vector::Constant(spec.k_true, 1.0 / static_cast<double>(spec.k_true));
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig config;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    config.embeddings_path = d.value("embeddings", "");
    config.labels_path = d.value("labels", "");
    config.probs_path = d.value("probs", "");
    config.format = format_from_name(d.value("format", "auto"));
    if (d.contains("cluster_pool_embeddings") && !d.at("cluster_pool_embeddings").is_null()) {
      config.cluster_pool_path = d.at("cluster_pool_embeddings").get<std::string>();
    }
  }
  if (j.contains("synth") && !j.at("synth").is_null()) {
    config.use_synth = true;
    config.synth = parse_synth(j.at("synth"));
    config.synth_n = j.at("synth").value("n", Index{1000});
  }
  if (!config.use_synth && config.embeddings_path.empty()) {
    throw ConfigError("config needs either a data section or a synth section");
  }

  config.method = method_from_name(j.value("method", "cfcp"));

  if (j.contains("score")) {
    const auto& s = j.at("score");
    config.score.family = family_from_name(s.value("family", "APS"));
    config.score.randomized = s.value("randomized", true);
    config.score.raps_lambda = s.value("raps_lambda", 0.0);
    config.score.raps_kreg = s.value("raps_kreg", 1);
    config.score.saps_weight = s.value("saps_weight", 0.2);
    validate_score_config(config.score);
  }
  config.alpha = j.value("alpha", 0.1);
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");

  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    config.repeats = p.value("repeats", 5);
    config.base_seed = p.value("base_seed", std::uint64_t{0});
    config.test_fraction = p.value("test_fraction", 0.25);
    config.t_interval = p.value("t_interval", false);
    config.wuc_p = p.value("wuc_p", 1);
    if (p.contains("split")) {
      const auto& s = p.at("split");
      config.split.stat_fraction = s.value("stat", 0.6);
      config.split.tune_fraction = s.value("tune", 0.2);
      config.split.quantile_fraction = s.value("quantile", 0.2);
    }
  }
  if (config.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0,1)");
  }

  if (j.contains("cfcp")) {
    const auto& c = j.at("cfcp");
    config.grid.k = parse_list<Index>(c, "k", config.grid.k);
    config.grid.m = parse_list<int>(c, "m", config.grid.m);
    config.grid.tau = parse_list<double>(c, "tau", config.grid.tau);
    config.grid.beta = parse_list<double>(c, "beta", config.grid.beta);
    config.grid.gamma = parse_list<double>(c, "gamma", config.grid.gamma);
    config.grid.beta_sup = parse_list<double>(c, "beta_sup", config.grid.beta_sup);
    const std::string prior = c.value("prior", "empirical");
    if (prior == "empirical") {
      config.prior_mode = PriorMode::EmpiricalLabels;
    } else if (prior == "mean_base_prob") {
      config.prior_mode = PriorMode::MeanBaseProb;
    } else {
      throw ConfigError("unknown prior mode: " + prior);
    }
    const std::string selection = c.value("selection", "misses");
    if (selection == "misses") {
      config.selection = SelectionMetric::Misses;
    } else if (selection == "wuc") {
      config.selection = SelectionMetric::Wuc;
    } else {
      throw ConfigError("unknown selection metric: " + selection);
    }
    if (c.contains("kmeans")) {
      config.kmeans.max_iters = c.at("kmeans").value("max_iters", 100);
      config.kmeans.tol = c.at("kmeans").value("tol", 1e-4);
    }
  }

  if (j.contains("output")) {
    config.out_dir = j.at("output").value("dir", "");
    config.per_class_csv = j.at("output").value("per_class", false);
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + std::string(e.what()) + ")");
  }
  return parse_experiment_config(j);
}

Dataset materialize_dataset(const ExperimentConfig& config) {
  if (config.use_synth) {
    return generate_oracle_dataset(config.synth, config.synth_n).data;
  }
  return load_dataset(config.embeddings_path, config.labels_path, config.probs_path,
                      config.format);
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(idx[i]);
  }
  return out;
}

IntVector take_labels(const IntVector& v, const std::vector<Index>& idx) {
  IntVector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

namespace {

std::vector<GridPoint> expand_grid(const GridSpec& grid) {
  std::vector<GridPoint> points;
  points.reserve(grid.size());
  for (Index k : grid.k)
    for (int m : grid.m)
      for (double tau : grid.tau)
        for (double beta : grid.beta)
          for (double gamma : grid.gamma)
            for (double beta_sup : grid.beta_sup) {
              points.push_back(GridPoint{k, m, tau, beta, gamma, beta_sup});
            }
  return points;
}

CfcpParams to_params(const GridPoint& p, const ExperimentConfig& config, std::uint64_t seed) {
  CfcpParams params;
  params.k = p.k;
  params.m = p.m;
  params.tau = p.tau;
  params.beta = p.beta;
  params.gamma = p.gamma;
  params.beta_sup = p.beta_sup;
  params.prior_mode = config.prior_mode;
  params.kmeans = config.kmeans;
  params.seed = seed;
  return params;
}

auto point_key(const GridPoint& p) {
  return std::make_tuple(p.k, p.m, p.tau, p.beta, p.gamma, p.beta_sup);
}

struct GridRowLess {
  SelectionMetric metric;
  bool operator()(const GridRow& a, const GridRow& b) const {
    const double pa = metric == SelectionMetric::Misses ? a.misses : a.wuc;
    const double pb = metric == SelectionMetric::Misses ? b.misses : b.wuc;
    return std::make_tuple(pa, a.size, point_key(a.point)) <
           std::make_tuple(pb, b.size, point_key(b.point));
  }
};

std::optional<Matrix> load_cluster_pool(const ExperimentConfig& config) {
  if (!config.cluster_pool_path) return std::nullopt;
  Matrix pool = load_matrix(*config.cluster_pool_path, config.format);
  normalize_rows_in_place(pool);
  return pool;
}

}  // namespace

GridSearchResult grid_search(const Dataset& normalized, const std::vector<Index>& stat_idx,
                             const std::vector<Index>& tune_idx, const ExperimentConfig& config,
                             std::uint64_t repeat_seed) {
  if (tune_idx.size() < 2) throw ConfigError("tune split too small for an internal split");
  const auto points = expand_grid(config.grid);
  if (points.empty()) throw ConfigError("empty hyperparameter grid");

  // Internal split of the tune rows into calibration and evaluation halves.
  std::vector<Index> shuffled = tune_idx;
  Rng rng(derive_seed(repeat_seed, 4));
  rng.shuffle(shuffled);
  const std::size_t cal_count = shuffled.size() / 2;
  const std::vector<Index> cal_idx(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cal_count));
  const std::vector<Index> eval_idx(shuffled.begin() + static_cast<std::ptrdiff_t>(cal_count), shuffled.end());

  const Matrix stat_emb = take_rows(normalized.embeddings, stat_idx);
  const IntVector stat_labels = take_labels(normalized.labels, stat_idx);
  const Matrix stat_probs = take_rows(normalized.base_probs, stat_idx);
  const Matrix cal_emb = take_rows(normalized.embeddings, cal_idx);
  const IntVector cal_labels = take_labels(normalized.labels, cal_idx);
  const Matrix cal_probs = take_rows(normalized.base_probs, cal_idx);
  const Matrix eval_emb = take_rows(normalized.embeddings, eval_idx);
  const IntVector eval_labels = take_labels(normalized.labels, eval_idx);
  const Matrix eval_probs = take_rows(normalized.base_probs, eval_idx);

  const std::optional<Matrix> cluster_pool = load_cluster_pool(config);

  ScoreConfig cfg = config.score;
  cfg.seed = derive_seed(repeat_seed, 6);

  GridSearchResult result;
  result.table.reserve(points.size());
  for (std::size_t g = 0; g < points.size(); ++g) {
    const CfcpParams params =
        to_params(points[g], config, derive_seed(repeat_seed, 16 + static_cast<std::uint64_t>(g)));
    const CfcpModel model =
        fit_cfcp(stat_emb, stat_labels, stat_probs, normalized.class_count, params,
                 cluster_pool ? &*cluster_pool : nullptr);
    const Matrix q_cal = predict_q_matrix(model, cal_emb, cal_probs);
    const ConformalModel cm = calibrate(q_cal, cal_labels, cfg, config.alpha);
    const Matrix q_eval = predict_q_matrix(model, eval_emb, eval_probs);
    const auto sets = build_sets(q_eval, cm);
    const EvaluationReport report =
        evaluate_sets(sets, eval_labels, normalized.class_count, config.alpha, config.wuc_p);

    GridRow row;
    row.point = points[g];
    row.misses = static_cast<double>(coverage_misses(report.classwise, config.alpha));
    row.size = report.avg_size;
    row.wuc = report.wuc_value;
    row.maxce = report.maxce_value;
    result.table.push_back(row);
  }

  std::sort(result.table.begin(), result.table.end(), GridRowLess{config.selection});
  result.best = result.table.front().point;
  return result;
}

RepeatDetail run_repeat(const Dataset& normalized, const ExperimentConfig& config,
                        int repeat_index) {
  const Index n = normalized.n();
  const std::uint64_t repeat_seed =
      derive_seed(config.base_seed, static_cast<std::uint64_t>(repeat_index));

  // Holdout: seeded permutation, test fraction up front, rest is the pool.
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(derive_seed(repeat_seed, 0));
  rng.shuffle(perm);
  Index n_test = static_cast<Index>(std::floor(config.test_fraction * static_cast<double>(n)));
  n_test = std::max<Index>(1, std::min(n_test, n - 3));
  if (n - n_test < 3) throw ConfigError("dataset too small for a test/pool split");

  RepeatDetail detail;
  detail.test_idx.assign(perm.begin(), perm.begin() + n_test);
  const std::vector<Index> pool(perm.begin() + n_test, perm.end());

  SplitSpec split = config.split;
  split.seed = derive_seed(repeat_seed, 1);
  PoolSplit parts = split_pool(pool, split);
  detail.stat_idx = std::move(parts.stat);
  detail.tune_idx = std::move(parts.tune);
  detail.quantile_idx = std::move(parts.quantile);

  ScoreConfig cfg = config.score;
  cfg.seed = derive_seed(repeat_seed, 2);

  const Matrix test_emb = take_rows(normalized.embeddings, detail.test_idx);
  const IntVector test_labels = take_labels(normalized.labels, detail.test_idx);
  const Matrix test_probs = take_rows(normalized.base_probs, detail.test_idx);
  const IntVector qcal_labels = take_labels(normalized.labels, detail.quantile_idx);

  Matrix q_cal, q_test;
  if (config.method == Method::Cfcp) {
    if (config.grid.size() > 1) {
      detail.chosen = grid_search(normalized, detail.stat_idx, detail.tune_idx, config,
                                  repeat_seed)
                          .best;
    } else {
      detail.chosen = expand_grid(config.grid).front();
    }
    // Refit on stat + tune; the quantile split stays untouched until
    // threshold calibration.
    std::vector<Index> refit_idx = detail.stat_idx;
    refit_idx.insert(refit_idx.end(), detail.tune_idx.begin(), detail.tune_idx.end());
    const CfcpParams params = to_params(*detail.chosen, config, derive_seed(repeat_seed, 3));
    const std::optional<Matrix> cluster_pool = load_cluster_pool(config);
    const CfcpModel model = fit_cfcp(take_rows(normalized.embeddings, refit_idx),
                                     take_labels(normalized.labels, refit_idx),
                                     take_rows(normalized.base_probs, refit_idx),
                                     normalized.class_count, params,
                                     cluster_pool ? &*cluster_pool : nullptr);
    q_cal = predict_q_matrix(model, take_rows(normalized.embeddings, detail.quantile_idx),
                             take_rows(normalized.base_probs, detail.quantile_idx));
    q_test = predict_q_matrix(model, test_emb, test_probs);
  } else {
    q_cal = take_rows(normalized.base_probs, detail.quantile_idx);
    q_test = test_probs;
  }

  if (config.method == Method::Mondrian) {
    const MondrianModel mm =
        mondrian_calibrate_rows(q_cal, qcal_labels, normalized.class_count, cfg, config.alpha);
    detail.sets = mondrian_build_sets(q_test, mm);
    detail.threshold = std::numeric_limits<double>::quiet_NaN();
  } else {
    const ConformalModel cm = calibrate(q_cal, qcal_labels, cfg, config.alpha);
    detail.sets = build_sets(q_test, cm);
    detail.threshold = cm.threshold;
  }

  detail.q_test = std::move(q_test);
  detail.report = evaluate_sets(detail.sets, test_labels, normalized.class_count, config.alpha,
                                config.wuc_p);
  detail.report.method = method_name(config.method);
  detail.report.score_family = family_name(config.score.family);
  detail.report.seed = repeat_seed;
  detail.report.repeat = repeat_index;
  return detail;
}

namespace {

AggregateStats aggregate_reports(const std::vector<EvaluationReport>& reports, bool t_interval) {
  AggregateStats agg;
  agg.repeats = static_cast<int>(reports.size());
  if (reports.empty()) return agg;

  const auto mean_and_hw = [&](auto getter, double& mean_out, double& hw_out) {
    double mean = 0.0;
    for (const auto& r : reports) mean += getter(r);
    mean /= static_cast<double>(reports.size());
    double var = 0.0;
    if (reports.size() > 1) {
      for (const auto& r : reports) {
        const double d = getter(r) - mean;
        var += d * d;
      }
      var /= static_cast<double>(reports.size() - 1);
    }
    const double crit = ci_critical(static_cast<int>(reports.size()) - 1, t_interval);
    mean_out = mean;
    hw_out = reports.size() > 1
                 ? crit * std::sqrt(var) / std::sqrt(static_cast<double>(reports.size()))
                 : 0.0;
  };

  mean_and_hw([](const EvaluationReport& r) { return r.cov; }, agg.cov, agg.cov_hw);
  mean_and_hw([](const EvaluationReport& r) { return r.avg_size; }, agg.size, agg.size_hw);
  mean_and_hw([](const EvaluationReport& r) { return r.wuc_value; }, agg.wuc, agg.wuc_hw);
  mean_and_hw([](const EvaluationReport& r) { return r.maxce_value; }, agg.maxce, agg.maxce_hw);
  mean_and_hw([](const EvaluationReport& r) { return r.marginal_coverage; }, agg.marginal,
              agg.marginal_hw);
  return agg;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  Dataset ds = materialize_dataset(config);
  normalize_rows_in_place(ds.embeddings);

  RunResult result;
  for (int r = 0; r < config.repeats; ++r) {
    try {
      result.reports.push_back(run_repeat(ds, config, r).report);
    } catch (const std::exception& e) {
      result.errors.push_back("repeat " + std::to_string(r) + ": " + e.what());
      result.partial = true;
    }
  }
  result.aggregate = aggregate_reports(result.reports, config.t_interval);
  return result;
}

void emit_reports(const RunResult& result, const ExperimentConfig& config,
                  const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("output directory not set");
  std::filesystem::create_directories(out_dir);

  for (const auto& report : result.reports) {
    const std::string path = out_dir + "/run_" + std::to_string(report.repeat) + ".json";
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << report_json(report) << '\n';
  }

  {
    std::ofstream csv(out_dir + "/aggregate.csv");
    if (!csv) throw DataError("cannot write " + out_dir + "/aggregate.csv");
    csv << report_csv_header()
        << ",cov_ci95,size_ci95,wuc_ci95,maxce_ci95,marginal_ci95\n";
    for (const auto& report : result.reports) {
      csv << report_csv_row(report) << ",,,,,\n";
    }
    const AggregateStats& a = result.aggregate;
    if (a.repeats > 0) {
      csv << method_name(config.method) << ',' << family_name(config.score.family) << ','
          << config.base_seed << ",mean," << fmt(a.cov) << ',' << fmt(a.size) << ','
          << fmt(a.wuc) << ',' << fmt(a.maxce) << ',' << fmt(a.marginal) << ','
          << fmt(a.cov_hw) << ',' << fmt(a.size_hw) << ',' << fmt(a.wuc_hw) << ','
          << fmt(a.maxce_hw) << ',' << fmt(a.marginal_hw) << '\n';
    }
  }

  if (config.per_class_csv) {
    std::ofstream csv(out_dir + "/per_class.csv");
    if (!csv) throw DataError("cannot write " + out_dir + "/per_class.csv");
    csv << "method,score,repeat,class,count,coverage,avg_size\n";
    for (const auto& report : result.reports) {
      for (Index c = 0; c < report.classwise.coverage.size(); ++c) {
        csv << report.method << ',' << report.score_family << ',' << report.repeat << ',' << c
            << ',' << report.classwise.counts[static_cast<std::size_t>(c)] << ',';
        if (report.classwise.is_defined(static_cast<int>(c))) {
          csv << fmt(report.classwise.coverage[c]) << ',' << fmt(report.class_avg_size[c]);
        } else {
          csv << "undefined,undefined";
        }
        csv << '\n';
      }
    }
  }

  {
    json summary;
    summary["method"] = method_name(config.method);
    summary["score"] = family_name(config.score.family);
    summary["randomized"] = config.score.randomized;
    summary["alpha"] = config.alpha;
    summary["repeats_requested"] = config.repeats;
    summary["repeats_completed"] = static_cast<int>(result.reports.size());
    summary["partial"] = result.partial;
    summary["errors"] = result.errors;
    json agg;
    agg["cov"] = result.aggregate.cov;
    agg["cov_ci95"] = result.aggregate.cov_hw;
    agg["size"] = result.aggregate.size;
    agg["size_ci95"] = result.aggregate.size_hw;
    agg["wuc"] = result.aggregate.wuc;
    agg["wuc_ci95"] = result.aggregate.wuc_hw;
    agg["maxce"] = result.aggregate.maxce;
    agg["maxce_ci95"] = result.aggregate.maxce_hw;
    agg["marginal_coverage"] = result.aggregate.marginal;
    agg["marginal_ci95"] = result.aggregate.marginal_hw;
    summary["aggregate"] = agg;
    std::ofstream out(out_dir + "/summary.json");
    if (!out) throw DataError("cannot write " + out_dir + "/summary.json");
    out << summary.dump(2) << '\n';
  }
}

void emit_grid_table(const GridSearchResult& grid, const ExperimentConfig& config,
                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/grid.csv");
    if (!csv) throw DataError("cannot write " + out_dir + "/grid.csv");
    csv << "k,m,tau,beta,gamma,beta_sup,misses,size,wuc,maxce\n";
    for (const auto& row : grid.table) {
      csv << row.point.k << ',' << row.point.m << ',' << fmt(row.point.tau) << ','
          << fmt(row.point.beta) << ',' << fmt(row.point.gamma) << ',' << fmt(row.point.beta_sup)
          << ',' << fmt(row.misses) << ',' << fmt(row.size) << ',' << fmt(row.wuc) << ','
          << fmt(row.maxce) << '\n';
    }
  }
  {
    json best;
    best["k"] = grid.best.k;
    best["m"] = grid.best.m;
    best["tau"] = grid.best.tau;
    best["beta"] = grid.best.beta;
    best["gamma"] = grid.best.gamma;
    best["beta_sup"] = grid.best.beta_sup;
    best["score"] = family_name(config.score.family);
    std::ofstream out(out_dir + "/best.json");
    if (!out) throw DataError("cannot write " + out_dir + "/best.json");
    out << best.dump(2) << '\n';
  }
}

}  // namespace cfcp
