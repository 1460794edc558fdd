// cfcp: batch CLI for cluster-frequency conformal prediction.
//
// Subcommands: synth, fit, calibrate, predict, evaluate, tune, run.
// Exit codes: 0 success, 1 config error, 2 data error, 3 partial run.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "cfcp/baselines.hpp"
#include "cfcp/conformal.hpp"
#include "cfcp/dataset.hpp"
#include "cfcp/harness.hpp"
#include "cfcp/local_model.hpp"
#include "cfcp/metrics.hpp"
#include "cfcp/rng.hpp"
#include "cfcp/synth.hpp"

namespace {

using namespace cfcp;

std::string resolve_out_dir(const std::string& flag_value, const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  if (const char* env = std::getenv("CFCP_OUT_DIR"); env && *env) return env;
  throw ConfigError("no output directory: pass --out, set output.dir in the config, "
                    "or export CFCP_OUT_DIR");
}

MatrixFormat parse_format(const std::string& name) {
  if (name == "auto") return MatrixFormat::Auto;
  if (name == "csv") return MatrixFormat::Csv;
  if (name == "binary") return MatrixFormat::Binary;
  throw ConfigError("unknown format: " + name);
}

std::string matrix_ext(MatrixFormat f) { return f == MatrixFormat::Binary ? ".bin" : ".csv"; }

void write_sets_csv(const std::vector<std::vector<int>>& sets, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "index,set\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out << i << ',';
    for (std::size_t j = 0; j < sets[i].size(); ++j) {
      if (j > 0) out << ';';
      out << sets[i][j];
    }
    out << '\n';
  }
}

std::vector<std::vector<int>> read_sets_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<int>> sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "index,set") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(path + ": malformed row at line " + std::to_string(line_no));
    }
    std::vector<int> set;
    std::size_t start = comma + 1;
    while (start <= line.size()) {
      const auto semi = line.find(';', start);
      const std::string token = line.substr(start, semi == std::string::npos ? std::string::npos
                                                                             : semi - start);
      if (!token.empty()) {
        try {
          set.push_back(std::stoi(token));
        } catch (const std::exception&) {
          throw DataError(path + ": bad label '" + token + "' at line " + std::to_string(line_no));
        }
      }
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
    sets.push_back(std::move(set));
  }
  if (sets.empty()) throw DataError(path + ": no prediction sets");
  return sets;
}

struct ScoreFlags {
  std::string family = "APS";
  bool deterministic = false;
  double raps_lambda = 0.0;
  int raps_kreg = 1;
  double saps_weight = 0.2;
  std::uint64_t seed = 0;

  ScoreConfig to_config() const {
    ScoreConfig cfg;
    cfg.family = family_from_name(family);
    cfg.randomized = !deterministic;
    cfg.raps_lambda = raps_lambda;
    cfg.raps_kreg = raps_kreg;
    cfg.saps_weight = saps_weight;
    cfg.seed = seed;
    validate_score_config(cfg);
    return cfg;
  }
};

// Layer config-file defaults under explicitly passed flags.
ScoreConfig score_with_config_defaults(const ExperimentConfig* config, const CLI::App* cmd,
                                       const ScoreFlags& flags) {
  ScoreConfig cfg = config ? config->score : flags.to_config();
  if (cmd->count("--family")) cfg.family = family_from_name(flags.family);
  if (cmd->count("--deterministic")) cfg.randomized = !flags.deterministic;
  if (cmd->count("--raps-lambda")) cfg.raps_lambda = flags.raps_lambda;
  if (cmd->count("--raps-kreg")) cfg.raps_kreg = flags.raps_kreg;
  if (cmd->count("--saps-weight")) cfg.saps_weight = flags.saps_weight;
  cfg.seed = flags.seed;
  validate_score_config(cfg);
  return cfg;
}

void add_score_flags(CLI::App* cmd, ScoreFlags& flags) {
  cmd->add_option("--family", flags.family, "Score family: LAC, APS, RAPS or SAPS");
  cmd->add_flag("--deterministic", flags.deterministic,
                "Use the deterministic score variant (default randomized)");
  cmd->add_option("--raps-lambda", flags.raps_lambda, "RAPS rank penalty");
  cmd->add_option("--raps-kreg", flags.raps_kreg, "RAPS un-penalized rank (1-indexed)");
  cmd->add_option("--saps-weight", flags.saps_weight, "SAPS rank increment");
  cmd->add_option("--seed", flags.seed, "Randomization stream seed");
}

int run_synth(const std::string& config_path, OracleSpec spec, Index n,
              const std::string& out_flag, const std::string& format_name) {
  std::string out_dir_config;
  if (!config_path.empty()) {
    const ExperimentConfig config = load_experiment_config(config_path);
    if (!config.use_synth) throw ConfigError("config has no synth section");
    spec = config.synth;
    n = config.synth_n;
    out_dir_config = config.out_dir;
  }
  const std::string out_dir = resolve_out_dir(out_flag, out_dir_config);
  std::filesystem::create_directories(out_dir);
  const MatrixFormat format = parse_format(format_name);
  const std::string ext = matrix_ext(format);

  const OracleDataset oracle = generate_oracle_dataset(spec, n);
  save_dataset(oracle.data, out_dir + "/embeddings" + ext, out_dir + "/labels.txt",
               out_dir + "/probs" + ext, format);
  save_cluster_ids(oracle.cluster_ids, out_dir + "/cluster_ids.txt");
  save_matrix(oracle.centroids, out_dir + "/true_centroids" + ext, format);

  nlohmann::json echo;
  echo["k_true"] = spec.k_true;
  echo["classes"] = spec.class_count;
  echo["dim"] = spec.dim;
  echo["n"] = n;
  echo["noise_scale"] = spec.noise_scale;
  echo["misspecification"] = spec.misspecification;
  echo["seed"] = spec.seed;
  std::ofstream meta(out_dir + "/synth.json");
  meta << echo.dump(2) << '\n';
  std::cout << "wrote synthetic dataset (" << n << " samples) to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-frequency conformal prediction toolkit"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic oracle dataset");
  std::string synth_config, synth_out, synth_format = "csv";
  OracleSpec synth_spec;
  Index synth_n = 1000;
  synth_cmd->add_option("--config", synth_config, "Experiment config with a synth section");
  synth_cmd->add_option("--out", synth_out, "Output directory");
  synth_cmd->add_option("--format", synth_format, "Matrix file format: csv or binary");
  synth_cmd->add_option("--k-true", synth_spec.k_true, "Ground-truth cluster count");
  synth_cmd->add_option("--classes", synth_spec.class_count, "Class count");
  synth_cmd->add_option("--dim", synth_spec.dim, "Embedding dimension");
  synth_cmd->add_option("--n", synth_n, "Sample count");
  synth_cmd->add_option("--noise", synth_spec.noise_scale, "Within-cluster angular spread");
  synth_cmd->add_option("--misspecification", synth_spec.misspecification,
                        "Uniform mixing weight applied to base probabilities");
  synth_cmd->add_option("--synth-seed", synth_spec.seed, "Generator seed");

  // --- fit ---
  auto* fit_cmd = app.add_subcommand("fit", "Fit the CFCP local model on a statistics split");
  std::string fit_emb, fit_labels, fit_probs, fit_out, fit_format = "auto", fit_prior = "empirical";
  std::string fit_cluster_pool, fit_config;
  CfcpParams fit_params;
  fit_cmd->add_option("--config", fit_config,
                      "Experiment config supplying hyperparameter defaults");
  fit_cmd->add_option("--embeddings", fit_emb)->required();
  fit_cmd->add_option("--labels", fit_labels)->required();
  fit_cmd->add_option("--probs", fit_probs)->required();
  fit_cmd->add_option("--format", fit_format, "Matrix file format: auto, csv or binary");
  fit_cmd->add_option("--out", fit_out, "Model output directory")->required();
  fit_cmd->add_option("--k", fit_params.k, "Cluster count");
  fit_cmd->add_option("--m", fit_params.m, "Neighbors per point");
  fit_cmd->add_option("--tau", fit_params.tau, "Assignment temperature");
  fit_cmd->add_option("--beta", fit_params.beta, "Prior smoothing strength");
  fit_cmd->add_option("--gamma", fit_params.gamma, "Reliability exponent");
  fit_cmd->add_option("--beta-sup", fit_params.beta_sup, "Support shrinkage");
  fit_cmd->add_option("--prior", fit_prior, "Global prior: empirical or mean_base_prob");
  fit_cmd->add_option("--seed", fit_params.seed, "Clustering seed");
  fit_cmd->add_option("--kmeans-max-iters", fit_params.kmeans.max_iters);
  fit_cmd->add_option("--kmeans-tol", fit_params.kmeans.tol);
  fit_cmd->add_option("--cluster-pool", fit_cluster_pool,
                      "Optional separate embedding file to fit the clusters on");

  // --- calibrate ---
  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate a conformal threshold");
  std::string cal_method = "cfcp", cal_model, cal_emb, cal_labels, cal_probs, cal_out;
  std::string cal_format = "auto", cal_config;
  double cal_alpha = 0.1;
  ScoreFlags cal_score;
  cal_cmd->add_option("--config", cal_config, "Experiment config supplying score/alpha defaults");
  cal_cmd->add_option("--method", cal_method, "cfcp, split or mondrian");
  cal_cmd->add_option("--model", cal_model, "Fitted CFCP model directory (cfcp only)");
  cal_cmd->add_option("--embeddings", cal_emb, "Quantile-split embeddings (cfcp only)");
  cal_cmd->add_option("--labels", cal_labels)->required();
  cal_cmd->add_option("--probs", cal_probs)->required();
  cal_cmd->add_option("--format", cal_format);
  cal_cmd->add_option("--alpha", cal_alpha, "Miscoverage level");
  cal_cmd->add_option("--out", cal_out, "Output JSON path")->required();
  add_score_flags(cal_cmd, cal_score);

  // --- predict ---
  auto* pred_cmd = app.add_subcommand("predict", "Build prediction sets for a test split");
  std::string pred_method = "cfcp", pred_model, pred_conformal, pred_emb, pred_probs;
  std::string pred_out, pred_q_out, pred_format = "auto", pred_config;
  pred_cmd->add_option("--config", pred_config, "Experiment config supplying the method default");
  pred_cmd->add_option("--method", pred_method, "cfcp, split or mondrian");
  pred_cmd->add_option("--model", pred_model, "Fitted CFCP model directory (cfcp only)");
  pred_cmd->add_option("--conformal", pred_conformal, "Calibrated threshold JSON")->required();
  pred_cmd->add_option("--embeddings", pred_emb, "Test embeddings (cfcp only)");
  pred_cmd->add_option("--probs", pred_probs)->required();
  pred_cmd->add_option("--format", pred_format);
  pred_cmd->add_option("--out", pred_out, "Prediction sets CSV")->required();
  pred_cmd->add_option("--q-out", pred_q_out, "Optional path for the q matrix");

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "Score prediction sets against labels");
  std::string eval_sets, eval_labels, eval_json, eval_csv, eval_per_class, eval_config;
  int eval_classes = 0, eval_wuc_p = 1;
  double eval_alpha = 0.1;
  eval_cmd->add_option("--config", eval_config, "Experiment config supplying alpha/wuc_p defaults");
  eval_cmd->add_option("--sets", eval_sets)->required();
  eval_cmd->add_option("--labels", eval_labels)->required();
  eval_cmd->add_option("--classes", eval_classes, "Class count")->required();
  eval_cmd->add_option("--alpha", eval_alpha);
  eval_cmd->add_option("--wuc-p", eval_wuc_p, "WUC exponent (1 or 2)");
  eval_cmd->add_option("--out", eval_json, "Report JSON path");
  eval_cmd->add_option("--csv", eval_csv, "Report CSV row path");
  eval_cmd->add_option("--per-class", eval_per_class, "Per-class coverage/size CSV path");

  // --- tune ---
  auto* tune_cmd = app.add_subcommand("tune", "Grid-search CFCP hyperparameters");
  std::string tune_config, tune_out;
  tune_cmd->add_option("--config", tune_config)->required();
  tune_cmd->add_option("--out", tune_out, "Output directory");

  // --- run ---
  auto* run_cmd = app.add_subcommand("run", "Run the full repeated-split protocol");
  std::string run_config, run_out;
  run_cmd->add_option("--config", run_config)->required();
  run_cmd->add_option("--out", run_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth_cmd->parsed()) {
      if (synth_config.empty()) {
        // Flag-driven path: uniform weights and Dirichlet(1) laws derived
        // from the seed, exactly as the config parser builds them.
        nlohmann::json wrapper;
        wrapper["synth"] = {{"k_true", synth_spec.k_true},
                            {"classes", synth_spec.class_count},
                            {"dim", synth_spec.dim},
                            {"noise_scale", synth_spec.noise_scale},
                            {"misspecification", synth_spec.misspecification},
                            {"seed", synth_spec.seed},
                            {"n", synth_n}};
        const ExperimentConfig config = parse_experiment_config(wrapper);
        return run_synth("", config.synth, synth_n, synth_out, synth_format);
      }
      return run_synth(synth_config, synth_spec, synth_n, synth_out, synth_format);
    }

    if (fit_cmd->parsed()) {
      if (!fit_config.empty()) {
        const ExperimentConfig c = load_experiment_config(fit_config);
        if (!fit_cmd->count("--k")) fit_params.k = c.grid.k.front();
        if (!fit_cmd->count("--m")) fit_params.m = c.grid.m.front();
        if (!fit_cmd->count("--tau")) fit_params.tau = c.grid.tau.front();
        if (!fit_cmd->count("--beta")) fit_params.beta = c.grid.beta.front();
        if (!fit_cmd->count("--gamma")) fit_params.gamma = c.grid.gamma.front();
        if (!fit_cmd->count("--beta-sup")) fit_params.beta_sup = c.grid.beta_sup.front();
        if (!fit_cmd->count("--kmeans-max-iters")) fit_params.kmeans.max_iters = c.kmeans.max_iters;
        if (!fit_cmd->count("--kmeans-tol")) fit_params.kmeans.tol = c.kmeans.tol;
        if (!fit_cmd->count("--prior")) {
          fit_prior = c.prior_mode == PriorMode::EmpiricalLabels ? "empirical" : "mean_base_prob";
        }
        if (!fit_cmd->count("--cluster-pool") && c.cluster_pool_path) {
          fit_cluster_pool = *c.cluster_pool_path;
        }
      }
      const MatrixFormat format = parse_format(fit_format);
      Dataset ds = load_dataset(fit_emb, fit_labels, fit_probs, format);
      normalize_rows_in_place(ds.embeddings);
      if (fit_prior == "empirical") {
        fit_params.prior_mode = PriorMode::EmpiricalLabels;
      } else if (fit_prior == "mean_base_prob") {
        fit_params.prior_mode = PriorMode::MeanBaseProb;
      } else {
        throw ConfigError("unknown prior mode: " + fit_prior);
      }
      std::optional<Matrix> pool;
      if (!fit_cluster_pool.empty()) {
        pool = load_matrix(fit_cluster_pool, format);
        normalize_rows_in_place(*pool);
      }
      const CfcpModel model = fit_cfcp(ds.embeddings, ds.labels, ds.base_probs, ds.class_count,
                                       fit_params, pool ? &*pool : nullptr);
      save_cfcp_model(model, fit_out);
      std::cout << "fitted K=" << model.centroids.k() << " clusters ("
                << model.centroids.iterations_run << " iterations, inertia "
                << model.centroids.inertia << "); model written to " << fit_out << "\n";
      return 0;
    }

    if (cal_cmd->parsed()) {
      std::optional<ExperimentConfig> file_config;
      if (!cal_config.empty()) {
        file_config = load_experiment_config(cal_config);
        if (!cal_cmd->count("--method")) cal_method = method_name(file_config->method);
        if (!cal_cmd->count("--alpha")) cal_alpha = file_config->alpha;
      }
      const MatrixFormat format = parse_format(cal_format);
      const ScoreConfig cfg =
          score_with_config_defaults(file_config ? &*file_config : nullptr, cal_cmd, cal_score);
      const IntVector labels = load_labels(cal_labels);
      const Matrix probs = load_matrix(cal_probs, format);
      Matrix q_rows;
      int class_count = static_cast<int>(probs.cols());
      if (cal_method == "cfcp") {
        if (cal_model.empty() || cal_emb.empty()) {
          throw ConfigError("calibrate --method cfcp needs --model and --embeddings");
        }
        const CfcpModel model = load_cfcp_model(cal_model);
        Matrix emb = load_matrix(cal_emb, format);
        normalize_rows_in_place(emb);
        q_rows = predict_q_matrix(model, emb, probs);
        class_count = model.class_count;
      } else if (cal_method == "split" || cal_method == "mondrian") {
        q_rows = probs;
      } else {
        throw ConfigError("unknown method: " + cal_method);
      }
      if (cal_method == "mondrian") {
        const MondrianModel mm =
            mondrian_calibrate_rows(q_rows, labels, class_count, cfg, cal_alpha);
        save_mondrian_model(mm, cal_out);
      } else {
        const ConformalModel cm = calibrate(q_rows, labels, cfg, cal_alpha);
        save_conformal_model(cm, cal_out);
      }
      std::cout << "calibrated on " << q_rows.rows() << " rows; wrote " << cal_out << "\n";
      return 0;
    }

    if (pred_cmd->parsed()) {
      if (!pred_config.empty() && !pred_cmd->count("--method")) {
        pred_method = method_name(load_experiment_config(pred_config).method);
      }
      const MatrixFormat format = parse_format(pred_format);
      const Matrix probs = load_matrix(pred_probs, format);
      Matrix q_rows;
      if (pred_method == "cfcp") {
        if (pred_model.empty() || pred_emb.empty()) {
          throw ConfigError("predict --method cfcp needs --model and --embeddings");
        }
        const CfcpModel model = load_cfcp_model(pred_model);
        Matrix emb = load_matrix(pred_emb, format);
        normalize_rows_in_place(emb);
        q_rows = predict_q_matrix(model, emb, probs);
      } else if (pred_method == "split" || pred_method == "mondrian") {
        q_rows = probs;
      } else {
        throw ConfigError("unknown method: " + pred_method);
      }
      std::vector<std::vector<int>> sets;
      if (pred_method == "mondrian") {
        sets = mondrian_build_sets(q_rows, load_mondrian_model(pred_conformal));
      } else {
        sets = build_sets(q_rows, load_conformal_model(pred_conformal));
      }
      write_sets_csv(sets, pred_out);
      if (!pred_q_out.empty()) {
        save_matrix(q_rows, pred_q_out,
                    format == MatrixFormat::Binary ? MatrixFormat::Binary : MatrixFormat::Csv);
      }
      std::cout << "wrote " << sets.size() << " prediction sets to " << pred_out << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      if (!eval_config.empty()) {
        const ExperimentConfig c = load_experiment_config(eval_config);
        if (!eval_cmd->count("--alpha")) eval_alpha = c.alpha;
        if (!eval_cmd->count("--wuc-p")) eval_wuc_p = c.wuc_p;
      }
      const auto sets = read_sets_csv(eval_sets);
      const IntVector labels = load_labels(eval_labels);
      EvaluationReport report = evaluate_sets(sets, labels, eval_classes, eval_alpha, eval_wuc_p);
      report.method = "external";
      report.score_family = "-";
      if (!eval_json.empty()) {
        std::ofstream out(eval_json);
        if (!out) throw DataError("cannot write " + eval_json);
        out << report_json(report) << '\n';
      }
      if (!eval_csv.empty()) {
        std::ofstream out(eval_csv);
        if (!out) throw DataError("cannot write " + eval_csv);
        out << report_csv_header() << '\n' << report_csv_row(report) << '\n';
      }
      if (!eval_per_class.empty()) {
        std::ofstream out(eval_per_class);
        if (!out) throw DataError("cannot write " + eval_per_class);
        out << "class,count,coverage,avg_size\n";
        for (Index c = 0; c < report.classwise.coverage.size(); ++c) {
          out << c << ',' << report.classwise.counts[static_cast<std::size_t>(c)] << ',';
          if (report.classwise.is_defined(static_cast<int>(c))) {
            out << report.classwise.coverage[c] << ',' << report.class_avg_size[c];
          } else {
            out << "undefined,undefined";
          }
          out << '\n';
        }
      }
      std::cout << "COV " << report.cov << "  Size " << report.avg_size << "  WUC "
                << report.wuc_value << "  MaxCE " << report.maxce_value << "  marginal "
                << report.marginal_coverage << "\n";
      return 0;
    }

    if (tune_cmd->parsed()) {
      const ExperimentConfig config = load_experiment_config(tune_config);
      if (config.method != Method::Cfcp) throw ConfigError("tune applies to method cfcp");
      const std::string out_dir = resolve_out_dir(tune_out, config.out_dir);
      Dataset ds = materialize_dataset(config);
      normalize_rows_in_place(ds.embeddings);

      // Tuning uses the first repeat's splits; the test split is held out
      // exactly as in a full run.
      const std::uint64_t repeat_seed = derive_seed(config.base_seed, 0);
      std::vector<Index> perm(static_cast<std::size_t>(ds.n()));
      std::iota(perm.begin(), perm.end(), Index{0});
      Rng rng(derive_seed(repeat_seed, 0));
      rng.shuffle(perm);
      Index n_test = static_cast<Index>(std::floor(config.test_fraction *
                                                   static_cast<double>(ds.n())));
      n_test = std::max<Index>(1, std::min(n_test, ds.n() - 3));
      const std::vector<Index> pool(perm.begin() + n_test, perm.end());
      SplitSpec split = config.split;
      split.seed = derive_seed(repeat_seed, 1);
      const PoolSplit parts = split_pool(pool, split);

      const GridSearchResult grid =
          grid_search(ds, parts.stat, parts.tune, config, repeat_seed);
      emit_grid_table(grid, config, out_dir);
      std::cout << "evaluated " << grid.table.size() << " grid points; best k=" << grid.best.k
                << " m=" << grid.best.m << " tau=" << grid.best.tau << " beta=" << grid.best.beta
                << " gamma=" << grid.best.gamma << " beta_sup=" << grid.best.beta_sup << "\n";
      return 0;
    }

    if (run_cmd->parsed()) {
      const ExperimentConfig config = load_experiment_config(run_config);
      const std::string out_dir = resolve_out_dir(run_out, config.out_dir);
      const RunResult result = run_experiment(config);
      emit_reports(result, config, out_dir);
      for (const auto& err : result.errors) std::cerr << "warning: " << err << "\n";
      std::cout << "completed " << result.reports.size() << "/" << config.repeats
                << " repeats; reports in " << out_dir << "\n";
      if (result.reports.empty()) {
        std::cerr << "error: every repeat failed\n";
        return 2;
      }
      return result.partial ? 3 : 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
