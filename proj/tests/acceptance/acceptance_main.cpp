// Acceptance suite: statistical guarantees and exact-arithmetic properties,
// one pass/fail line per criterion. Returns the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cfcp/baselines.hpp"
#include "cfcp/conformal.hpp"
#include "cfcp/dataset.hpp"
#include "cfcp/local_model.hpp"
#include "cfcp/metrics.hpp"
#include "cfcp/rng.hpp"
#include "cfcp/synth.hpp"
#include "test_util.hpp"

using namespace cfcp;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Cluster laws built as circular shifts of a base law, two classes apart.
Matrix shifted_laws(const std::vector<double>& base, int k_true, int classes) {
  Matrix laws(k_true, classes);
  for (int k = 0; k < k_true; ++k) {
    for (int c = 0; c < classes; ++c) {
      laws(k, c) = base[static_cast<std::size_t>(((c - 2 * k) % classes + classes) % classes)];
    }
  }
  return laws;
}

OracleSpec oracle_spec(const Matrix& laws, Index dim, std::uint64_t seed, double mis) {
  OracleSpec spec;
  spec.k_true = static_cast<int>(laws.rows());
  spec.class_count = static_cast<int>(laws.cols());
  spec.dim = dim;
  spec.cluster_laws = laws;
  spec.cluster_weights =
      Vector::Constant(laws.rows(), 1.0 / static_cast<double>(laws.rows()));
  spec.noise_scale = 0.0;
  spec.seed = seed;
  spec.misspecification = mis;
  return spec;
}

ScoreConfig family_config(ScoreFamily family, bool randomized, std::uint64_t seed) {
  ScoreConfig cfg;
  cfg.family = family;
  cfg.randomized = randomized;
  cfg.raps_lambda = 0.1;
  cfg.raps_kreg = 2;
  cfg.saps_weight = 0.2;
  cfg.seed = seed;
  return cfg;
}

bool contains(const std::vector<int>& set, int label) {
  return std::find(set.begin(), set.end(), label) != set.end();
}

// ---------------------------------------------------------------------------
// 1. Marginal validity of disjoint-split CFCP under all four score families.
// ---------------------------------------------------------------------------
void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> base{0.32, 0.20, 0.14, 0.10, 0.075, 0.055, 0.042, 0.032, 0.021, 0.015};
  const Matrix laws = shifted_laws(base, 5, 10);
  const int trials = 500;
  const Index n_stat = 3000, n_q = 500, n_test = 2000;
  const double alpha = 0.1;

  const ScoreFamily families[4] = {ScoreFamily::Lac, ScoreFamily::Aps, ScoreFamily::Raps,
                                   ScoreFamily::Saps};
  double coverage_sum[4] = {0, 0, 0, 0};

  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(0xACC1, static_cast<std::uint64_t>(trial));
    const OracleSpec spec = oracle_spec(laws, 16, trial_seed, 0.3);
    const OracleDataset oracle = generate_oracle_dataset(spec, n_stat + n_q + n_test);
    Matrix emb = oracle.data.embeddings;
    normalize_rows_in_place(emb);

    CfcpParams params;
    params.k = 5;
    params.m = 2;
    params.tau = 0.1;
    params.beta = 1.0;
    params.gamma = 1.0;
    params.beta_sup = 20.0;
    params.seed = derive_seed(trial_seed, 1);
    const CfcpModel model = fit_cfcp(emb.topRows(n_stat), oracle.data.labels.head(n_stat),
                                     oracle.data.base_probs.topRows(n_stat), 10, params);

    const Matrix q_cal = predict_q_matrix(model, emb.middleRows(n_stat, n_q),
                                          oracle.data.base_probs.middleRows(n_stat, n_q));
    const Matrix q_test = predict_q_matrix(model, emb.bottomRows(n_test),
                                           oracle.data.base_probs.bottomRows(n_test));
    const IntVector cal_labels = oracle.data.labels.segment(n_stat, n_q);
    const IntVector test_labels = oracle.data.labels.tail(n_test);

    for (int f = 0; f < 4; ++f) {
      const ScoreConfig cfg = family_config(families[f], families[f] != ScoreFamily::Lac,
                                            derive_seed(trial_seed, 10 + static_cast<std::uint64_t>(f)));
      const ConformalModel cm = calibrate(q_cal, cal_labels, cfg, alpha);
      const auto sets = build_sets(q_test, cm);
      Index hits = 0;
      for (Index i = 0; i < n_test; ++i) {
        hits += contains(sets[static_cast<std::size_t>(i)], test_labels[i]) ? 1 : 0;
      }
      coverage_sum[f] += static_cast<double>(hits) / static_cast<double>(n_test);
    }
  }

  const double lo = 0.9 - 0.005;
  const double hi = 0.9 + 1.0 / 501.0 + 0.01;
  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 600.0;
  char detail[256];
  double mean[4];
  for (int f = 0; f < 4; ++f) {
    mean[f] = coverage_sum[f] / trials;
    pass = pass && mean[f] >= lo && mean[f] <= hi;
  }
  std::snprintf(detail, sizeof(detail),
                "mean coverage LAC %.4f, rAPS %.4f, rRAPS %.4f, rSAPS %.4f in [%.4f, %.4f]; "
                "%d trials in %.1f s",
                mean[0], mean[1], mean[2], mean[3], lo, hi, trials, elapsed);
  report(1, "marginal validity of disjoint-split CFCP", pass, detail);
}

// ---------------------------------------------------------------------------
// 2. Conditional uniformity of the randomized APS score.
// ---------------------------------------------------------------------------
void criterion2() {
  int passes = 0;
  double worst = 0.0;
  const double crit = testutil::ks_critical(0.01, 10000);
  for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> scores;
    scores.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
      const Vector q = testutil::random_simplex(gen, 10);
      const int label = testutil::sample_from(q, gen);
      scores.push_back(score_aps(q, label, uni(gen)));
    }
    const double d = testutil::ks_statistic_uniform(scores);
    worst = std::max(worst, d);
    if (d < crit) ++passes;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%d/3 seeds non-rejecting, worst KS %.5f vs %.5f at 0.01",
                passes, worst, crit);
  report(2, "randomized APS conditional uniformity", passes >= 2, detail);
}

// ---------------------------------------------------------------------------
// 3. Oracle local validity: per-true-cluster coverage under randomized APS.
// ---------------------------------------------------------------------------
void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> base{0.7, 0.15, 0.15, 0, 0, 0, 0, 0, 0, 0};
  const Matrix laws = shifted_laws(base, 5, 10);
  const int trials = 200;
  const Index n_stat = 8000, n_q = 500, n_test = 2000;

  Vector cluster_cov_sum = Vector::Zero(5);
  Vector cluster_trials = Vector::Zero(5);
  double tv_sum = 0.0;
  Index tv_count = 0;

  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(0xACC3, static_cast<std::uint64_t>(trial));
    const OracleSpec spec = oracle_spec(laws, 16, trial_seed, 0.0);
    const OracleDataset oracle = generate_oracle_dataset(spec, n_stat + n_q + n_test);
    Matrix emb = oracle.data.embeddings;
    normalize_rows_in_place(emb);

    CfcpParams params;
    params.k = 5;
    params.m = 1;
    params.tau = 0.05;
    params.beta = 2.0;
    params.gamma = 1.0;
    params.beta_sup = 1.0;
    params.seed = derive_seed(trial_seed, 1);
    const CfcpModel model = fit_cfcp(emb.topRows(n_stat), oracle.data.labels.head(n_stat),
                                     oracle.data.base_probs.topRows(n_stat), 10, params);

    const Matrix q_cal = predict_q_matrix(model, emb.middleRows(n_stat, n_q),
                                          oracle.data.base_probs.middleRows(n_stat, n_q));
    const Matrix q_test = predict_q_matrix(model, emb.bottomRows(n_test),
                                           oracle.data.base_probs.bottomRows(n_test));
    const IntVector cal_labels = oracle.data.labels.segment(n_stat, n_q);
    const IntVector test_labels = oracle.data.labels.tail(n_test);

    // Premise check: the CFCP vector must track the true cluster law.
    for (Index i = 0; i < n_test; i += 40) {
      const int k = oracle.cluster_ids[static_cast<std::size_t>(n_stat + n_q + i)];
      tv_sum += 0.5 * (q_test.row(i).transpose() - laws.row(k).transpose()).cwiseAbs().sum();
      ++tv_count;
    }

    const ScoreConfig cfg = family_config(ScoreFamily::Aps, true, derive_seed(trial_seed, 2));
    const ConformalModel cm = calibrate(q_cal, cal_labels, cfg, 0.1);
    const auto sets = build_sets(q_test, cm);

    Vector hits = Vector::Zero(5), counts = Vector::Zero(5);
    for (Index i = 0; i < n_test; ++i) {
      const int k = oracle.cluster_ids[static_cast<std::size_t>(n_stat + n_q + i)];
      counts[k] += 1.0;
      hits[k] += contains(sets[static_cast<std::size_t>(i)], test_labels[i]) ? 1.0 : 0.0;
    }
    for (int k = 0; k < 5; ++k) {
      if (counts[k] > 0) {
        cluster_cov_sum[k] += hits[k] / counts[k];
        cluster_trials[k] += 1.0;
      }
    }
  }

  bool pass = true;
  double worst = 1.0;
  for (int k = 0; k < 5; ++k) {
    const double cov = cluster_cov_sum[k] / cluster_trials[k];
    worst = std::min(worst, cov);
    pass = pass && cov >= 0.9 - 0.02;
  }
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "worst per-cluster coverage %.4f vs 0.8800 over %d trials; mean TV(q, p_k) %.4f; "
                "%.1f s",
                worst, trials, tv_sum / static_cast<double>(tv_count), seconds_since(t0));
  report(3, "oracle local validity per true cluster (randomized APS)", pass, detail);
}

// ---------------------------------------------------------------------------
// 4. Backoff equivalence: beta_sup = 1e12 reproduces the Split baseline.
// ---------------------------------------------------------------------------
void criterion4() {
  std::mt19937_64 gen(0xACC4);
  const Index n_stat = 1000, n_q = 500, n_test = 2000;
  const testutil::ContinuousData data =
      testutil::continuous_dataset(gen, n_stat + n_q + n_test, 10, 8);

  CfcpParams params;
  params.k = 8;
  params.m = 3;
  params.tau = 0.1;
  params.beta = 1.0;
  params.gamma = 1.0;
  params.beta_sup = 1e12;
  params.seed = 5;
  const CfcpModel model = fit_cfcp(data.embeddings.topRows(n_stat), data.labels.head(n_stat),
                                   data.probs.topRows(n_stat), 8, params);
  const Matrix q_cal = predict_q_matrix(model, data.embeddings.middleRows(n_stat, n_q),
                                        data.probs.middleRows(n_stat, n_q));
  const Matrix q_test =
      predict_q_matrix(model, data.embeddings.bottomRows(n_test), data.probs.bottomRows(n_test));
  const IntVector cal_labels = data.labels.segment(n_stat, n_q);

  const ScoreFamily families[4] = {ScoreFamily::Lac, ScoreFamily::Aps, ScoreFamily::Raps,
                                   ScoreFamily::Saps};
  bool pass = true;
  Index mismatches = 0;
  for (const ScoreFamily family : families) {
    const ScoreConfig cfg = family_config(family, family != ScoreFamily::Lac, 0xBEEF);
    const ConformalModel cm = calibrate(q_cal, cal_labels, cfg, 0.1);
    const auto cfcp_sets = build_sets(q_test, cm);
    const SplitResult split = split_baseline(data.probs.middleRows(n_stat, n_q), cal_labels,
                                             data.probs.bottomRows(n_test), cfg, 0.1);
    for (Index i = 0; i < n_test; ++i) {
      if (cfcp_sets[static_cast<std::size_t>(i)] != split.sets[static_cast<std::size_t>(i)]) {
        ++mismatches;
      }
    }
  }
  pass = mismatches == 0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%lld mismatching sets across 4 families x %lld test points",
                static_cast<long long>(mismatches), static_cast<long long>(n_test));
  report(4, "backoff equivalence to the Split baseline", pass, detail);
}

// ---------------------------------------------------------------------------
// 5. Score-family exactness by brute-force enumeration.
// ---------------------------------------------------------------------------
void criterion5() {
  std::mt19937_64 gen(0xACC5);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Index raps_neq = 0, top_neq = 0, lac_neq = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Index c = 2 + static_cast<Index>(gen() % 5);
    const Vector q = testutil::random_simplex(gen, c);
    const int label = static_cast<int>(gen() % c);
    const int kreg = 1 + static_cast<int>(gen() % 3);

    // RAPS(lambda=0) must be bitwise APS, deterministic and randomized.
    const double u = uni(gen);
    if (score_raps(q, label, std::nullopt, 0.0, kreg) != score_aps(q, label)) ++raps_neq;
    if (score_raps(q, label, u, 0.0, kreg) != score_aps(q, label, u)) ++raps_neq;

    // Deterministic APS of the top-ranked label is its own probability.
    const LabelRanking ranking = rank_labels(q);
    if (score_aps(q, ranking.order[0]) != q[ranking.order[0]]) ++top_neq;

    // LAC membership is exactly the threshold inequality; exercise exact
    // boundaries by drawing the threshold from the score set half the time.
    ConformalModel model;
    model.score.family = ScoreFamily::Lac;
    model.score.randomized = false;
    model.threshold = (trial % 2 == 0) ? score_lac(q, static_cast<int>(gen() % c))
                                       : 1.2 * uni(gen) - 0.1;
    const auto set = build_set(q, model);
    std::vector<int> oracle;
    for (int y = 0; y < c; ++y) {
      if (score_lac(q, y) <= model.threshold) oracle.push_back(y);
    }
    if (oracle.empty()) {
      Index argmax;
      q.maxCoeff(&argmax);
      oracle.push_back(static_cast<int>(argmax));
    }
    if (set != oracle) ++lac_neq;
  }
  const bool pass = raps_neq == 0 && top_neq == 0 && lac_neq == 0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "RAPS(0)!=APS: %lld, APS(top)!=q(top): %lld, LAC membership mismatches: %lld over "
                "10000 vectors",
                static_cast<long long>(raps_neq), static_cast<long long>(top_neq),
                static_cast<long long>(lac_neq));
  report(5, "score-family exactness", pass, detail);
}

// ---------------------------------------------------------------------------
// 6. Quantile oracle: order statistic against a full sort.
// ---------------------------------------------------------------------------
void criterion6() {
  std::mt19937_64 gen(0xACC6);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Index mismatches = 0, sentinels = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + gen() % 300;
    std::vector<double> scores(n);
    const int flavor = trial % 3;
    for (auto& s : scores) {
      if (flavor == 0) {
        s = uni(gen);
      } else if (flavor == 1) {
        s = std::floor(uni(gen) * 4.0);  // duplicate-heavy
      } else {
        s = uni(gen) * 1e-3;  // tightly packed
      }
    }
    const double alpha = 0.01 + 0.98 * uni(gen);
    const double got = calibrate_threshold(scores, alpha);

    const double x = (static_cast<double>(n) + 1.0) * (1.0 - alpha);
    const auto k = static_cast<std::size_t>(std::ceil(x - 1e-12 * x));
    if (k > n) {
      ++sentinels;
      if (!std::isinf(got)) ++mismatches;
    } else if (got != testutil::kth_smallest(scores, k)) {
      ++mismatches;
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "%lld mismatches over 10000 vectors (%lld degenerate sentinel cases)",
                static_cast<long long>(mismatches), static_cast<long long>(sentinels));
  report(6, "quantile order-statistic oracle", mismatches == 0 && sentinels > 0, detail);
}

// ---------------------------------------------------------------------------
// 7. Metric identities and worked examples.
// ---------------------------------------------------------------------------
ClasswiseCoverage classwise_of(const std::vector<double>& coverages) {
  ClasswiseCoverage cw;
  cw.coverage.resize(static_cast<Index>(coverages.size()));
  cw.counts.assign(coverages.size(), 1);
  cw.defined = static_cast<int>(coverages.size());
  for (std::size_t i = 0; i < coverages.size(); ++i) {
    cw.coverage[static_cast<Index>(i)] = coverages[i];
  }
  return cw;
}

void criterion7() {
  std::mt19937_64 gen(0xACC7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double alpha = 0.1;
  Index identity_fails = 0, bound_fails = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t c = 1 + gen() % 10;
    std::vector<double> coverages(c);
    for (auto& v : coverages) {
      const int kind = static_cast<int>(gen() % 4);
      v = kind == 0 ? 0.9 : (kind == 1 ? 0.9 + 0.1 * uni(gen) : uni(gen));
    }
    const ClasswiseCoverage cw = classwise_of(coverages);
    const Vector weights = Vector::Constant(static_cast<Index>(c), 1.0 / static_cast<double>(c));
    const double cov = cov_fraction(cw, alpha);
    const double w1 = wuc(cw, weights, alpha, 1);
    const double mce = maxce(cw, alpha);
    if (((cov == 1.0) != (w1 == 0.0)) || ((cov == 1.0) != (mce == 0.0))) ++identity_fails;
    if (w1 > mce + 1e-15) ++bound_fails;
  }

  // Worked examples.
  const double cov_example = cov_fraction(classwise_of({0.95, 0.85, 0.92}), alpha);
  Vector half = Vector::Constant(2, 0.5);
  const double wuc_example = wuc(classwise_of({0.85, 0.95}), half, alpha, 1);
  const double maxce_example = maxce(classwise_of({0.85, 0.95}), alpha);
  const bool examples_ok = cov_example == 2.0 / 3.0 &&
                           std::abs(wuc_example - 0.025) < 1e-15 &&
                           std::abs(maxce_example - 0.05) < 1e-15;

  const bool pass = identity_fails == 0 && bound_fails == 0 && examples_ok;
  char detail[220];
  std::snprintf(detail, sizeof(detail),
                "identity violations %lld, WUC<=MaxCE violations %lld over 10000 vectors; "
                "examples COV %.6f WUC %.6f MaxCE %.6f",
                static_cast<long long>(identity_fails), static_cast<long long>(bound_fails),
                cov_example, wuc_example, maxce_example);
  report(7, "metric identities and worked examples", pass, detail);
}

// ---------------------------------------------------------------------------
// 8. Mondrian classwise guarantee on exchangeable oracle data.
// ---------------------------------------------------------------------------
void criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  const int classes = 10;
  Matrix laws(classes, classes);
  for (int k = 0; k < classes; ++k) {
    for (int c = 0; c < classes; ++c) laws(k, c) = (k == c) ? 0.7 : 0.3 / 9.0;
  }
  const int trials = 200;
  const Index n_cal = 4000, n_test = 4000;

  Vector cov_sum = Vector::Zero(classes);
  Index premise_violations = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(0xACC8, static_cast<std::uint64_t>(trial));
    const OracleSpec spec = oracle_spec(laws, 16, trial_seed, 0.3);
    const OracleDataset oracle = generate_oracle_dataset(spec, n_cal + n_test);

    const Matrix cal_probs = oracle.data.base_probs.topRows(n_cal);
    const IntVector cal_labels = oracle.data.labels.head(n_cal);
    const Matrix test_probs = oracle.data.base_probs.bottomRows(n_test);
    const IntVector test_labels = oracle.data.labels.tail(n_test);

    const ScoreConfig cfg = family_config(ScoreFamily::Aps, true, derive_seed(trial_seed, 2));
    const MondrianModel mm = mondrian_calibrate_rows(cal_probs, cal_labels, classes, cfg, 0.1);
    for (Index n_c : mm.class_counts) {
      if (n_c < 100) ++premise_violations;
    }
    const auto sets = mondrian_build_sets(test_probs, mm);

    Vector hits = Vector::Zero(classes), counts = Vector::Zero(classes);
    for (Index i = 0; i < n_test; ++i) {
      counts[test_labels[i]] += 1.0;
      hits[test_labels[i]] += contains(sets[static_cast<std::size_t>(i)], test_labels[i]) ? 1 : 0;
    }
    for (int c = 0; c < classes; ++c) cov_sum[c] += hits[c] / counts[c];
  }

  double worst = 1.0;
  for (int c = 0; c < classes; ++c) worst = std::min(worst, cov_sum[c] / trials);
  const bool pass = worst >= 0.9 - 0.02 && premise_violations == 0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "worst classwise coverage %.4f vs 0.8800 over %d trials (all n_c >= 100: %s); "
                "%.1f s",
                worst, trials, premise_violations == 0 ? "yes" : "no", seconds_since(t0));
  report(8, "Mondrian classwise coverage guarantee", pass, detail);
}

// ---------------------------------------------------------------------------
// 9. Complexity contract: retrieval scales ~linearly in K, clustering in n.
// ---------------------------------------------------------------------------
Matrix random_unit_matrix(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = rng.normal();
  }
  normalize_rows_in_place(m);
  return m;
}

double best_of_three(const std::function<void()>& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void criterion9() {
  const Index d = 128;
  const Matrix queries = random_unit_matrix(100000, d, 0xACC9);
  CentroidSet small_set, large_set;
  small_set.centroids = random_unit_matrix(128, d, 1);
  large_set.centroids = random_unit_matrix(256, d, 2);

  volatile double sink = 0.0;
  const double t_small = best_of_three([&] {
    const TopMBatch top = assign_top_m_batch(small_set, queries, 10);
    sink = sink + top.sims(0, 0);
  });
  const double t_large = best_of_three([&] {
    const TopMBatch top = assign_top_m_batch(large_set, queries, 10);
    sink = sink + top.sims(0, 0);
  });
  const double retrieval_ratio = t_large / t_small;

  const Matrix train_small = random_unit_matrix(50000, 64, 3);
  const Matrix train_large = random_unit_matrix(100000, 64, 4);
  KMeansOptions one_pass;
  one_pass.max_iters = 1;
  const double c_small = best_of_three([&] {
    const CentroidSet cs = fit_spherical_kmeans(train_small, 64, 7, one_pass);
    sink = sink + cs.inertia;
  });
  const double c_large = best_of_three([&] {
    const CentroidSet cs = fit_spherical_kmeans(train_large, 64, 7, one_pass);
    sink = sink + cs.inertia;
  });
  const double clustering_ratio = c_large / c_small;

  const bool pass = retrieval_ratio <= 2.5 && clustering_ratio <= 3.0;
  char detail[220];
  std::snprintf(detail, sizeof(detail),
                "retrieval K 128->256: %.2fx (%.2fs -> %.2fs, limit 2.5); one-pass clustering "
                "n 50k->100k: %.2fx (limit 3.0)",
                retrieval_ratio, t_small, t_large, clustering_ratio);
  report(9, "complexity contract for retrieval and clustering", pass, detail);
}

// ---------------------------------------------------------------------------
// 10. Pipeline consistency: q_x tracks the true cluster law.
// ---------------------------------------------------------------------------
void criterion10() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> base{0.7, 0.15, 0.15, 0, 0, 0, 0, 0, 0, 0};
  const Matrix laws = shifted_laws(base, 5, 10);
  const Index n_stat = 20000, n_test = 2000;

  const OracleSpec spec = oracle_spec(laws, 16, 0xACCA, 0.5);
  const OracleDataset oracle = generate_oracle_dataset(spec, n_stat + n_test);
  Matrix emb = oracle.data.embeddings;
  normalize_rows_in_place(emb);

  CfcpParams params;
  params.k = 5;
  params.m = 1;
  params.tau = 0.05;
  params.beta = 2.0;
  params.gamma = 1.0;
  params.beta_sup = 1.0;
  params.seed = 31;
  const CfcpModel model = fit_cfcp(emb.topRows(n_stat), oracle.data.labels.head(n_stat),
                                   oracle.data.base_probs.topRows(n_stat), 10, params);
  const Matrix q_test = predict_q_matrix(model, emb.bottomRows(n_test),
                                         oracle.data.base_probs.bottomRows(n_test));

  Index within = 0;
  double worst_tv = 0.0;
  for (Index i = 0; i < n_test; ++i) {
    const int k = oracle.cluster_ids[static_cast<std::size_t>(n_stat + i)];
    const double tv = 0.5 * (q_test.row(i).transpose() - laws.row(k).transpose()).cwiseAbs().sum();
    worst_tv = std::max(worst_tv, tv);
    if (tv < 0.02) ++within;
  }
  const double fraction = static_cast<double>(within) / static_cast<double>(n_test);
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "TV(q, p_k) < 0.02 for %.1f%% of %lld test points (need >= 95%%, worst TV %.4f); "
                "%.1f s",
                100.0 * fraction, static_cast<long long>(n_test), worst_tv, seconds_since(t0));
  report(10, "pipeline consistency against the oracle law", fraction >= 0.95, detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  std::printf("acceptance: %d criterion(s) failed; total %.1f s\n", g_failures,
              seconds_since(t0));
  return g_failures;
}
