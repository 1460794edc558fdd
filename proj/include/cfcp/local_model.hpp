#pragma once

#include <cstdint>
#include <string>

#include "cfcp/clustering.hpp"
#include "cfcp/types.hpp"

namespace cfcp {

/// Soft cluster-label counts N_kc with effective supports S_k and the global
/// prior used for smoothing. Every stat point contributes total weight 1, so
/// supports sum to the stat-set size.
struct FrequencyModel {
  Matrix counts;        // K x C
  Vector supports;      // K (row sums of counts)
  Vector global_prior;  // C, on the simplex
  double beta = 1.0;    // smoothing strength toward the prior
};

struct ReliabilityParams {
  double gamma = 1.0;     // exponent on the top assignment weight
  double beta_sup = 1.0;  // support shrinkage
};

/// Per-sample output of the local model.
struct LocalDistribution {
  Vector q;        // final blended probability vector
  Vector q_local;  // cluster-frequency mixture before reliability shrinkage
  double reliability = 0.0;
  NeighborAssignment neighbor;
};

/// Softmax of sims / tau with max-subtraction. tau > 0.
Vector soft_weights(const Vector& sims, double tau);

/// Soft counts accumulated over the stat set: each point spreads weight 1
/// across its top-m centroids. Returns counts (K x C) and supports (K).
struct CountAccumulation {
  Matrix counts;
  Vector supports;
};
CountAccumulation accumulate_counts(const Matrix& stat_embeddings, const IntVector& stat_labels,
                                    int class_count, const CentroidSet& cs, int m, double tau);

/// Smoothed per-cluster label distribution (N_kc + beta*pi_c) / (S_k + beta).
/// A cluster with zero support returns the prior itself.
Vector cluster_distribution(const Eigen::Ref<const RowVector>& counts_row, double support,
                            const Vector& prior, double beta);

/// Convex mixture of cluster distributions (rows of dists) under weights.
Vector local_mixture(const Vector& weights, const Matrix& dists);

/// conf = (max_j w_j)^gamma, sup = sum_j w_j S_kj, supw = sup/(sup+beta_sup),
/// r = conf * supw in [0,1].
double reliability_weight(const Vector& weights, const Vector& neighbor_supports,
                          const ReliabilityParams& params);

/// q = r * q_local + (1-r) * fallback. Drift beyond 1e-6 off the simplex is an
/// error; drift beyond 1e-9 is silently renormalized.
Vector blend(const Vector& q_local, const Vector& fallback_prior, double r);

enum class PriorMode { EmpiricalLabels, MeanBaseProb };

struct CfcpParams {
  Index k = 10;
  int m = 1;
  double tau = 0.1;
  double beta = 1.0;
  double gamma = 1.0;
  double beta_sup = 1.0;
  PriorMode prior_mode = PriorMode::EmpiricalLabels;
  KMeansOptions kmeans;
  std::uint64_t seed = 0;
};

/// Fitted CFCP local model: centroids, frequency statistics and the cached
/// per-cluster smoothed distributions.
struct CfcpModel {
  CentroidSet centroids;
  FrequencyModel freq;
  Matrix cluster_dists;  // K x C, row k = cluster_distribution of cluster k
  int m = 1;
  double tau = 0.1;
  ReliabilityParams rel;
  PriorMode prior_mode = PriorMode::EmpiricalLabels;
  int class_count = 0;
};

/// Fits clusters and frequency statistics on the stat set. Embeddings must be
/// row-normalized. When cluster_pool is non-null, clustering runs on it
/// instead of the stat embeddings (counting always uses the stat set).
CfcpModel fit_cfcp(const Matrix& stat_embeddings, const IntVector& stat_labels,
                   const Matrix& stat_base_probs, int class_count, const CfcpParams& params,
                   const Matrix* cluster_pool = nullptr);

/// The full per-sample composition: retrieval, soft weights, local mixture,
/// reliability and blending with the base-model row. Pure and deterministic.
LocalDistribution predict_q(const CfcpModel& model, const Eigen::Ref<const RowVector>& embedding,
                            const Eigen::Ref<const RowVector>& base_prob_row);

/// Row-wise predict_q over a batch; optionally reports reliabilities.
Matrix predict_q_matrix(const CfcpModel& model, const Matrix& embeddings,
                        const Matrix& base_probs, Vector* reliabilities = nullptr);

void save_cfcp_model(const CfcpModel& model, const std::string& dir);
CfcpModel load_cfcp_model(const std::string& dir);

}  // namespace cfcp
