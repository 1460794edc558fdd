#pragma once

#include <cstdint>
#include <vector>

#include "cfcp/dataset.hpp"
#include "cfcp/types.hpp"

namespace cfcp {

/// Piecewise-constant cluster oracle: a mixture of k_true regions, each with
/// its own label law. With noise_scale 0 every embedding equals its region
/// centroid exactly, so the oracle partition is recoverable by exact match.
struct OracleSpec {
  int k_true = 2;
  int class_count = 2;
  Index dim = 2;
  Matrix cluster_laws;     // k_true x C, simplex rows
  Vector cluster_weights;  // k_true, simplex
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
  /// Mixing weight toward the uniform distribution applied to the emitted
  /// base probabilities (0 = oracle base model).
  double misspecification = 0.0;
};

/// Unit-norm rows with pairwise |cosine similarity| < 0.95, resampled row by
/// row; errors after 1000 attempts for a row.
Matrix random_centroids(int k_true, Index dim, std::uint64_t seed);

struct OracleDataset {
  Dataset data;
  std::vector<int> cluster_ids;  // ground-truth region per sample
  Matrix centroids;              // k_true x d
};

/// Draws n i.i.d. samples: region ~ cluster_weights, embedding = normalized
/// centroid + noise (exact centroid copy when noise_scale is 0), label ~ the
/// region law, base probability row = the region law optionally mixed with
/// uniform. Reproducible bit for bit given the spec.
OracleDataset generate_oracle_dataset(const OracleSpec& spec, Index n);

void save_cluster_ids(const std::vector<int>& ids, const std::string& path);
std::vector<int> load_cluster_ids(const std::string& path);

}  // namespace cfcp
