#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfcp/types.hpp"

namespace cfcp {

/// Fitted spherical k-means centroids. Rows are unit norm.
struct CentroidSet {
  Matrix centroids;  // K x d
  std::uint64_t seed = 0;
  int iterations_run = 0;
  double inertia = 0.0;  // mean cosine similarity of points to assigned centroid

  Index k() const { return centroids.rows(); }
  Index dim() const { return centroids.cols(); }
};

struct KMeansOptions {
  int max_iters = 100;
  double tol = 1e-4;  // max centroid displacement
};

/// Spherical k-means with k-means++ style seeding on cosine distance (1 - dot)
/// and empty-cluster repair. Requires row-normalized embeddings and 1 <= k <= n.
/// Deterministic given the seed. The assignment objective (sum of assigned
/// cosine similarities) is checked to be non-decreasing every iteration.
CentroidSet fit_spherical_kmeans(const Matrix& embeddings, Index k, std::uint64_t seed,
                                 const KMeansOptions& options = {});

/// Top-m nearest centroids for one query, descending similarity, exact ties
/// broken by smaller centroid index.
struct NeighborAssignment {
  std::vector<int> indices;
  Vector sims;
};

NeighborAssignment assign_top_m(const CentroidSet& cs, const Eigen::Ref<const RowVector>& query,
                                int m);

/// Batch retrieval over many queries; similarity scan done blockwise.
struct TopMBatch {
  Mat<int> indices;  // n x m
  Matrix sims;       // n x m
};

TopMBatch assign_top_m_batch(const CentroidSet& cs, const Matrix& queries, int m);

/// Persists centroids as the binary matrix format plus "<prefix>.meta.json"
/// with k, seed, iterations_run and inertia.
void save_centroid_set(const CentroidSet& cs, const std::string& path_prefix);
CentroidSet load_centroid_set(const std::string& path_prefix);

}  // namespace cfcp
