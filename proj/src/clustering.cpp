#include "cfcp/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfcp/dataset.hpp"
#include "cfcp/rng.hpp"

namespace cfcp {

namespace {

constexpr Index kBlockRows = 4096;

void check_normalized(const Matrix& m, const char* what) {
  for (Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - 1.0) > 1e-6) {
      throw ConfigError(std::string(what) + " must be row-normalized (row " + std::to_string(i) +
                        " has norm " + std::to_string(m.row(i).norm()) + ")");
    }
  }
}

// k-means++ seeding on cosine distance 1 - dot. For unit vectors this equals
// squared Euclidean distance up to the constant factor 2.
Matrix seed_centroids(const Matrix& x, Index k, Rng& rng) {
  const Index n = x.rows();
  Matrix centroids(k, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);

  const Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  centroids.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;

  Vector dist = (1.0 - (x * centroids.row(0).transpose()).array()).cwiseMax(0.0);
  for (Index j = 1; j < k; ++j) {
    const double total = dist.sum();
    Index pick = -1;
    if (total > 1e-12) {
      double r = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        r -= dist[i];
        if (r < 0.0 && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    if (pick < 0) {
      // All remaining mass is on already-chosen (or duplicate) points; fall
      // back to the first unchosen index.
      for (Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = 0;
    }
    centroids.row(j) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
    dist = dist.cwiseMin((1.0 - (x * centroids.row(j).transpose()).array()).cwiseMax(0.0).matrix());
  }
  return centroids;
}

// Assigns every row of x to its most similar centroid (ties to the smaller
// index). Returns the summed similarity of the assignment.
double assign_points(const Matrix& x, const Matrix& centroids, std::vector<Index>& assignment,
                     Vector& assigned_sims) {
  const Index n = x.rows();
  const Index k = centroids.rows();
  double objective = 0.0;
  for (Index start = 0; start < n; start += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - start);
    const Matrix sims = x.middleRows(start, rows) * centroids.transpose();
    for (Index r = 0; r < rows; ++r) {
      Index best = 0;
      double best_sim = sims(r, 0);
      for (Index c = 1; c < k; ++c) {
        if (sims(r, c) > best_sim) {
          best_sim = sims(r, c);
          best = c;
        }
      }
      assignment[static_cast<std::size_t>(start + r)] = best;
      assigned_sims[start + r] = best_sim;
      objective += best_sim;
    }
  }
  return objective;
}

}  // namespace

CentroidSet fit_spherical_kmeans(const Matrix& embeddings, Index k, std::uint64_t seed,
                                 const KMeansOptions& options) {
  const Index n = embeddings.rows();
  if (k < 1) throw ConfigError("k must be at least 1");
  if (k > n) {
    throw ConfigError("k (" + std::to_string(k) + ") exceeds the number of points (" +
                      std::to_string(n) + ")");
  }
  check_normalized(embeddings, "embeddings");

  Rng rng(seed);
  Matrix centroids = seed_centroids(embeddings, k, rng);

  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  Vector assigned_sims(n);
  double prev_objective = -std::numeric_limits<double>::infinity();
  int iterations = 0;

  for (int iter = 0; iter < options.max_iters; ++iter) {
    double objective = assign_points(embeddings, centroids, assignment, assigned_sims);
    if (objective + 1e-9 * static_cast<double>(n) < prev_objective) {
      throw std::logic_error("spherical k-means objective decreased: " +
                             std::to_string(prev_objective) + " -> " + std::to_string(objective));
    }
    prev_objective = objective;

    Matrix sums = Matrix::Zero(k, embeddings.cols());
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += embeddings.row(i);
      counts[assignment[static_cast<std::size_t>(i)]] += 1.0;
    }

    // Empty clusters (or degenerate means) are reseeded to the worst-fit
    // point, which keeps K fixed and cannot lower the objective.
    for (Index c = 0; c < k; ++c) {
      if (counts[c] >= 1.0 && sums.row(c).norm() >= 1e-12) continue;
      Index worst = -1;
      double worst_sim = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) {
        const Index owner = assignment[static_cast<std::size_t>(i)];
        if (owner == c || counts[owner] <= 1.0) continue;
        if (assigned_sims[i] < worst_sim) {
          worst_sim = assigned_sims[i];
          worst = i;
        }
      }
      if (worst < 0) continue;  // nothing stealable; keep previous centroid
      const Index donor = assignment[static_cast<std::size_t>(worst)];
      sums.row(donor) -= embeddings.row(worst);
      counts[donor] -= 1.0;
      sums.row(c) = embeddings.row(worst);
      counts[c] = 1.0;
      assignment[static_cast<std::size_t>(worst)] = c;
      assigned_sims[worst] = 1.0;
    }

    double movement = 0.0;
    for (Index c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm < 1e-12) continue;  // unrepairable empty cluster keeps its centroid
      const RowVector updated = sums.row(c) / norm;
      movement = std::max(movement, (updated - centroids.row(c)).norm());
      centroids.row(c) = updated;
    }
    iterations = iter + 1;
    if (movement < options.tol) break;
  }

  CentroidSet cs;
  cs.centroids = std::move(centroids);
  cs.seed = seed;
  cs.iterations_run = iterations;
  const double final_objective = assign_points(embeddings, cs.centroids, assignment, assigned_sims);
  cs.inertia = final_objective / static_cast<double>(n);
  return cs;
}

namespace {

void select_top_m(const double* sims, Index k, int m, int* out_indices, double* out_sims) {
  thread_local std::vector<int> order;
  order.resize(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  const auto better = [sims](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + m, order.end(), better);
  for (int j = 0; j < m; ++j) {
    out_indices[j] = order[static_cast<std::size_t>(j)];
    out_sims[j] = sims[order[static_cast<std::size_t>(j)]];
  }
}

}  // namespace

NeighborAssignment assign_top_m(const CentroidSet& cs, const Eigen::Ref<const RowVector>& query,
                                int m) {
  const Index k = cs.k();
  if (m < 1 || m > k) {
    throw ConfigError("m (" + std::to_string(m) + ") must lie in [1, K=" + std::to_string(k) + "]");
  }
  if (std::abs(query.norm() - 1.0) > 1e-6) {
    throw ConfigError("query must be normalized (norm " + std::to_string(query.norm()) + ")");
  }
  const Vector sims = cs.centroids * query.transpose();
  NeighborAssignment out;
  out.indices.resize(static_cast<std::size_t>(m));
  out.sims.resize(m);
  select_top_m(sims.data(), k, m, out.indices.data(), out.sims.data());
  return out;
}

TopMBatch assign_top_m_batch(const CentroidSet& cs, const Matrix& queries, int m) {
  const Index k = cs.k();
  const Index n = queries.rows();
  if (m < 1 || m > k) {
    throw ConfigError("m (" + std::to_string(m) + ") must lie in [1, K=" + std::to_string(k) + "]");
  }
  TopMBatch out;
  out.indices.resize(n, m);
  out.sims.resize(n, m);
  // Per-row products keep the arithmetic identical to assign_top_m, so batch
  // and single-query retrieval agree bit for bit.
  Vector sims(k);
  for (Index i = 0; i < n; ++i) {
    sims.noalias() = cs.centroids * queries.row(i).transpose();
    select_top_m(sims.data(), k, m, out.indices.row(i).data(), out.sims.row(i).data());
  }
  return out;
}

void save_centroid_set(const CentroidSet& cs, const std::string& path_prefix) {
  save_matrix_binary(cs.centroids, path_prefix + ".bin");
  nlohmann::json meta;
  meta["k"] = cs.k();
  meta["seed"] = cs.seed;
  meta["iterations_run"] = cs.iterations_run;
  meta["inertia"] = cs.inertia;
  std::ofstream out(path_prefix + ".meta.json");
  if (!out) throw DataError("cannot write " + path_prefix + ".meta.json");
  out << meta.dump(2) << '\n';
}

CentroidSet load_centroid_set(const std::string& path_prefix) {
  CentroidSet cs;
  cs.centroids = load_matrix_binary(path_prefix + ".bin");
  // float32 storage perturbs norms slightly; restore unit rows on load.
  normalize_rows_in_place(cs.centroids);
  std::ifstream in(path_prefix + ".meta.json");
  if (!in) throw DataError("cannot open " + path_prefix + ".meta.json");
  nlohmann::json meta;
  in >> meta;
  if (meta["k"].get<Index>() != cs.k()) {
    throw DataError(path_prefix + ": metadata k does not match centroid rows");
  }
  cs.seed = meta["seed"].get<std::uint64_t>();
  cs.iterations_run = meta["iterations_run"].get<int>();
  cs.inertia = meta["inertia"].get<double>();
  return cs;
}

}  // namespace cfcp
