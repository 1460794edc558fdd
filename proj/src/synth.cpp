#include "cfcp/synth.hpp"

#include <cmath>
#include <fstream>

#include "cfcp/rng.hpp"

namespace cfcp {

namespace {

void check_simplex_row(const Eigen::Ref<const RowVector>& row, const std::string& what) {
  if ((row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-6) {
    throw ConfigError(what + " must lie on the probability simplex");
  }
}

}  // namespace

Matrix random_centroids(int k_true, Index dim, std::uint64_t seed) {
  if (k_true < 1) throw ConfigError("k_true must be at least 1");
  if (dim < 2) throw ConfigError("dim must be at least 2");
  Rng rng(seed);
  Matrix centroids(k_true, dim);
  for (int k = 0; k < k_true; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      RowVector candidate(dim);
      for (Index j = 0; j < dim; ++j) candidate[j] = rng.normal();
      const double norm = candidate.norm();
      if (norm < 1e-12) continue;
      candidate /= norm;
      bool separated = true;
      for (int prev = 0; prev < k; ++prev) {
        if (std::abs(candidate.dot(centroids.row(prev))) >= 0.95) {
          separated = false;
          break;
        }
      }
      if (separated) {
        centroids.row(k) = candidate;
        placed = true;
      }
    }
    if (!placed) {
      throw ConfigError("cannot place " + std::to_string(k_true) + " centroids with pairwise " +
                        "|cosine| < 0.95 in dimension " + std::to_string(dim) +
                        " after 1000 attempts");
    }
  }
  return centroids;
}

OracleDataset generate_oracle_dataset(const OracleSpec& spec, Index n) {
  if (n < 1) throw ConfigError("n must be at least 1");
  if (spec.k_true < 1 || spec.class_count < 1) throw ConfigError("invalid oracle spec");
  if (spec.cluster_laws.rows() != spec.k_true || spec.cluster_laws.cols() != spec.class_count) {
    throw ConfigError("cluster_laws must be k_true x class_count");
  }
  if (spec.cluster_weights.size() != spec.k_true) {
    throw ConfigError("cluster_weights must have k_true entries");
  }
  if (!(spec.noise_scale >= 0.0)) throw ConfigError("noise_scale must be nonnegative");
  if (!(spec.misspecification >= 0.0 && spec.misspecification <= 1.0)) {
    throw ConfigError("misspecification must lie in [0,1]");
  }
  for (int k = 0; k < spec.k_true; ++k) {
    check_simplex_row(spec.cluster_laws.row(k), "cluster law " + std::to_string(k));
  }
  check_simplex_row(spec.cluster_weights.transpose(), "cluster_weights");

  OracleDataset out;
  out.centroids = random_centroids(spec.k_true, spec.dim, derive_seed(spec.seed, 0xC3));
  out.cluster_ids.resize(static_cast<std::size_t>(n));
  out.data.embeddings.resize(n, spec.dim);
  out.data.labels.resize(n);
  out.data.base_probs.resize(n, spec.class_count);
  out.data.class_count = spec.class_count;

  const double mis = spec.misspecification;
  const double uniform_mass = 1.0 / static_cast<double>(spec.class_count);

  Rng rng(derive_seed(spec.seed, 0xDA));
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.sample_discrete(spec.cluster_weights));
    out.cluster_ids[static_cast<std::size_t>(i)] = k;

    if (spec.noise_scale == 0.0) {
      out.data.embeddings.row(i) = out.centroids.row(k);
    } else {
      RowVector noisy = out.centroids.row(k);
      for (Index j = 0; j < spec.dim; ++j) noisy[j] += spec.noise_scale * rng.normal();
      const double norm = noisy.norm();
      if (norm < 1e-12) {
        out.data.embeddings.row(i) = out.centroids.row(k);
      } else {
        out.data.embeddings.row(i) = noisy / norm;
      }
    }

    const Vector law = spec.cluster_laws.row(k).transpose();
    out.data.labels[i] = static_cast<int>(rng.sample_discrete(law));

    if (mis == 0.0) {
      out.data.base_probs.row(i) = spec.cluster_laws.row(k);
    } else {
      out.data.base_probs.row(i) =
          (1.0 - mis) * spec.cluster_laws.row(k).array() + mis * uniform_mass;
    }
  }
  validate_dataset(out.data);
  return out;
}

void save_cluster_ids(const std::vector<int>& ids, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (int id : ids) out << id << '\n';
}

std::vector<int> load_cluster_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<int> ids;
  int v;
  while (in >> v) ids.push_back(v);
  return ids;
}

}  // namespace cfcp
