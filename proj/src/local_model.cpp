#include "cfcp/local_model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cfcp/dataset.hpp"

namespace cfcp {

namespace {

void check_simplex(const Vector& v, const char* what, double tol = 1e-6) {
  if ((v.array() < -tol).any() || std::abs(v.sum() - 1.0) > tol) {
    throw ConfigError(std::string(what) + " must lie on the probability simplex (sum " +
                      std::to_string(v.sum()) + ")");
  }
}

}  // namespace

Vector soft_weights(const Vector& sims, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive; got " + std::to_string(tau));
  if (sims.size() < 1) throw ConfigError("soft_weights needs at least one similarity");
  const double max_sim = sims.maxCoeff();
  Vector w = ((sims.array() - max_sim) / tau).exp();
  w /= w.sum();
  return w;
}

CountAccumulation accumulate_counts(const Matrix& stat_embeddings, const IntVector& stat_labels,
                                    int class_count, const CentroidSet& cs, int m, double tau) {
  const Index n = stat_embeddings.rows();
  if (n < 1) throw ConfigError("stat set is empty");
  if (stat_labels.size() != n) throw DataError("stat labels and embeddings disagree in length");
  for (Index i = 0; i < n; ++i) {
    if (stat_labels[i] < 0 || stat_labels[i] >= class_count) {
      throw DataError("stat label out of range at row " + std::to_string(i));
    }
  }

  CountAccumulation acc;
  acc.counts = Matrix::Zero(cs.k(), class_count);
  acc.supports = Vector::Zero(cs.k());

  const TopMBatch top = assign_top_m_batch(cs, stat_embeddings, m);
  for (Index i = 0; i < n; ++i) {
    const Vector w = soft_weights(top.sims.row(i).transpose(), tau);
    for (int j = 0; j < m; ++j) {
      const int k = top.indices(i, j);
      acc.counts(k, stat_labels[i]) += w[j];
      acc.supports[k] += w[j];
    }
  }
  return acc;
}

Vector cluster_distribution(const Eigen::Ref<const RowVector>& counts_row, double support,
                            const Vector& prior, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive; got " + std::to_string(beta));
  if (counts_row.size() != prior.size()) {
    throw ConfigError("counts row and prior disagree in length");
  }
  check_simplex(prior, "prior");
  if ((counts_row.array() < 0.0).any()) throw ConfigError("counts must be nonnegative");
  if (std::abs(counts_row.sum() - support) > 1e-6 * std::max(1.0, support)) {
    throw ConfigError("counts row sum does not match support");
  }
  if (support == 0.0) return prior;  // no-data shrinkage limit, prior verbatim
  return (counts_row.transpose().array() + beta * prior.array()) / (support + beta);
}

Vector local_mixture(const Vector& weights, const Matrix& dists) {
  if (weights.size() != dists.rows()) {
    throw ConfigError("weights length " + std::to_string(weights.size()) +
                      " does not match distribution count " + std::to_string(dists.rows()));
  }
  return dists.transpose() * weights;
}

double reliability_weight(const Vector& weights, const Vector& neighbor_supports,
                          const ReliabilityParams& params) {
  if (!(params.gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(params.beta_sup > 0.0)) throw ConfigError("beta_sup must be positive");
  if (weights.size() != neighbor_supports.size()) {
    throw ConfigError("weights and supports disagree in length");
  }
  const double conf = std::pow(weights.maxCoeff(), params.gamma);
  const double sup = weights.dot(neighbor_supports);
  const double supw = sup / (sup + params.beta_sup);
  return conf * supw;
}

Vector blend(const Vector& q_local, const Vector& fallback_prior, double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ConfigError("reliability must lie in [0,1]; got " + std::to_string(r));
  }
  if (q_local.size() != fallback_prior.size()) {
    throw ConfigError("q_local and fallback prior disagree in length");
  }
  Vector q = r * q_local + (1.0 - r) * fallback_prior;
  const double drift = std::abs(q.sum() - 1.0);
  if (drift > 1e-6) {
    throw std::logic_error("blended vector off the simplex by " + std::to_string(drift));
  }
  if (drift > 1e-9) q /= q.sum();
  return q;
}

CfcpModel fit_cfcp(const Matrix& stat_embeddings, const IntVector& stat_labels,
                   const Matrix& stat_base_probs, int class_count, const CfcpParams& params,
                   const Matrix* cluster_pool) {
  if (class_count < 1) throw ConfigError("class count must be at least 1");
  if (params.m < 1 || static_cast<Index>(params.m) > params.k) {
    throw ConfigError("m must lie in [1, k]");
  }

  CfcpModel model;
  const Matrix& pool = cluster_pool ? *cluster_pool : stat_embeddings;
  model.centroids = fit_spherical_kmeans(pool, params.k, params.seed, params.kmeans);

  const CountAccumulation acc =
      accumulate_counts(stat_embeddings, stat_labels, class_count, model.centroids, params.m,
                        params.tau);
  model.freq.counts = acc.counts;
  model.freq.supports = acc.supports;
  model.freq.beta = params.beta;

  if (params.prior_mode == PriorMode::EmpiricalLabels) {
    Vector prior = Vector::Zero(class_count);
    for (Index i = 0; i < stat_labels.size(); ++i) prior[stat_labels[i]] += 1.0;
    model.freq.global_prior = prior / prior.sum();
  } else {
    if (stat_base_probs.rows() != stat_labels.size() || stat_base_probs.cols() != class_count) {
      throw DataError("base probabilities unavailable for mean-probability prior");
    }
    Vector prior = stat_base_probs.colwise().mean();
    model.freq.global_prior = prior / prior.sum();
  }

  model.cluster_dists.resize(model.centroids.k(), class_count);
  for (Index k = 0; k < model.centroids.k(); ++k) {
    model.cluster_dists.row(k) =
        cluster_distribution(model.freq.counts.row(k), model.freq.supports[k],
                             model.freq.global_prior, model.freq.beta)
            .transpose();
  }

  model.m = params.m;
  model.tau = params.tau;
  model.rel = ReliabilityParams{params.gamma, params.beta_sup};
  model.prior_mode = params.prior_mode;
  model.class_count = class_count;
  return model;
}

LocalDistribution predict_q(const CfcpModel& model, const Eigen::Ref<const RowVector>& embedding,
                            const Eigen::Ref<const RowVector>& base_prob_row) {
  LocalDistribution out;
  out.neighbor = assign_top_m(model.centroids, embedding, model.m);

  const Vector weights = soft_weights(out.neighbor.sims, model.tau);

  Matrix dists(model.m, model.class_count);
  Vector supports(model.m);
  for (int j = 0; j < model.m; ++j) {
    const int k = out.neighbor.indices[static_cast<std::size_t>(j)];
    dists.row(j) = model.cluster_dists.row(k);
    supports[j] = model.freq.supports[k];
  }

  out.q_local = local_mixture(weights, dists);
  out.reliability = reliability_weight(weights, supports, model.rel);
  out.q = blend(out.q_local, base_prob_row.transpose(), out.reliability);
  return out;
}

Matrix predict_q_matrix(const CfcpModel& model, const Matrix& embeddings,
                        const Matrix& base_probs, Vector* reliabilities) {
  const Index n = embeddings.rows();
  if (base_probs.rows() != n) throw DataError("embeddings and base probabilities disagree in rows");
  Matrix q(n, model.class_count);
  if (reliabilities) reliabilities->resize(n);
  for (Index i = 0; i < n; ++i) {
    const LocalDistribution d = predict_q(model, embeddings.row(i), base_probs.row(i));
    q.row(i) = d.q.transpose();
    if (reliabilities) (*reliabilities)[i] = d.reliability;
  }
  return q;
}

void save_cfcp_model(const CfcpModel& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_centroid_set(model.centroids, dir + "/centroids");
  save_matrix_binary(model.freq.counts, dir + "/counts.bin");

  nlohmann::json meta;
  meta["beta"] = model.freq.beta;
  meta["gamma"] = model.rel.gamma;
  meta["beta_sup"] = model.rel.beta_sup;
  meta["tau"] = model.tau;
  meta["m"] = model.m;
  meta["prior_mode"] =
      model.prior_mode == PriorMode::EmpiricalLabels ? "empirical" : "mean_base_prob";
  meta["class_count"] = model.class_count;
  meta["prior"] = std::vector<double>(model.freq.global_prior.data(),
                                      model.freq.global_prior.data() + model.freq.global_prior.size());
  std::ofstream out(dir + "/model.json");
  if (!out) throw DataError("cannot write " + dir + "/model.json");
  out << meta.dump(2) << '\n';
}

CfcpModel load_cfcp_model(const std::string& dir) {
  CfcpModel model;
  model.centroids = load_centroid_set(dir + "/centroids");
  model.freq.counts = load_matrix_binary(dir + "/counts.bin");

  std::ifstream in(dir + "/model.json");
  if (!in) throw DataError("cannot open " + dir + "/model.json");
  nlohmann::json meta;
  in >> meta;
  model.freq.beta = meta["beta"].get<double>();
  model.rel.gamma = meta["gamma"].get<double>();
  model.rel.beta_sup = meta["beta_sup"].get<double>();
  model.tau = meta["tau"].get<double>();
  model.m = meta["m"].get<int>();
  model.prior_mode = meta["prior_mode"].get<std::string>() == "empirical"
                         ? PriorMode::EmpiricalLabels
                         : PriorMode::MeanBaseProb;
  model.class_count = meta["class_count"].get<int>();
  const auto prior = meta["prior"].get<std::vector<double>>();
  model.freq.global_prior = Eigen::Map<const Vector>(prior.data(), static_cast<Index>(prior.size()));

  if (model.freq.counts.rows() != model.centroids.k() ||
      model.freq.counts.cols() != model.class_count) {
    throw DataError(dir + ": counts shape does not match centroids/classes");
  }
  // Supports are the count row sums by definition; recompute so the stored
  // float32 counts stay exactly consistent.
  model.freq.supports = model.freq.counts.rowwise().sum();
  model.cluster_dists.resize(model.centroids.k(), model.class_count);
  for (Index k = 0; k < model.centroids.k(); ++k) {
    model.cluster_dists.row(k) =
        cluster_distribution(model.freq.counts.row(k), model.freq.supports[k],
                             model.freq.global_prior, model.freq.beta)
            .transpose();
  }
  return model;
}

}  // namespace cfcp
