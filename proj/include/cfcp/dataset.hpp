#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfcp/types.hpp"

namespace cfcp {

/// Precomputed embeddings, labels and base-model probabilities for n samples.
/// Embeddings are stored as loaded; row normalization is an explicit step.
struct Dataset {
  Matrix embeddings;  // n x d
  IntVector labels;   // n, values in [0, class_count)
  Matrix base_probs;  // n x C, rows on the probability simplex
  int class_count = 0;

  Index n() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }
};

enum class MatrixFormat { Auto, Csv, Binary };

// Matrix files: CSV (one row per sample, full precision) or raw little-endian
// float32 row-major binary with a JSON sidecar "<path>.json" holding
// {"rows": n, "cols": d}. Labels: one integer per line.
Matrix load_matrix_csv(const std::string& path);
Matrix load_matrix_binary(const std::string& path);
Matrix load_matrix(const std::string& path, MatrixFormat format = MatrixFormat::Auto);
void save_matrix_csv(const Matrix& m, const std::string& path);
void save_matrix_binary(const Matrix& m, const std::string& path);
void save_matrix(const Matrix& m, const std::string& path, MatrixFormat format);

IntVector load_labels(const std::string& path);
void save_labels(const IntVector& labels, const std::string& path);

/// Loads and validates the three dataset files. Row counts must agree; labels
/// must lie in [0, C) with C taken from the probability matrix width; every
/// probability row must be nonnegative and sum to 1 within 1e-4. Values are
/// ingested as given, never rescaled. Embeddings are NOT normalized here.
Dataset load_dataset(const std::string& embeddings_path, const std::string& labels_path,
                     const std::string& probs_path, MatrixFormat format = MatrixFormat::Auto);

void save_dataset(const Dataset& ds, const std::string& embeddings_path,
                  const std::string& labels_path, const std::string& probs_path,
                  MatrixFormat format = MatrixFormat::Csv);

/// Validates shapes, label range, finiteness and probability simplex rows.
/// Throws DataError naming the first offending row.
void validate_dataset(const Dataset& ds);

/// Returns a copy of m with every row scaled to unit Euclidean norm.
/// Rows with norm below 1e-12 raise DataError naming the row.
Matrix normalize_rows(const Matrix& m);
void normalize_rows_in_place(Matrix& m);

/// Fractions for the stat/tune/quantile partition of the calibration pool.
struct SplitSpec {
  double stat_fraction = 0.6;
  double tune_fraction = 0.2;
  double quantile_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct PoolSplit {
  std::vector<Index> stat;
  std::vector<Index> tune;
  std::vector<Index> quantile;
};

/// Seeded permutation of the pool followed by a deterministic partition:
/// part sizes are floor(fraction * n), leftover elements assigned one-by-one
/// to parts in declared order. Errors if any part would be empty.
PoolSplit split_pool(const std::vector<Index>& pool, const SplitSpec& spec);

}  // namespace cfcp
