#include "cfcp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfcp/rng.hpp"

namespace cfcp {

namespace {

using nlohmann::json;

[[noreturn]] void fail_data(const std::string& msg) { throw DataError(msg); }

double parse_double(std::string_view token, const std::string& path, std::size_t line) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    fail_data(path + ": cannot parse number '" + std::string(token) + "' at line " +
              std::to_string(line));
  }
  return value;
}

long parse_long(std::string_view token, const std::string& path, std::size_t line) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail_data(path + ": cannot parse integer '" + std::string(token) + "' at line " +
              std::to_string(line));
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

MatrixFormat detect_format(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return MatrixFormat::Csv;
  if (std::filesystem::exists(sidecar_path(path))) return MatrixFormat::Binary;
  return MatrixFormat::Csv;
}

}  // namespace

Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto tokens = split_csv_line(line);
    if (cols == 0) cols = tokens.size();
    if (tokens.size() != cols) {
      fail_data(path + ": inconsistent column count at line " + std::to_string(line_no));
    }
    std::vector<double> row;
    row.reserve(cols);
    for (const auto& t : tokens) row.push_back(parse_double(t, path, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail_data(path + ": empty matrix file");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

Matrix load_matrix_binary(const std::string& path) {
  std::ifstream meta_in(sidecar_path(path));
  if (!meta_in) fail_data("cannot open sidecar: " + sidecar_path(path));
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    fail_data(sidecar_path(path) + ": invalid JSON (" + e.what() + ")");
  }
  if (!meta.contains("rows") || !meta.contains("cols")) {
    fail_data(sidecar_path(path) + ": sidecar must contain rows and cols");
  }
  const Index rows = meta["rows"].get<Index>();
  const Index cols = meta["cols"].get<Index>();
  if (rows < 1 || cols < 1) fail_data(sidecar_path(path) + ": rows and cols must be positive");

  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open file: " + path);
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<float> buffer(count);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    fail_data(path + ": file shorter than rows*cols*4 bytes");
  }
  char extra;
  if (in.read(&extra, 1)) fail_data(path + ": file longer than rows*cols*4 bytes");

  Matrix m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) m.data()[i] = static_cast<double>(buffer[i]);
  return m;
}

Matrix load_matrix(const std::string& path, MatrixFormat format) {
  if (format == MatrixFormat::Auto) format = detect_format(path);
  return format == MatrixFormat::Binary ? load_matrix_binary(path) : load_matrix_csv(path);
}

void save_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write file: " + path);
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      if (j > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void save_matrix_binary(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write file: " + path);
  const std::size_t count = static_cast<std::size_t>(m.size());
  std::vector<float> buffer(count);
  for (std::size_t i = 0; i < count; ++i) buffer[i] = static_cast<float>(m.data()[i]);
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
  json meta;
  meta["rows"] = m.rows();
  meta["cols"] = m.cols();
  std::ofstream meta_out(sidecar_path(path));
  if (!meta_out) fail_data("cannot write sidecar: " + sidecar_path(path));
  meta_out << meta.dump() << '\n';
}

void save_matrix(const Matrix& m, const std::string& path, MatrixFormat format) {
  if (format == MatrixFormat::Binary) {
    save_matrix_binary(m, path);
  } else {
    save_matrix_csv(m, path);
  }
}

IntVector load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open file: " + path);
  std::vector<long> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    values.push_back(parse_long(t, path, line_no));
  }
  if (values.empty()) fail_data(path + ": empty label file");
  IntVector labels(static_cast<Index>(values.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(values[static_cast<std::size_t>(i)]);
  }
  return labels;
}

void save_labels(const IntVector& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write file: " + path);
  for (Index i = 0; i < labels.size(); ++i) out << labels[i] << '\n';
}

void validate_dataset(const Dataset& ds) {
  const Index n = ds.embeddings.rows();
  if (n < 1) fail_data("dataset is empty");
  if (ds.dim() < 1) fail_data("embedding dimension must be at least 1");
  if (ds.class_count < 1) fail_data("class count must be at least 1");
  if (ds.labels.size() != n || ds.base_probs.rows() != n) {
    fail_data("shape mismatch: embeddings " + std::to_string(n) + " rows, labels " +
              std::to_string(ds.labels.size()) + ", probabilities " +
              std::to_string(ds.base_probs.rows()));
  }
  if (ds.base_probs.cols() != ds.class_count) {
    fail_data("probability matrix has " + std::to_string(ds.base_probs.cols()) +
              " columns, expected " + std::to_string(ds.class_count));
  }
  for (Index i = 0; i < n; ++i) {
    if (!ds.embeddings.row(i).allFinite()) {
      fail_data("non-finite embedding value at row " + std::to_string(i));
    }
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.class_count) {
      fail_data("label out of range at row " + std::to_string(i) + ": " +
                std::to_string(ds.labels[i]));
    }
    if (!ds.base_probs.row(i).allFinite()) {
      fail_data("non-finite probability value at row " + std::to_string(i));
    }
    if ((ds.base_probs.row(i).array() < 0.0).any()) {
      fail_data("negative probability at row " + std::to_string(i));
    }
    const double sum = ds.base_probs.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-4) {
      fail_data("probability row off-simplex at row " + std::to_string(i) + ": sum=" +
                std::to_string(sum));
    }
  }
}

Dataset load_dataset(const std::string& embeddings_path, const std::string& labels_path,
                     const std::string& probs_path, MatrixFormat format) {
  Dataset ds;
  ds.embeddings = load_matrix(embeddings_path, format);
  ds.labels = load_labels(labels_path);
  ds.base_probs = load_matrix(probs_path, format);
  ds.class_count = static_cast<int>(ds.base_probs.cols());
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& embeddings_path,
                  const std::string& labels_path, const std::string& probs_path,
                  MatrixFormat format) {
  if (format == MatrixFormat::Auto) format = MatrixFormat::Csv;
  save_matrix(ds.embeddings, embeddings_path, format);
  save_labels(ds.labels, labels_path);
  save_matrix(ds.base_probs, probs_path, format);
}

void normalize_rows_in_place(Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm < 1e-12) {
      fail_data("cannot normalize row " + std::to_string(i) + ": norm " + std::to_string(norm) +
                " below 1e-12");
    }
    m.row(i) /= norm;
  }
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  normalize_rows_in_place(out);
  return out;
}

PoolSplit split_pool(const std::vector<Index>& pool, const SplitSpec& spec) {
  const double fractions[3] = {spec.stat_fraction, spec.tune_fraction, spec.quantile_fraction};
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) {
      throw ConfigError("split fractions must lie in (0,1); got " + std::to_string(f));
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1; got " + std::to_string(total));
  }
  if (pool.empty()) throw ConfigError("cannot split an empty pool");

  const std::size_t n = pool.size();
  std::size_t sizes[3];
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    sizes[p] = static_cast<std::size_t>(std::floor(fractions[p] * static_cast<double>(n)));
    assigned += sizes[p];
  }
  for (int p = 0; assigned < n; p = (p + 1) % 3) {
    ++sizes[p];
    ++assigned;
  }
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
    throw ConfigError("pool of size " + std::to_string(n) +
                      " is too small for three non-empty parts");
  }

  std::vector<Index> shuffled = pool;
  Rng rng(spec.seed);
  rng.shuffle(shuffled);

  PoolSplit out;
  out.stat.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  out.tune.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                  shuffled.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  out.quantile.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]),
                      shuffled.end());
  return out;
}

}  // namespace cfcp
