#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "cfcp/dataset.hpp"

using namespace cfcp;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("cfcp_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load_dataset smallest well-formed input") {
  TempDir dir;
  write_text(dir.file("emb.csv"), "1,0\n0,1\n0.5,0.5\n");
  write_text(dir.file("labels.txt"), "0\n1\n0\n");
  write_text(dir.file("probs.csv"), "0.9,0.1\n0.2,0.8\n0.5,0.5\n");

  const Dataset ds = load_dataset(dir.file("emb.csv"), dir.file("labels.txt"), dir.file("probs.csv"));
  CHECK(ds.n() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.class_count == 2);
  CHECK(ds.labels[1] == 1);
  CHECK(ds.base_probs(0, 0) == doctest::Approx(0.9));
}

TEST_CASE("load_dataset rejects label equal to class count") {
  TempDir dir;
  write_text(dir.file("emb.csv"), "1,0\n0,1\n");
  write_text(dir.file("labels.txt"), "0\n2\n");
  write_text(dir.file("probs.csv"), "0.9,0.1\n0.2,0.8\n");
  CHECK_THROWS_WITH_AS(
      load_dataset(dir.file("emb.csv"), dir.file("labels.txt"), dir.file("probs.csv")),
      doctest::Contains("label out of range at row 1"), DataError);
}

TEST_CASE("load_dataset rejects off-simplex probability row") {
  TempDir dir;
  write_text(dir.file("emb.csv"), "1,0\n0,1\n");
  write_text(dir.file("labels.txt"), "0\n1\n");
  write_text(dir.file("probs.csv"), "0.9,0.1\n0.6,0.6\n");
  CHECK_THROWS_WITH_AS(
      load_dataset(dir.file("emb.csv"), dir.file("labels.txt"), dir.file("probs.csv")),
      doctest::Contains("off-simplex at row 1"), DataError);
}

TEST_CASE("load_dataset rejects shape mismatch and non-finite values") {
  TempDir dir;
  write_text(dir.file("emb.csv"), "1,0\n0,1\n1,0\n");
  write_text(dir.file("labels.txt"), "0\n1\n");
  write_text(dir.file("probs.csv"), "0.9,0.1\n0.2,0.8\n0.5,0.5\n");
  CHECK_THROWS_AS(load_dataset(dir.file("emb.csv"), dir.file("labels.txt"), dir.file("probs.csv")),
                  DataError);

  write_text(dir.file("labels3.txt"), "0\n1\n0\n");
  write_text(dir.file("emb_bad.csv"), "1,0\nnan,1\n1,0\n");
  CHECK_THROWS_AS(
      load_dataset(dir.file("emb_bad.csv"), dir.file("labels3.txt"), dir.file("probs.csv")),
      DataError);

  CHECK_THROWS_AS(
      load_dataset(dir.file("missing.csv"), dir.file("labels3.txt"), dir.file("probs.csv")),
      DataError);
}

TEST_CASE("normalize_rows worked examples") {
  Matrix m(2, 2);
  m << 3, 4, 1, 0;
  const Matrix out = normalize_rows(m);
  CHECK(out(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(out(1, 0) == 1.0);
  CHECK(out(1, 1) == 0.0);
}

TEST_CASE("normalize_rows rejects a near-zero row and names it") {
  Matrix m(2, 2);
  m << 1, 0, 0, 0;
  CHECK_THROWS_WITH_AS(normalize_rows(m), doctest::Contains("row 1"), DataError);
}

TEST_CASE("normalize_rows is idempotent") {
  std::mt19937_64 gen(41);
  std::normal_distribution<double> normal;
  Matrix m(50, 7);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = normal(gen);
  const Matrix once = normalize_rows(m);
  const Matrix twice = normalize_rows(once);
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("split_pool rounding matches the floor-then-remainder rule") {
  std::vector<Index> pool(10);
  std::iota(pool.begin(), pool.end(), Index{0});
  SplitSpec spec;
  spec.seed = 7;
  const PoolSplit split = split_pool(pool, spec);
  CHECK(split.stat.size() == 6);
  CHECK(split.tune.size() == 2);
  CHECK(split.quantile.size() == 2);

  const PoolSplit again = split_pool(pool, spec);
  CHECK(split.stat == again.stat);
  CHECK(split.tune == again.tune);
  CHECK(split.quantile == again.quantile);
}

TEST_CASE("split_pool rejects pools too small for three parts") {
  std::vector<Index> pool{0, 1};
  CHECK_THROWS_AS(split_pool(pool, SplitSpec{}), ConfigError);
  CHECK_THROWS_AS(split_pool({}, SplitSpec{}), ConfigError);
}

TEST_CASE("split_pool parts are disjoint and exhaustive over random sizes and seeds") {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 5 + gen() % 200;
    std::vector<Index> pool(n);
    std::iota(pool.begin(), pool.end(), Index{100});
    SplitSpec spec;
    spec.seed = gen();
    const PoolSplit split = split_pool(pool, spec);

    std::set<Index> seen;
    for (const auto* part : {&split.stat, &split.tune, &split.quantile}) {
      for (Index idx : *part) {
        CHECK(seen.insert(idx).second);  // disjoint
      }
    }
    CHECK(seen.size() == n);
    CHECK(*seen.begin() == 100);
    CHECK(*seen.rbegin() == static_cast<Index>(100 + n - 1));
    // Size rule oracle: floor then remainder in declared order.
    const std::size_t base[3] = {static_cast<std::size_t>(0.6 * static_cast<double>(n)),
                                 static_cast<std::size_t>(0.2 * static_cast<double>(n)),
                                 static_cast<std::size_t>(0.2 * static_cast<double>(n))};
    std::size_t sizes[3] = {base[0], base[1], base[2]};
    std::size_t total = sizes[0] + sizes[1] + sizes[2];
    for (int p = 0; total < n; p = (p + 1) % 3, ++total) ++sizes[p];
    CHECK(split.stat.size() == sizes[0]);
    CHECK(split.tune.size() == sizes[1]);
    CHECK(split.quantile.size() == sizes[2]);
  }
}

TEST_CASE("csv round trip is bit-identical for doubles") {
  TempDir dir;
  std::mt19937_64 gen(99);
  std::normal_distribution<double> normal;
  Matrix m(20, 5);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = normal(gen) * std::pow(10.0, int(gen() % 7) - 3);
  save_matrix_csv(m, dir.file("m.csv"));
  const Matrix back = load_matrix_csv(dir.file("m.csv"));
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  for (Index i = 0; i < m.size(); ++i) CHECK(back.data()[i] == m.data()[i]);
}

TEST_CASE("dataset round trip through both formats") {
  TempDir dir;
  Dataset ds;
  ds.embeddings.resize(3, 2);
  ds.embeddings << 1, 0, 0, 1, 0.5, 0.25;
  ds.labels.resize(3);
  ds.labels << 0, 1, 1;
  ds.base_probs.resize(3, 2);
  ds.base_probs << 0.75, 0.25, 0.5, 0.5, 0.125, 0.875;  // float32-exact values
  ds.class_count = 2;

  SUBCASE("csv") {
    save_dataset(ds, dir.file("e.csv"), dir.file("l.txt"), dir.file("p.csv"), MatrixFormat::Csv);
    const Dataset back =
        load_dataset(dir.file("e.csv"), dir.file("l.txt"), dir.file("p.csv"));
    CHECK(back.embeddings == ds.embeddings);
    CHECK(back.labels == ds.labels);
    CHECK(back.base_probs == ds.base_probs);
  }
  SUBCASE("binary") {
    save_dataset(ds, dir.file("e.bin"), dir.file("l.txt"), dir.file("p.bin"),
                 MatrixFormat::Binary);
    const Dataset back = load_dataset(dir.file("e.bin"), dir.file("l.txt"), dir.file("p.bin"),
                                      MatrixFormat::Binary);
    CHECK(back.embeddings == ds.embeddings);
    CHECK(back.labels == ds.labels);
    CHECK(back.base_probs == ds.base_probs);

    // Sidecar-based auto detection.
    const Dataset auto_back =
        load_dataset(dir.file("e.bin"), dir.file("l.txt"), dir.file("p.bin"));
    CHECK(auto_back.embeddings == ds.embeddings);
  }
}

TEST_CASE("binary loader validates sidecar consistency") {
  TempDir dir;
  Matrix m(2, 2);
  m << 1, 0, 0, 1;
  save_matrix_binary(m, dir.file("m.bin"));
  write_text(dir.file("m.bin.json"), "{\"rows\": 3, \"cols\": 2}");
  CHECK_THROWS_AS(load_matrix_binary(dir.file("m.bin")), DataError);
}
