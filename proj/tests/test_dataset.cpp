#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "fairpar/augmenter.hpp"
#include "fairpar/dataset.hpp"
#include "fairpar/rng.hpp"

using namespace fairpar;

namespace {

std::string tmp_path(const char* name) {
  return std::string("/tmp/fairpar_test_") + name;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

EmbeddingDataset random_dataset(int n, int p, uint64_t seed) {
  RngStream rng(seed, stream_id(StreamKind::Test));
  EmbeddingDataset ds;
  ds.n = n;
  ds.p = p;
  ds.num_classes = 3;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) ds.embeddings.push_back(rng.normal() * 1e3);
    ds.sensitive.push_back(static_cast<int>(rng.uniform_int(2)));
    ds.labels.push_back(static_cast<int>(rng.uniform_int(3)));
    ds.split.push_back(static_cast<Split>(rng.uniform_int(3)));
  }
  return ds;
}

double cosine(const Vec& a, const Vec& b) {
  return dot(a, b) / (norm2(a) * norm2(b));
}

}  // namespace

TEST_CASE("load parses a small valid file") {
  auto path = tmp_path("small.csv");
  write_file(path,
             "node_id,s,y,split,e0,e1\n"
             "0,0,0,train,1.5,-2\n"
             "1,1,1,val,0,3.25\n"
             "2,0,1,test,4,5\n");
  EmbeddingDataset ds = load_dataset(path);
  CHECK(ds.n == 3);
  CHECK(ds.p == 2);
  CHECK(ds.num_classes == 2);
  CHECK(ds.row(0)[0] == 1.5);
  CHECK(ds.row(2)[1] == 5.0);
  CHECK(ds.sensitive[1] == 1);
  CHECK(ds.split[2] == Split::Test);
}

TEST_CASE("load reports the offending row") {
  auto path = tmp_path("bad_s.csv");
  write_file(path,
             "node_id,s,y,split,e0\n"
             "0,0,0,train,1\n"
             "1,2,0,val,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 2"), std::runtime_error);

  write_file(path,
             "node_id,s,y,split,e0\n"
             "0,0,0,train,1\n"
             "1,1,0,holdout,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 2"), std::runtime_error);

  write_file(path,
             "node_id,s,y,split,e0\n"
             "0,0,0,train,1,9\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 1"), std::runtime_error);

  write_file(path,
             "node_id,s,y,split,e0\n"
             "0,0,0,train,nan\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("row 1"), std::runtime_error);
}

TEST_CASE("load rejects malformed headers") {
  auto path = tmp_path("bad_header.csv");
  write_file(path, "id,s,y,split,e0\n0,0,0,train,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("header"), std::runtime_error);
  write_file(path, "node_id,s,y,split,e0,e2\n0,0,0,train,1,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("header"), std::runtime_error);
}

TEST_CASE("save then load is the identity") {
  EmbeddingDataset ds = random_dataset(37, 5, 11);
  auto path = tmp_path("roundtrip.csv");
  save_dataset(ds, path);
  EmbeddingDataset back = load_dataset(path);
  CHECK(back.n == ds.n);
  CHECK(back.p == ds.p);
  CHECK(back.embeddings == ds.embeddings);  // bit-exact via 17 significant digits
  CHECK(back.sensitive == ds.sensitive);
  CHECK(back.labels == ds.labels);
  CHECK(back.split == ds.split);
}

TEST_CASE("save handles single-row and single-split datasets") {
  EmbeddingDataset ds;
  ds.n = 1;
  ds.p = 3;
  ds.num_classes = 2;
  ds.embeddings = {0.1, 0.2, 0.3};
  ds.sensitive = {1};
  ds.labels = {1};
  ds.split = {Split::Train};
  auto path = tmp_path("single.csv");
  save_dataset(ds, path);
  EmbeddingDataset back = load_dataset(path);
  CHECK(back.n == 1);
  CHECK(back.embeddings == ds.embeddings);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "node_id,s,y,split,e0,e1,e2");
}

TEST_CASE("generate_synthetic is deterministic in (spec, seed)") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 200;
  EmbeddingDataset a = generate_synthetic(spec, 5);
  EmbeddingDataset b = generate_synthetic(spec, 5);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.labels == b.labels);
  CHECK(a.split == b.split);
  EmbeddingDataset c = generate_synthetic(spec, 6);
  CHECK(a.embeddings != c.embeddings);
}

TEST_CASE("generate_synthetic rejects n < 4") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 3;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), std::runtime_error);
}

TEST_CASE("splits come out 50/25/25") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 1000;
  EmbeddingDataset ds = generate_synthetic(spec, 3);
  CHECK(ds.indices_of(Split::Train).size() == 500);
  CHECK(ds.indices_of(Split::Val).size() == 250);
  CHECK(ds.indices_of(Split::Test).size() == 250);
}

TEST_CASE("group means along the planted direction differ by group_gap") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 4000;
  spec.group_gap = 2.5;
  spec.label_leak = 0.0;
  spec = spec.resolved();
  EmbeddingDataset ds = generate_synthetic(spec, 17);

  double mean1 = 0, mean0 = 0;
  long n1 = 0, n0 = 0;
  for (int i = 0; i < ds.n; ++i) {
    double proj = dot(ds.row(i), spec.planted_direction);
    if (ds.sensitive[i] == 1) {
      mean1 += proj;
      ++n1;
    } else {
      mean0 += proj;
      ++n0;
    }
  }
  mean1 /= static_cast<double>(n1);
  mean0 /= static_cast<double>(n0);
  double se = 3.0 * spec.noise_std / std::sqrt(static_cast<double>(std::min(n0, n1)));
  CHECK(std::abs((mean1 - mean0) - spec.group_gap) < se);
}

TEST_CASE("planted direction is recovered when the gap dominates") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 2000;
  spec.p = 16;
  spec.group_gap = 4.0;
  spec.noise_std = 1.0;
  spec.label_leak = 0.0;
  spec = spec.resolved();
  EmbeddingDataset ds = generate_synthetic(spec, 23);
  SensitiveDirection dir = compute_direction(ds, Scope::All);
  CHECK(cosine(dir.alpha, spec.planted_direction) > 0.95);
}

TEST_CASE("no gap means no recoverable direction") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 2000;
  spec.group_gap = 0.0;
  spec.label_leak = 0.0;
  spec = spec.resolved();
  EmbeddingDataset ds = generate_synthetic(spec, 31);
  SensitiveDirection dir = compute_direction(ds, Scope::All);
  CHECK(std::abs(cosine(dir.alpha, spec.planted_direction)) < 0.2);
}

TEST_CASE("validate rejects broken datasets") {
  EmbeddingDataset ds = random_dataset(4, 2, 1);
  ds.sensitive[2] = 7;
  CHECK_THROWS_WITH_AS(ds.validate(), doctest::Contains("row 3"), std::runtime_error);

  ds = random_dataset(4, 2, 1);
  ds.labels[0] = 99;
  CHECK_THROWS_AS(ds.validate(), std::runtime_error);

  ds = random_dataset(4, 2, 1);
  ds.embeddings[3] = std::nan("");
  CHECK_THROWS_AS(ds.validate(), std::runtime_error);
}
