#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairpar/linalg.hpp"

namespace fairpar {

enum class Split : uint8_t { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);  // throws on unknown tag

// Node embedding table with per-node sensitive bit, class label and split tag.
// Immutable after construction; rows are length-p slices of a flat buffer.
struct EmbeddingDataset {
  int n = 0;
  int p = 0;
  int num_classes = 2;
  Vec embeddings;               // n * p, row-major
  std::vector<int> sensitive;   // values in {0,1}
  std::vector<int> labels;      // values in [0, num_classes)
  std::vector<Split> split;

  std::span<const double> row(int i) const {
    return {embeddings.data() + static_cast<size_t>(i) * p, static_cast<size_t>(p)};
  }
  std::vector<int> indices_of(Split s) const;

  // Throws std::runtime_error describing the first violated invariant.
  void validate() const;
};

EmbeddingDataset load_dataset(const std::string& path);
void save_dataset(const EmbeddingDataset& ds, const std::string& path);

// Gaussian point cloud with a planted sensitive direction: group means differ
// by group_gap * planted_direction, class centers sit task_gap apart along
// task_signal, and label_leak rewrites that fraction of labels to the node's
// sensitive bit so the bias is measurable downstream.
struct SyntheticSpec {
  int n = 2000;
  int p = 16;
  int num_classes = 2;
  Vec planted_direction;  // unit p-vector; empty means axis e0
  Vec task_signal;        // unit p-vector; empty means axis e1
  double group_gap = 0.85;
  double task_gap = 6.2;
  double noise_std = 0.65;
  double label_leak = 0.08;

  void validate() const;
  SyntheticSpec resolved() const;  // empty directions replaced by unit axes
  static SyntheticSpec defaults();
};

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

}  // namespace fairpar
