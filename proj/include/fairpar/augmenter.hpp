#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fairpar/dataset.hpp"
#include "fairpar/linalg.hpp"
#include "fairpar/rng.hpp"

namespace fairpar {

// Sensitive-semantics axis: difference of the group-mean embeddings.
struct SensitiveDirection {
  Vec alpha;
  double alpha_norm = 0.0;
  long n_pos = 0;
  long n_neg = 0;
};

enum class Scope { Train, Val, Test, All };

// alpha = mean(rows with s=1) - mean(rows with s=0), restricted to `scope`.
// Throws when either group is empty within scope.
SensitiveDirection compute_direction(const EmbeddingDataset& ds, Scope scope = Scope::Train);

// k i.i.d. draws from Uniform(-eps, eps).
Vec sample_offsets(int k, double eps, RngStream& rng);

// Interpolation set for one node: base row plus offsets along the direction.
struct AugmentationSet {
  int base = 0;
  Vec offsets;  // every |t_j| <= eps

  Vec materialize(std::span<const double> h, std::span<const double> alpha, int j) const;
};

AugmentationSet make_augmentation_set(int base, int k, double eps, RngStream& rng);

// Random vector with the same L2 norm as alpha at the requested angle to it.
Vec rotated_control(const SensitiveDirection& dir, double angle_deg, RngStream& rng);

struct ProbeConfig {
  int epochs = 200;
  double lr = 0.01;
};

// Trains a linear sensitive-attribute probe on the train split, then reports
// its test accuracy after shifting every test embedding by t * direction.
std::vector<double> probe_sensitive_accuracy(const EmbeddingDataset& ds,
                                             std::span<const double> direction,
                                             std::span<const double> t_grid,
                                             const ProbeConfig& cfg, uint64_t seed);

}  // namespace fairpar
