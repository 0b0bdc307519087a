#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairpar/augmenter.hpp"
#include "fairpar/dataset.hpp"
#include "fairpar/nn.hpp"
#include "fairpar/rng.hpp"

namespace fairpar {

enum class Scheme { Naive, RandAT, MinMax };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct TrainConfig {
  Scheme scheme = Scheme::Naive;
  double eps = 0.5;      // augmentation range
  int k = 20;            // augmentation samples per node
  double lambda = 0.1;   // fairness loss scale (MinMax)
  int epochs = 1000;
  double lr = 0.01;
  int hardening_rounds = 100;
  double hardening_std = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

// Mean over nodes of mean over k offsets of CE(d(g(h + t*alpha)), y).
// Offsets are sampled fresh from the stream.
double randat_loss(const AdapterParams& g, const ClassifierParams& d,
                   std::span<const Example> batch, const SensitiveDirection& dir,
                   double eps, int k, RngStream& rng);
double randat_loss_at(const AdapterParams& g, const ClassifierParams& d,
                      std::span<const Example> batch, std::span<const double> alpha,
                      const std::vector<Vec>& offsets);

// lambda * mean_i max_j ||g(h_i) - g(h_i + t_j*alpha)|| + mean_i CE(d(g(h_i)), y_i).
double minmax_loss(const AdapterParams& g, const ClassifierParams& d,
                   std::span<const Example> batch, const SensitiveDirection& dir,
                   double eps, int k, double lambda, RngStream& rng);
double minmax_loss_at(const AdapterParams& g, const ClassifierParams& d,
                      std::span<const Example> batch, std::span<const double> alpha,
                      const std::vector<Vec>& offsets, double lambda);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double val_acc = 0.0;
  double val_dp = 0.0;  // NaN when a validation group is empty
  double val_eo = 0.0;
};

struct TrainResult {
  AdapterParams adapter;
  ClassifierParams classifier;
  std::vector<EpochStats> history;
};

// Full-batch Adam over the train split for cfg.epochs. `dir` may be null for
// the naive scheme; required for RandAT/MinMax. Deterministic in cfg.seed.
TrainResult train(const EmbeddingDataset& ds, const TrainConfig& cfg,
                  const SensitiveDirection* dir);

// Fine-tunes the classifier on g(h_i) + N(0, std^2 I) for `rounds` epochs with
// cross-entropy; the adapter is read-only throughout.
ClassifierParams harden_classifier(const AdapterParams& g, ClassifierParams d,
                                   const EmbeddingDataset& ds, int rounds, double std_dev,
                                   double lr, RngStream& rng);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace fairpar
