#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairpar/augmenter.hpp"
#include "fairpar/dataset.hpp"
#include "fairpar/metrics.hpp"
#include "fairpar/smoothing.hpp"
#include "fairpar/training.hpp"

#include "json.hpp"

namespace fairpar {

enum class NodeSubset { Test, All };

struct RunConfig {
  std::optional<std::string> dataset_path;  // exactly one of these two is set
  std::optional<SyntheticSpec> synthetic;
  TrainConfig train;
  SmoothingConfig smoothing;
  std::string out_dir;
  uint64_t master_seed = 0;
  NodeSubset nodes = NodeSubset::Test;
  int threads = 1;

  void validate() const;
};

struct FairnessReport {
  double acc = 0.0;
  double macro_f1 = 0.0;
  double dp = 0.0;
  double eo = 0.0;
  long certified = 0;
  long provable = 0;
  double provable_fair_rate = 0.0;
  std::vector<NodeCertificate> certificates;
  nlohmann::ordered_json config_echo;
  double wall_seconds = 0.0;
};

// Certifies the listed nodes; results are ordered by position in `nodes` and
// bit-identical at any thread count (per-node counter streams, no shared
// accumulation).
std::vector<NodeCertificate> certify_nodes(const AdapterParams& g,
                                           const ClassifierParams& d,
                                           const EmbeddingDataset& ds,
                                           const SensitiveDirection& dir, double eps,
                                           const SmoothingConfig& cfg, uint64_t master_seed,
                                           const std::vector<int>& nodes, int threads);

// Full pipeline: data -> direction -> train -> harden -> certify -> metrics
// -> report files under cfg.out_dir. Deterministic in cfg.master_seed.
FairnessReport run(const RunConfig& cfg);

// Serialization helpers shared by run() and the CLI.
nlohmann::ordered_json certificate_to_json(const NodeCertificate& c);
nlohmann::ordered_json report_to_json(const FairnessReport& r);
std::string report_to_text(const FairnessReport& r);
void write_certificates_jsonl(const std::vector<NodeCertificate>& certs,
                              const std::string& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// JSON config loaders (each expects its "version" field).
SyntheticSpec synthetic_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SmoothingConfig smoothing_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace fairpar
