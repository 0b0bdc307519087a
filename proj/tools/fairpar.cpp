// fairpar: adapter debiasing and per-node fairness certification for
// precomputed node embeddings.
//
// Subcommands: generate, train, certify, probe, run. All configs are JSON
// with a version field; see README for the schemas.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairpar/checkpoint.hpp"
#include "fairpar/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 ok, 2 config/usage error, 3 data/validation error, 1 anything else
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return json::parse(in);
}

struct GenerateArgs {
  std::string spec_path;
  std::string out_path;
  uint64_t seed = 0;
};

struct TrainArgs {
  std::string data_path;
  std::string config_path;
  std::string out_dir;
  std::string scheme_override;
  uint64_t seed = 0;
  bool seed_set = false;
};

struct CertifyArgs {
  std::string data_path;
  std::string adapter_path;
  std::string classifier_path;
  std::string config_path;
  std::string out_dir;
  std::string nodes = "test";
  double eps = 0.5;
  uint64_t seed = 0;
  int threads = 1;
};

struct ProbeArgs {
  std::string data_path;
  std::string out_path;
  std::vector<double> angles = {0, 30, 60, 90};
  std::vector<double> t_grid;
  uint64_t seed = 0;
};

struct RunArgs {
  std::string config_path;
  std::string out_dir;
  std::string scheme_override;
  std::string nodes_override;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

int cmd_generate(const GenerateArgs& a) {
  fairpar::SyntheticSpec spec = a.spec_path.empty()
                                    ? fairpar::SyntheticSpec::defaults()
                                    : fairpar::synthetic_from_json(load_json(a.spec_path));
  fairpar::EmbeddingDataset ds = fairpar::generate_synthetic(spec, a.seed);
  fairpar::save_dataset(ds, a.out_path);
  std::printf("wrote %s (n=%d, p=%d, C=%d)\n", a.out_path.c_str(), ds.n, ds.p,
              ds.num_classes);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  fairpar::EmbeddingDataset ds = fairpar::load_dataset(a.data_path);
  fairpar::TrainConfig cfg = a.config_path.empty()
                                 ? fairpar::TrainConfig{}
                                 : fairpar::train_config_from_json(load_json(a.config_path));
  if (!a.scheme_override.empty()) cfg.scheme = fairpar::scheme_from_name(a.scheme_override);
  if (a.seed_set) cfg.seed = a.seed;

  fairpar::SensitiveDirection dir = fairpar::compute_direction(ds, fairpar::Scope::Train);
  fairpar::TrainResult tr = fairpar::train(ds, cfg, &dir);
  fairpar::RngStream hrng(cfg.seed, fairpar::stream_id(fairpar::StreamKind::Harden));
  fairpar::ClassifierParams hardened =
      fairpar::harden_classifier(tr.adapter, tr.classifier, ds, cfg.hardening_rounds,
                                 cfg.hardening_std, cfg.lr, hrng);

  fs::create_directories(a.out_dir);
  auto p = [&](const char* name) { return (fs::path(a.out_dir) / name).string(); };
  fairpar::save_adapter(tr.adapter, p("adapter.json"));
  fairpar::save_classifier(hardened, p("classifier.json"));
  fairpar::write_history_csv(tr.history, p("history.csv"));
  std::printf("trained scheme=%s epochs=%d; checkpoints in %s\n",
              fairpar::scheme_name(cfg.scheme), cfg.epochs, a.out_dir.c_str());
  return 0;
}

int cmd_certify(const CertifyArgs& a) {
  fairpar::EmbeddingDataset ds = fairpar::load_dataset(a.data_path);
  fairpar::AdapterParams g = fairpar::load_adapter(a.adapter_path);
  fairpar::ClassifierParams d = fairpar::load_classifier(a.classifier_path);
  fairpar::SmoothingConfig cfg = a.config_path.empty()
                                     ? fairpar::SmoothingConfig{}
                                     : fairpar::smoothing_from_json(load_json(a.config_path));
  fairpar::SensitiveDirection dir = fairpar::compute_direction(ds, fairpar::Scope::Train);

  std::vector<int> nodes;
  if (a.nodes == "test") {
    nodes = ds.indices_of(fairpar::Split::Test);
  } else if (a.nodes == "all") {
    nodes.resize(ds.n);
    for (int i = 0; i < ds.n; ++i) nodes[i] = i;
  } else {
    throw std::runtime_error("--nodes must be test or all");
  }

  auto certs = fairpar::certify_nodes(g, d, ds, dir, a.eps, cfg, a.seed, nodes, a.threads);
  fs::create_directories(a.out_dir);
  auto p = [&](const char* name) { return (fs::path(a.out_dir) / name).string(); };
  fairpar::write_certificates_jsonl(certs, p("certificates.jsonl"));

  long provable = 0;
  for (const auto& c : certs)
    if (c.provable) ++provable;
  json summary;
  summary["version"] = "fairpar-report-1";
  summary["certified"] = certs.size();
  summary["provable"] = provable;
  summary["provable_fair_rate"] =
      certs.empty() ? 0.0 : static_cast<double>(provable) / static_cast<double>(certs.size());
  summary["eps"] = a.eps;
  summary["eps1"] = fairpar::eps1_from(dir, a.eps);
  std::ofstream out(p("report.json"), std::ios::binary);
  out << summary.dump(2) << "\n";
  std::printf("certified %zu nodes, provable %ld (%.1f%%)\n", certs.size(), provable,
              certs.empty() ? 0.0 : 100.0 * provable / certs.size());
  return 0;
}

int cmd_probe(const ProbeArgs& a) {
  fairpar::EmbeddingDataset ds = fairpar::load_dataset(a.data_path);
  fairpar::SensitiveDirection dir = fairpar::compute_direction(ds, fairpar::Scope::Train);

  std::vector<double> t_grid = a.t_grid;
  if (t_grid.empty())
    for (int i = -10; i <= 10; ++i) t_grid.push_back(0.3 * i);

  std::ofstream out(a.out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + a.out_path + "' for writing");
  out << "t,angle_deg,accuracy\n";
  fairpar::ProbeConfig pcfg;
  for (double angle : a.angles) {
    fairpar::RngStream rot_rng(a.seed,
                               fairpar::stream_id(fairpar::StreamKind::RotatedControl,
                                                  static_cast<uint64_t>(angle)));
    fairpar::Vec direction =
        angle == 0.0 ? dir.alpha : fairpar::rotated_control(dir, angle, rot_rng);
    auto acc = fairpar::probe_sensitive_accuracy(ds, direction, t_grid, pcfg, a.seed);
    char buf[96];
    for (size_t i = 0; i < t_grid.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", t_grid[i], angle, acc[i]);
      out << buf;
    }
  }
  std::printf("wrote %s (%zu angles x %zu offsets)\n", a.out_path.c_str(), a.angles.size(),
              t_grid.size());
  return 0;
}

int cmd_run(const RunArgs& a) {
  fairpar::RunConfig cfg = fairpar::run_config_from_json(load_json(a.config_path));
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (a.seed_set) cfg.master_seed = a.seed;
  if (!a.scheme_override.empty())
    cfg.train.scheme = fairpar::scheme_from_name(a.scheme_override);
  if (!a.nodes_override.empty())
    cfg.nodes = a.nodes_override == "all" ? fairpar::NodeSubset::All
                                          : fairpar::NodeSubset::Test;
  if (a.threads > 0) cfg.threads = a.threads;

  fairpar::FairnessReport rep = fairpar::run(cfg);
  std::fputs(fairpar::report_to_text(rep).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adapter debiasing + per-node fairness certification for node embeddings"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cgen = app.add_subcommand("generate", "generate a synthetic dataset CSV");
  cgen->add_option("--spec", gen.spec_path, "synthetic spec JSON (defaults when omitted)");
  cgen->add_option("--out", gen.out_path, "output dataset CSV")->required();
  cgen->add_option("--seed", gen.seed, "generator seed");

  TrainArgs tra;
  auto* ctra = app.add_subcommand("train", "train adapter + classifier, then harden");
  ctra->add_option("--data", tra.data_path, "dataset CSV")->required();
  ctra->add_option("--config", tra.config_path, "train config JSON");
  ctra->add_option("--out", tra.out_dir, "output directory")->required();
  ctra->add_option("--scheme", tra.scheme_override, "naive|randat|minmax");
  ctra->add_option("--seed", tra.seed, "training seed")->each([&](const std::string&) {
    tra.seed_set = true;
  });

  CertifyArgs cer;
  auto* ccer = app.add_subcommand("certify", "certify nodes with saved checkpoints");
  ccer->add_option("--data", cer.data_path, "dataset CSV")->required();
  ccer->add_option("--adapter", cer.adapter_path, "adapter checkpoint")->required();
  ccer->add_option("--classifier", cer.classifier_path, "classifier checkpoint")->required();
  ccer->add_option("--config", cer.config_path, "smoothing config JSON");
  ccer->add_option("--out", cer.out_dir, "output directory")->required();
  ccer->add_option("--nodes", cer.nodes, "test|all");
  ccer->add_option("--eps", cer.eps, "augmentation range for eps1");
  ccer->add_option("--seed", cer.seed, "certification master seed");
  ccer->add_option("--threads", cer.threads, "worker threads");

  ProbeArgs pro;
  auto* cpro = app.add_subcommand("probe", "sensitive-direction effectiveness probe");
  cpro->add_option("--data", pro.data_path, "dataset CSV")->required();
  cpro->add_option("--out", pro.out_path, "output CSV")->required();
  cpro->add_option("--angles", pro.angles, "control angles in degrees");
  cpro->add_option("--t-grid", pro.t_grid, "offsets t to evaluate");
  cpro->add_option("--seed", pro.seed, "probe seed");

  RunArgs runa;
  auto* crun = app.add_subcommand("run", "full pipeline from a run config JSON");
  crun->add_option("--config", runa.config_path, "run config JSON")->required();
  crun->add_option("--out", runa.out_dir, "output directory (overrides config)");
  crun->add_option("--seed", runa.seed, "master seed (overrides config)")
      ->each([&](const std::string&) { runa.seed_set = true; });
  crun->add_option("--scheme", runa.scheme_override, "naive|randat|minmax (overrides config)");
  crun->add_option("--nodes", runa.nodes_override, "test|all (overrides config)");
  crun->add_option("--threads", runa.threads, "worker threads (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) return cmd_generate(gen);
    if (ctra->parsed()) return cmd_train(tra);
    if (ccer->parsed()) return cmd_certify(cer);
    if (cpro->parsed()) return cmd_probe(pro);
    if (crun->parsed()) return cmd_run(runa);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config JSON: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    bool config_like = msg.find("config") != std::string::npos ||
                       msg.find("version") != std::string::npos;
    return config_like ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
