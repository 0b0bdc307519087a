#include "fairpar/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "fairpar/checkpoint.hpp"

namespace fairpar {

namespace {

using json = nlohmann::ordered_json;

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

void require_version(const nlohmann::json& j, const char* want) {
  if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
  if (!j.contains("version"))
    throw std::runtime_error(std::string("config: missing version field (expected '") + want +
                             "')");
  if (j.at("version").get<std::string>() != want)
    throw std::runtime_error("config: unsupported version '" +
                             j.at("version").get<std::string>() + "' (expected '" + want +
                             "')");
}

void reject_unknown_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw std::runtime_error("config: unknown key '" + it.key() + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (dataset_path.has_value() == synthetic.has_value())
    throw std::runtime_error("run config invalid: set exactly one of dataset path / synthetic spec");
  if (dataset_path && !std::filesystem::exists(*dataset_path))
    throw std::runtime_error("run config invalid: dataset path '" + *dataset_path +
                             "' does not exist");
  if (synthetic) synthetic->validate();
  if (out_dir.empty()) throw std::runtime_error("run config invalid: empty output directory");
  if (threads < 1) throw std::runtime_error("run config invalid: threads must be >= 1");
  train.validate();
  smoothing.validate();
}

std::vector<NodeCertificate> certify_nodes(const AdapterParams& g,
                                           const ClassifierParams& d,
                                           const EmbeddingDataset& ds,
                                           const SensitiveDirection& dir, double eps,
                                           const SmoothingConfig& cfg, uint64_t master_seed,
                                           const std::vector<int>& nodes, int threads) {
  std::vector<NodeCertificate> out(nodes.size());
  if (threads < 1) throw std::invalid_argument("certify_nodes: threads must be >= 1");

  auto work = [&](int tid, int stride) {
    for (size_t i = tid; i < nodes.size(); i += stride)
      out[i] = certify_node(g, d, ds.row(nodes[i]), dir, eps, cfg, master_seed, nodes[i]);
  };

  if (threads == 1 || nodes.size() <= 1) {
    work(0, 1);
    return out;
  }

  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

// ----- serialization ---------------------------------------------------------

json certificate_to_json(const NodeCertificate& c) {
  json j;
  j["node_id"] = c.node;
  j["eps1"] = c.eps1;
  if (c.d_cs)
    j["d_cs"] = *c.d_cs;
  else
    j["d_cs"] = nullptr;
  if (c.d_rs)
    j["d_rs"] = *c.d_rs;
  else
    j["d_rs"] = nullptr;
  j["abstain_cs"] = c.abstain_cs;
  j["abstain_rs"] = c.abstain_rs;
  j["provable"] = c.provable;
  j["confidence"] = c.confidence;
  return j;
}

void write_certificates_jsonl(const std::vector<NodeCertificate>& certs,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const NodeCertificate& c : certs) out << certificate_to_json(c).dump() << "\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

json synthetic_to_json(const SyntheticSpec& s) {
  json j;
  j["version"] = "fairpar-synth-1";
  j["n"] = s.n;
  j["p"] = s.p;
  j["num_classes"] = s.num_classes;
  j["planted_direction"] = s.planted_direction;
  j["task_signal"] = s.task_signal;
  j["group_gap"] = s.group_gap;
  j["task_gap"] = s.task_gap;
  j["noise_std"] = s.noise_std;
  j["label_leak"] = s.label_leak;
  return j;
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["version"] = "fairpar-train-1";
  j["scheme"] = scheme_name(t.scheme);
  j["eps"] = t.eps;
  j["k"] = t.k;
  j["lambda"] = t.lambda;
  j["epochs"] = t.epochs;
  j["lr"] = t.lr;
  j["hardening_rounds"] = t.hardening_rounds;
  j["hardening_std"] = t.hardening_std;
  j["seed"] = t.seed;
  return j;
}

json smoothing_to_json(const SmoothingConfig& s) {
  json j;
  j["version"] = "fairpar-smooth-1";
  j["sigma_cs"] = s.sigma_cs;
  j["sigma_rs"] = s.sigma_rs;
  j["n_center"] = s.n_center;
  j["n_radius"] = s.n_radius;
  j["n_select"] = s.n_select;
  j["n_cert"] = s.n_cert;
  j["alpha_cs"] = s.alpha_cs;
  j["alpha_rs"] = s.alpha_rs;
  j["meb_iters"] = s.meb_iters;
  return j;
}

}  // namespace

// Execution environment (threads, output paths) is deliberately left out of
// the echo so reports are comparable across worker counts and directories.
json config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = "fairpar-run-1";
  if (cfg.dataset_path) j["dataset"] = *cfg.dataset_path;
  if (cfg.synthetic) j["synthetic"] = synthetic_to_json(*cfg.synthetic);
  j["train"] = train_to_json(cfg.train);
  j["smoothing"] = smoothing_to_json(cfg.smoothing);
  j["seed"] = cfg.master_seed;
  j["nodes"] = cfg.nodes == NodeSubset::Test ? "test" : "all";
  return j;
}

json report_to_json(const FairnessReport& r) {
  json j;
  j["version"] = "fairpar-report-1";
  j["acc"] = r.acc;
  j["macro_f1"] = r.macro_f1;
  j["dp"] = r.dp;
  j["eo"] = r.eo;
  j["certified"] = r.certified;
  j["provable"] = r.provable;
  j["provable_fair_rate"] = r.provable_fair_rate;
  j["config"] = r.config_echo;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

std::string report_to_text(const FairnessReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "test accuracy        %8.4f\n"
                "test macro-F1        %8.4f\n"
                "demographic parity   %8.4f\n"
                "equal opportunity    %8.4f\n"
                "nodes certified      %8ld\n"
                "provably fair        %8ld\n"
                "provable fair rate   %8.4f\n"
                "wall seconds         %8.2f\n",
                r.acc, r.macro_f1, r.dp, r.eo, r.certified, r.provable,
                r.provable_fair_rate, r.wall_seconds);
  return buf;
}

// ----- config parsing --------------------------------------------------------

SyntheticSpec synthetic_from_json(const nlohmann::json& j) {
  if (j.contains("version")) require_version(j, "fairpar-synth-1");
  reject_unknown_keys(j, {"version", "n", "p", "num_classes", "planted_direction",
                          "task_signal", "group_gap", "task_gap", "noise_std", "label_leak"});
  SyntheticSpec base = SyntheticSpec::defaults();
  SyntheticSpec s;
  s.n = j.value("n", base.n);
  s.p = j.value("p", base.p);
  s.num_classes = j.value("num_classes", base.num_classes);
  if (j.contains("planted_direction"))
    s.planted_direction = j.at("planted_direction").get<Vec>();
  if (j.contains("task_signal")) s.task_signal = j.at("task_signal").get<Vec>();
  s.group_gap = j.value("group_gap", base.group_gap);
  s.task_gap = j.value("task_gap", base.task_gap);
  s.noise_std = j.value("noise_std", base.noise_std);
  s.label_leak = j.value("label_leak", base.label_leak);
  s.validate();
  return s;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (j.contains("version")) require_version(j, "fairpar-train-1");
  reject_unknown_keys(j, {"version", "scheme", "eps", "k", "lambda", "epochs", "lr",
                          "hardening_rounds", "hardening_std", "seed"});
  TrainConfig t;
  if (j.contains("scheme")) t.scheme = scheme_from_name(j.at("scheme").get<std::string>());
  t.eps = j.value("eps", t.eps);
  t.k = j.value("k", t.k);
  t.lambda = j.value("lambda", t.lambda);
  t.epochs = j.value("epochs", t.epochs);
  t.lr = j.value("lr", t.lr);
  t.hardening_rounds = j.value("hardening_rounds", t.hardening_rounds);
  t.hardening_std = j.value("hardening_std", t.hardening_std);
  t.seed = j.value("seed", t.seed);
  t.validate();
  return t;
}

SmoothingConfig smoothing_from_json(const nlohmann::json& j) {
  if (j.contains("version")) require_version(j, "fairpar-smooth-1");
  reject_unknown_keys(j, {"version", "sigma_cs", "sigma_rs", "n_center", "n_radius",
                          "n_select", "n_cert", "alpha_cs", "alpha_rs", "meb_iters"});
  SmoothingConfig s;
  s.sigma_cs = j.value("sigma_cs", s.sigma_cs);
  s.sigma_rs = j.value("sigma_rs", s.sigma_rs);
  s.n_center = j.value("n_center", s.n_center);
  s.n_radius = j.value("n_radius", s.n_radius);
  s.n_select = j.value("n_select", s.n_select);
  s.n_cert = j.value("n_cert", s.n_cert);
  s.alpha_cs = j.value("alpha_cs", s.alpha_cs);
  s.alpha_rs = j.value("alpha_rs", s.alpha_rs);
  s.meb_iters = j.value("meb_iters", s.meb_iters);
  s.validate();
  return s;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_version(j, "fairpar-run-1");
  reject_unknown_keys(j, {"version", "dataset", "synthetic", "train", "smoothing", "out",
                          "seed", "nodes", "threads"});
  RunConfig cfg;
  if (j.contains("dataset")) cfg.dataset_path = j.at("dataset").get<std::string>();
  if (j.contains("synthetic")) cfg.synthetic = synthetic_from_json(j.at("synthetic"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("smoothing")) cfg.smoothing = smoothing_from_json(j.at("smoothing"));
  cfg.out_dir = j.value("out", std::string());
  cfg.master_seed = j.value("seed", cfg.master_seed);
  std::string nodes = j.value("nodes", "test");
  if (nodes == "test")
    cfg.nodes = NodeSubset::Test;
  else if (nodes == "all")
    cfg.nodes = NodeSubset::All;
  else
    throw std::runtime_error("run config invalid: nodes must be 'test' or 'all'");
  cfg.threads = j.value("threads", 1);
  return cfg;
}

// ----- pipeline ---------------------------------------------------------------

FairnessReport run(const RunConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  EmbeddingDataset ds = stage("data", [&] {
    return cfg.dataset_path ? load_dataset(*cfg.dataset_path)
                            : generate_synthetic(*cfg.synthetic, cfg.master_seed);
  });

  SensitiveDirection dir =
      stage("direction", [&] { return compute_direction(ds, Scope::Train); });

  TrainConfig tc = cfg.train;
  tc.seed = cfg.master_seed;
  TrainResult tr = stage("train", [&] { return train(ds, tc, &dir); });

  ClassifierParams hardened = stage("harden", [&] {
    RngStream hrng(cfg.master_seed, stream_id(StreamKind::Harden));
    return harden_classifier(tr.adapter, tr.classifier, ds, tc.hardening_rounds,
                             tc.hardening_std, tc.lr, hrng);
  });

  std::vector<int> cert_nodes;
  if (cfg.nodes == NodeSubset::Test) {
    cert_nodes = ds.indices_of(Split::Test);
  } else {
    cert_nodes.resize(ds.n);
    for (int i = 0; i < ds.n; ++i) cert_nodes[i] = i;
  }

  FairnessReport rep;
  rep.certificates = stage("certify", [&] {
    return certify_nodes(tr.adapter, hardened, ds, dir, tc.eps, cfg.smoothing,
                         cfg.master_seed, cert_nodes, cfg.threads);
  });

  stage("metrics", [&] {
    auto test_idx = ds.indices_of(Split::Test);
    if (test_idx.empty()) throw std::runtime_error("no test nodes");
    std::vector<int> preds(test_idx.size()), labels(test_idx.size()), sens(test_idx.size());
    for (size_t i = 0; i < test_idx.size(); ++i) {
      Vec z = adapter_forward(tr.adapter, ds.row(test_idx[i]));
      preds[i] = predict_class(hardened, z);
      labels[i] = ds.labels[test_idx[i]];
      sens[i] = ds.sensitive[test_idx[i]];
    }
    AccF1 af = metric_acc_f1(preds, labels, ds.num_classes);
    rep.acc = af.acc;
    rep.macro_f1 = af.macro_f1;
    rep.dp = metric_dp_or_nan(preds, sens);
    rep.eo = metric_eo_or_nan(preds, labels, sens);
    return 0;
  });

  rep.certified = static_cast<long>(rep.certificates.size());
  rep.provable = 0;
  for (const NodeCertificate& c : rep.certificates)
    if (c.provable) ++rep.provable;
  rep.provable_fair_rate =
      rep.certified > 0 ? static_cast<double>(rep.provable) / static_cast<double>(rep.certified)
                        : 0.0;
  rep.config_echo = config_to_json(cfg);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  stage("report", [&] {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    auto p = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };
    std::ofstream rj(p("report.json"), std::ios::binary);
    if (!rj) throw std::runtime_error("cannot write report.json");
    rj << report_to_json(rep).dump(2) << "\n";
    std::ofstream rt(p("report.txt"), std::ios::binary);
    rt << report_to_text(rep);
    write_certificates_jsonl(rep.certificates, p("certificates.jsonl"));
    save_adapter(tr.adapter, p("adapter.json"));
    save_classifier(hardened, p("classifier.json"));
    write_history_csv(tr.history, p("history.csv"));
    return 0;
  });

  return rep;
}

}  // namespace fairpar
