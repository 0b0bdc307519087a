#include "fairpar/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "fairpar/metrics.hpp"

namespace fairpar {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Naive: return "naive";
    case Scheme::RandAT: return "randat";
    case Scheme::MinMax: return "minmax";
  }
  return "?";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "naive") return Scheme::Naive;
  if (name == "randat") return Scheme::RandAT;
  if (name == "minmax") return Scheme::MinMax;
  throw std::runtime_error("unknown training scheme '" + name + "'");
}

void TrainConfig::validate() const {
  if (eps < 0) throw std::runtime_error("train config invalid: eps must be >= 0");
  if (k < 1) throw std::runtime_error("train config invalid: k must be >= 1");
  if (lambda < 0) throw std::runtime_error("train config invalid: lambda must be >= 0");
  if (epochs < 1) throw std::runtime_error("train config invalid: epochs must be >= 1");
  if (lr <= 0) throw std::runtime_error("train config invalid: lr must be > 0");
  if (hardening_rounds < 0)
    throw std::runtime_error("train config invalid: hardening_rounds must be >= 0");
  if (hardening_std <= 0)
    throw std::runtime_error("train config invalid: hardening_std must be > 0");
}

namespace {

std::vector<Vec> draw_offsets(size_t n, int k, double eps, RngStream& rng) {
  std::vector<Vec> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = sample_offsets(k, eps, rng);
  return out;
}

}  // namespace

double randat_loss_at(const AdapterParams& g, const ClassifierParams& d,
                      std::span<const Example> batch, std::span<const double> alpha,
                      const std::vector<Vec>& offsets) {
  LossSpec spec;
  spec.kind = LossKind::RandAT;
  spec.direction = alpha;
  spec.offsets = &offsets;
  return loss_value(g, d, batch, spec);
}

double randat_loss(const AdapterParams& g, const ClassifierParams& d,
                   std::span<const Example> batch, const SensitiveDirection& dir,
                   double eps, int k, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("randat_loss: empty batch");
  auto offsets = draw_offsets(batch.size(), k, eps, rng);
  return randat_loss_at(g, d, batch, dir.alpha, offsets);
}

double minmax_loss_at(const AdapterParams& g, const ClassifierParams& d,
                      std::span<const Example> batch, std::span<const double> alpha,
                      const std::vector<Vec>& offsets, double lambda) {
  LossSpec spec;
  spec.kind = LossKind::MinMax;
  spec.direction = alpha;
  spec.offsets = &offsets;
  spec.lambda = lambda;
  return loss_value(g, d, batch, spec);
}

double minmax_loss(const AdapterParams& g, const ClassifierParams& d,
                   std::span<const Example> batch, const SensitiveDirection& dir,
                   double eps, int k, double lambda, RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("minmax_loss: empty batch");
  auto offsets = draw_offsets(batch.size(), k, eps, rng);
  return minmax_loss_at(g, d, batch, dir.alpha, offsets, lambda);
}

TrainResult train(const EmbeddingDataset& ds, const TrainConfig& cfg,
                  const SensitiveDirection* dir) {
  ds.validate();
  cfg.validate();
  if (cfg.scheme != Scheme::Naive && dir == nullptr)
    throw std::invalid_argument("train: scheme needs a sensitive direction");

  auto train_idx = ds.indices_of(Split::Train);
  auto val_idx = ds.indices_of(Split::Val);
  if (train_idx.empty()) throw std::runtime_error("train: no labeled train nodes");

  std::vector<Example> batch;
  batch.reserve(train_idx.size());
  for (int i : train_idx) batch.push_back({ds.row(i), ds.labels[i]});

  const int p = ds.p;
  const int q = std::max(1, p / 2);
  RngStream ada_rng(cfg.seed, stream_id(StreamKind::AdapterInit));
  RngStream cls_rng(cfg.seed, stream_id(StreamKind::ClassifierInit));
  RngStream offset_rng(cfg.seed, stream_id(StreamKind::TrainOffsets));

  TrainResult res;
  res.adapter = init_adapter(p, q, ada_rng);
  res.classifier = init_classifier({p, std::max(1, p / 2), ds.num_classes}, cls_rng);

  OptimizerState st =
      OptimizerState::make(cfg.lr, param_count(res.adapter) + param_count(res.classifier));
  res.history.reserve(cfg.epochs);

  std::vector<int> val_preds(val_idx.size());
  std::vector<int> val_labels(val_idx.size()), val_sens(val_idx.size());
  for (size_t i = 0; i < val_idx.size(); ++i) {
    val_labels[i] = ds.labels[val_idx[i]];
    val_sens[i] = ds.sensitive[val_idx[i]];
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossSpec spec;
    std::vector<Vec> offsets;
    switch (cfg.scheme) {
      case Scheme::Naive:
        spec.kind = LossKind::CrossEntropy;
        break;
      case Scheme::RandAT:
        spec.kind = LossKind::RandAT;
        offsets = draw_offsets(batch.size(), cfg.k, cfg.eps, offset_rng);
        spec.direction = dir->alpha;
        spec.offsets = &offsets;
        break;
      case Scheme::MinMax:
        spec.kind = LossKind::MinMax;
        offsets = draw_offsets(batch.size(), cfg.k, cfg.eps, offset_rng);
        spec.direction = dir->alpha;
        spec.offsets = &offsets;
        spec.lambda = cfg.lambda;
        break;
    }

    ModelGrads grads = backward(res.adapter, res.classifier, batch, spec);

    std::vector<std::span<double>> pv = tensor_views(res.adapter);
    for (auto s : tensor_views(res.classifier)) pv.push_back(s);
    std::vector<std::span<const double>> gv = tensor_views(std::as_const(grads.adapter));
    for (auto s : tensor_views(std::as_const(grads.classifier))) gv.push_back(s);
    adam_step(pv, gv, st);

    EpochStats row;
    row.epoch = epoch;
    row.loss = grads.loss;
    if (!val_idx.empty()) {
      for (size_t i = 0; i < val_idx.size(); ++i) {
        Vec z = adapter_forward(res.adapter, ds.row(val_idx[i]));
        val_preds[i] = predict_class(res.classifier, z);
      }
      row.val_acc = metric_acc_f1(val_preds, val_labels, ds.num_classes).acc;
      row.val_dp = metric_dp_or_nan(val_preds, val_sens);
      row.val_eo = metric_eo_or_nan(val_preds, val_labels, val_sens);
    } else {
      row.val_acc = row.val_dp = row.val_eo = std::numeric_limits<double>::quiet_NaN();
    }
    res.history.push_back(row);
  }
  return res;
}

ClassifierParams harden_classifier(const AdapterParams& g, ClassifierParams d,
                                   const EmbeddingDataset& ds, int rounds, double std_dev,
                                   double lr, RngStream& rng) {
  if (rounds < 0) throw std::invalid_argument("harden_classifier: rounds must be >= 0");
  if (std_dev <= 0) throw std::invalid_argument("harden_classifier: std must be > 0");
  if (rounds == 0) return d;

  auto train_idx = ds.indices_of(Split::Train);
  if (train_idx.empty()) throw std::runtime_error("harden_classifier: no train nodes");

  // adapter outputs are fixed; only the noise is redrawn each round
  std::vector<Vec> clean(train_idx.size());
  for (size_t i = 0; i < train_idx.size(); ++i)
    clean[i] = adapter_forward(g, ds.row(train_idx[i]));

  const int p = g.in_dim();
  std::vector<Vec> noisy(train_idx.size(), Vec(p));
  std::vector<Example> batch(train_idx.size());

  OptimizerState st = OptimizerState::make(lr, param_count(d));
  for (int r = 0; r < rounds; ++r) {
    for (size_t i = 0; i < train_idx.size(); ++i) {
      for (int j = 0; j < p; ++j) noisy[i][j] = clean[i][j] + std_dev * rng.normal();
      batch[i] = {noisy[i], ds.labels[train_idx[i]]};
    }
    ClassifierGrads grads = classifier_backward(d, batch);
    auto pv = tensor_views(d);
    auto gv = tensor_views(std::as_const(grads.grads));
    adam_step(pv, gv, st);
  }
  return d;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "epoch,loss,val_acc,val_dp,val_eo\n";
  char buf[160];
  for (const EpochStats& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss,
                  r.val_acc, r.val_dp, r.val_eo);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace fairpar
