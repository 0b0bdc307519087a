#include "fairpar/augmenter.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "fairpar/nn.hpp"

namespace fairpar {

namespace {

bool in_scope(Split s, Scope scope) {
  switch (scope) {
    case Scope::Train: return s == Split::Train;
    case Scope::Val: return s == Split::Val;
    case Scope::Test: return s == Split::Test;
    case Scope::All: return true;
  }
  return false;
}

}  // namespace

SensitiveDirection compute_direction(const EmbeddingDataset& ds, Scope scope) {
  ds.validate();
  Vec mean_pos(ds.p, 0.0), mean_neg(ds.p, 0.0);
  long n_pos = 0, n_neg = 0;
  for (int i = 0; i < ds.n; ++i) {
    if (!in_scope(ds.split[i], scope)) continue;
    auto r = ds.row(i);
    if (ds.sensitive[i] == 1) {
      for (int j = 0; j < ds.p; ++j) mean_pos[j] += r[j];
      ++n_pos;
    } else {
      for (int j = 0; j < ds.p; ++j) mean_neg[j] += r[j];
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::runtime_error("compute_direction: empty group (n_pos=" + std::to_string(n_pos) +
                             ", n_neg=" + std::to_string(n_neg) + ")");
  SensitiveDirection dir;
  dir.alpha.resize(ds.p);
  for (int j = 0; j < ds.p; ++j)
    dir.alpha[j] = mean_pos[j] / static_cast<double>(n_pos) -
                   mean_neg[j] / static_cast<double>(n_neg);
  dir.alpha_norm = norm2(dir.alpha);
  dir.n_pos = n_pos;
  dir.n_neg = n_neg;
  return dir;
}

Vec sample_offsets(int k, double eps, RngStream& rng) {
  if (k < 1) throw std::invalid_argument("sample_offsets: k must be >= 1");
  if (eps < 0) throw std::invalid_argument("sample_offsets: eps must be >= 0");
  Vec out(k);
  for (double& t : out) t = rng.uniform(-eps, eps);
  return out;
}

AugmentationSet make_augmentation_set(int base, int k, double eps, RngStream& rng) {
  return {base, sample_offsets(k, eps, rng)};
}

Vec AugmentationSet::materialize(std::span<const double> h, std::span<const double> alpha,
                                 int j) const {
  check_dim(alpha.size(), h.size(), "augmentation direction");
  Vec out(h.begin(), h.end());
  double t = offsets.at(j);
  for (size_t c = 0; c < out.size(); ++c) out[c] += t * alpha[c];
  return out;
}

Vec rotated_control(const SensitiveDirection& dir, double angle_deg, RngStream& rng) {
  const size_t p = dir.alpha.size();
  if (p < 2) throw std::invalid_argument("rotated_control: need p >= 2");
  if (dir.alpha_norm <= 0) throw std::invalid_argument("rotated_control: zero direction");
  if (angle_deg == 0.0) return dir.alpha;

  Vec unit(p);
  for (size_t j = 0; j < p; ++j) unit[j] = dir.alpha[j] / dir.alpha_norm;

  // random unit vector orthogonal to alpha (two Gram-Schmidt passes)
  Vec w(p);
  double wn = 0.0;
  do {
    rng.normal_fill(w);
    for (int pass = 0; pass < 2; ++pass) {
      double proj = dot(w, unit);
      for (size_t j = 0; j < p; ++j) w[j] -= proj * unit[j];
    }
    wn = norm2(w);
  } while (wn < 1e-12);
  for (size_t j = 0; j < p; ++j) w[j] /= wn;

  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  Vec out(p);
  for (size_t j = 0; j < p; ++j) out[j] = c * unit[j] + s * w[j];
  double on = norm2(out);
  for (size_t j = 0; j < p; ++j) out[j] *= dir.alpha_norm / on;
  return out;
}

std::vector<double> probe_sensitive_accuracy(const EmbeddingDataset& ds,
                                             std::span<const double> direction,
                                             std::span<const double> t_grid,
                                             const ProbeConfig& cfg, uint64_t seed) {
  ds.validate();
  check_dim(direction.size(), static_cast<size_t>(ds.p), "probe direction");
  if (t_grid.empty()) throw std::invalid_argument("probe: empty t grid");

  auto train_idx = ds.indices_of(Split::Train);
  auto test_idx = ds.indices_of(Split::Test);
  if (train_idx.empty() || test_idx.empty())
    throw std::runtime_error("probe: degenerate splits (need train and test nodes)");
  bool has0 = false, has1 = false;
  for (int i : train_idx) (ds.sensitive[i] ? has1 : has0) = true;
  if (!has0 || !has1) throw std::runtime_error("probe: a sensitive group is empty in train");

  // linear probe, trained on (h_i, s_i)
  RngStream init_rng(seed, stream_id(StreamKind::ProbeInit));
  ClassifierParams probe = init_classifier({ds.p, 2}, init_rng);
  std::vector<Example> batch;
  batch.reserve(train_idx.size());
  for (int i : train_idx) batch.push_back({ds.row(i), ds.sensitive[i]});

  OptimizerState st = OptimizerState::make(cfg.lr, param_count(probe));
  for (int e = 0; e < cfg.epochs; ++e) {
    ClassifierGrads gr = classifier_backward(probe, batch);
    auto pv = tensor_views(probe);
    auto gv = tensor_views(std::as_const(gr.grads));
    adam_step(pv, gv, st);
  }

  std::vector<double> acc(t_grid.size(), 0.0);
  Vec shifted(ds.p);
  for (size_t ti = 0; ti < t_grid.size(); ++ti) {
    double t = t_grid[ti];
    long correct = 0;
    for (int i : test_idx) {
      auto r = ds.row(i);
      for (int j = 0; j < ds.p; ++j) shifted[j] = r[j] + t * direction[j];
      if (predict_class(probe, shifted) == ds.sensitive[i]) ++correct;
    }
    acc[ti] = static_cast<double>(correct) / static_cast<double>(test_idx.size());
  }
  return acc;
}

}  // namespace fairpar
