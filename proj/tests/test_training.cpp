#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "fairpar/dataset.hpp"
#include "fairpar/metrics.hpp"
#include "fairpar/smoothing.hpp"
#include "fairpar/training.hpp"

using namespace fairpar;

namespace {

struct SmallModel {
  AdapterParams g;
  ClassifierParams d;
  std::vector<Vec> rows;
  std::vector<Example> batch;
  Vec alpha;
};

SmallModel make_model(uint64_t seed, int n = 4, int p = 4, int c = 2) {
  RngStream rng(seed, stream_id(StreamKind::Test));
  SmallModel m;
  m.g = init_adapter(p, std::max(1, p / 2), rng);
  m.d = init_classifier({p, std::max(1, p / 2), c}, rng);
  m.rows.resize(n);
  for (Vec& r : m.rows) {
    r.resize(p);
    for (double& x : r) x = rng.uniform(-2, 2);
  }
  for (int i = 0; i < n; ++i)
    m.batch.push_back({m.rows[i], static_cast<int>(rng.uniform_int(c))});
  m.alpha.resize(p);
  for (double& x : m.alpha) x = rng.uniform(-1, 1);
  return m;
}

SensitiveDirection direction_from(const Vec& alpha) {
  SensitiveDirection d;
  d.alpha = alpha;
  d.alpha_norm = norm2(alpha);
  d.n_pos = d.n_neg = 1;
  return d;
}

}  // namespace

TEST_CASE("randat with k=1, eps=0 collapses to plain cross-entropy") {
  SmallModel m = make_model(31);
  std::vector<Vec> offsets(m.batch.size(), Vec{0.0});
  double randat = randat_loss_at(m.g, m.d, m.batch, m.alpha, offsets);

  LossSpec plain;
  double ce = loss_value(m.g, m.d, m.batch, plain);
  CHECK(randat == ce);  // bit-identical collapse
}

TEST_CASE("randat equals the explicit 12-term enumeration") {
  SmallModel m = make_model(32);
  std::vector<Vec> offsets = {
      {-0.4, 0.1, 0.3}, {0.2, -0.2, 0.0}, {0.5, 0.4, -0.5}, {-0.1, -0.3, 0.25}};
  double got = randat_loss_at(m.g, m.d, m.batch, m.alpha, offsets);

  double outer = 0.0;
  for (size_t i = 0; i < m.batch.size(); ++i) {
    double inner = 0.0;
    for (double t : offsets[i]) {
      Vec shifted = m.rows[i];
      for (size_t j = 0; j < shifted.size(); ++j) shifted[j] += t * m.alpha[j];
      inner += cross_entropy(classifier_forward(m.d, adapter_forward(m.g, shifted)),
                             m.batch[i].y);
    }
    outer += inner / static_cast<double>(offsets[i].size());
  }
  double want = outer / static_cast<double>(m.batch.size());
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("randat loss vanishes when every augmented point is classified hard-right") {
  // adapter passes coordinate 0 through; classifier saturates on it
  AdapterParams g;
  g.w_down = Matrix(1, 2);
  g.b_down.assign(1, 0.0);
  g.w_up = Matrix(2, 1);
  g.b_up.assign(2, 0.0);
  g.w_down(0, 0) = 1.0;
  g.w_up(0, 0) = 1.0;

  ClassifierParams d;
  d.w.emplace_back(2, 2);
  d.b.emplace_back(2, 0.0);
  d.w[0](0, 0) = 100.0;
  d.w[0](1, 0) = -100.0;

  Vec h1 = {2.0, 0.0}, h2 = {3.0, 0.0};
  std::vector<Example> batch = {{h1, 0}, {h2, 0}};
  Vec alpha = {0.5, 0.0};
  std::vector<Vec> offsets = {{-0.4, 0.3}, {0.1, -0.2}};
  double loss = randat_loss_at(g, d, batch, alpha, offsets);
  CHECK(loss < 1e-6);
}

TEST_CASE("minmax with eps=0 or lambda=0 is exactly plain cross-entropy") {
  SmallModel m = make_model(33);
  LossSpec plain;
  double ce = loss_value(m.g, m.d, m.batch, plain);

  std::vector<Vec> zero_offsets(m.batch.size(), Vec{0.0, 0.0, 0.0});
  CHECK(minmax_loss_at(m.g, m.d, m.batch, m.alpha, zero_offsets, 0.7) == ce);

  std::vector<Vec> wide_offsets(m.batch.size(), Vec{-0.5, 0.25, 0.5});
  CHECK(minmax_loss_at(m.g, m.d, m.batch, m.alpha, wide_offsets, 0.0) == ce);
}

TEST_CASE("minmax fairness term equals max |t| * ||alpha|| for a pass-through adapter") {
  const int p = 2;
  AdapterParams g;
  g.w_down = Matrix(p, p);
  g.b_down.assign(p, 0.0);
  g.w_up = Matrix(p, p);
  g.b_up.assign(p, 0.0);
  for (int i = 0; i < p; ++i) {
    g.w_down(i, i) = 1.0;
    g.w_up(i, i) = 1.0;
  }
  ClassifierParams d;  // zero single layer -> CE is exactly ln 2
  d.w.emplace_back(2, p);
  d.b.emplace_back(2, 0.0);

  Vec h = {5.0, 5.0};  // stays positive along the segment, so ReLU is transparent
  std::vector<Example> batch = {{h, 0}};
  Vec alpha = {2.0, 0.0};
  std::vector<Vec> offsets = {{-0.4, 0.1, 0.3}};
  const double lambda = 2.5;
  double loss = minmax_loss_at(g, d, batch, alpha, offsets, lambda);
  // fairness term per node: max(0.8, 0.2, 0.6) = 0.8
  CHECK(loss - std::log(2.0) == doctest::Approx(lambda * 0.8).epsilon(1e-12));
}

TEST_CASE("randat loss concentrates as 1/k") {
  // pass-through adapter on strictly positive inputs, so the loss responds
  // smoothly to the sampled offsets
  const int p = 3;
  AdapterParams g;
  g.w_down = Matrix(p, p);
  g.b_down.assign(p, 0.0);
  g.w_up = Matrix(p, p);
  g.b_up.assign(p, 0.0);
  for (int i = 0; i < p; ++i) {
    g.w_down(i, i) = 1.0;
    g.w_up(i, i) = 1.0;
  }
  RngStream init(34, stream_id(StreamKind::Test));
  ClassifierParams d = init_classifier({p, 2, 2}, init);

  std::vector<Vec> rows = {{5.0, 4.0, 6.0}, {6.0, 5.0, 4.0}, {4.5, 5.5, 5.0}};
  std::vector<Example> batch;
  for (size_t i = 0; i < rows.size(); ++i)
    batch.push_back({rows[i], static_cast<int>(i % 2)});
  SensitiveDirection dir = direction_from({2.0, -1.0, 0.5});

  const int reps = 400;
  std::vector<double> variance;
  RngStream rng(35, stream_id(StreamKind::Test));
  for (int k : {1, 4, 16, 64}) {
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      double loss = randat_loss(g, d, batch, dir, 0.5, k, rng);
      sum += loss;
      sq += loss * loss;
    }
    double mean = sum / reps;
    variance.push_back(sq / reps - mean * mean);
  }
  CHECK(variance[0] > variance[1]);
  CHECK(variance[1] > variance[2]);
  CHECK(variance[2] > variance[3]);
  CHECK(variance[0] / variance[3] > 20.0);  // ideal ratio is 64
}

TEST_CASE("train is deterministic in (ds, cfg, seed)") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 120;
  spec.p = 6;
  EmbeddingDataset ds = generate_synthetic(spec, 51);
  SensitiveDirection dir = compute_direction(ds, Scope::Train);

  TrainConfig cfg;
  cfg.scheme = Scheme::MinMax;
  cfg.epochs = 40;
  cfg.k = 4;
  cfg.seed = 9;

  TrainResult a = train(ds, cfg, &dir);
  TrainResult b = train(ds, cfg, &dir);
  CHECK(a.adapter.w_down.a == b.adapter.w_down.a);
  CHECK(a.adapter.w_up.a == b.adapter.w_up.a);
  CHECK(a.classifier.w[0].a == b.classifier.w[0].a);
  CHECK(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].val_acc == b.history[i].val_acc);
  }

  cfg.seed = 10;
  TrainResult c = train(ds, cfg, &dir);
  CHECK(a.adapter.w_down.a != c.adapter.w_down.a);
}

TEST_CASE("naive training fits linearly separable labels") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 300;
  spec.p = 8;
  spec.planted_direction.assign(8, 0.0);
  spec.planted_direction[0] = 1.0;
  spec.task_signal.assign(8, 0.0);
  spec.task_signal[1] = 1.0;
  spec.task_gap = 6.0;
  spec.noise_std = 0.5;
  spec.label_leak = 0.0;
  EmbeddingDataset ds = generate_synthetic(spec, 61);

  TrainConfig cfg;
  cfg.scheme = Scheme::Naive;
  cfg.epochs = 300;
  TrainResult tr = train(ds, cfg, nullptr);

  auto train_idx = ds.indices_of(Split::Train);
  long correct = 0;
  for (int i : train_idx) {
    Vec z = adapter_forward(tr.adapter, ds.row(i));
    if (predict_class(tr.classifier, z) == ds.labels[i]) ++correct;
  }
  double acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
  CHECK(acc >= 0.95);
}

TEST_CASE("history carries one row per epoch with finite loss") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 80;
  spec.p = 4;
  EmbeddingDataset ds = generate_synthetic(spec, 71);
  TrainConfig cfg;
  cfg.epochs = 12;
  TrainResult tr = train(ds, cfg, nullptr);
  REQUIRE(tr.history.size() == 12);
  for (const EpochStats& row : tr.history) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.val_acc >= 0.0);
    CHECK(row.val_acc <= 1.0);
  }
  CHECK(tr.history.front().loss > tr.history.back().loss);
}

TEST_CASE("hardening with zero rounds returns the classifier unchanged") {
  SmallModel m = make_model(36);
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 40;
  spec.p = 4;
  EmbeddingDataset ds = generate_synthetic(spec, 81);
  RngStream rng(1, stream_id(StreamKind::Harden));
  ClassifierParams out = harden_classifier(m.g, m.d, ds, 0, 1.0, 0.01, rng);
  CHECK(out.w[0].a == m.d.w[0].a);
  CHECK(out.b[0] == m.d.b[0]);
  CHECK_THROWS_AS(harden_classifier(m.g, m.d, ds, -1, 1.0, 0.01, rng),
                  std::invalid_argument);
}

TEST_CASE("hardening never touches the adapter") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 200;
  spec.p = 6;
  EmbeddingDataset ds = generate_synthetic(spec, 91);
  TrainConfig cfg;
  cfg.epochs = 30;
  TrainResult tr = train(ds, cfg, nullptr);
  AdapterParams snapshot = tr.adapter;

  RngStream rng(2, stream_id(StreamKind::Harden));
  ClassifierParams hardened =
      harden_classifier(tr.adapter, tr.classifier, ds, 25, 1.0, 0.01, rng);
  CHECK(tr.adapter.w_down.a == snapshot.w_down.a);
  CHECK(tr.adapter.b_down == snapshot.b_down);
  CHECK(tr.adapter.w_up.a == snapshot.w_up.a);
  CHECK(tr.adapter.b_up == snapshot.b_up);
  CHECK(hardened.w[0].a != tr.classifier.w[0].a);  // but the classifier did move
}

TEST_CASE("vanishing noise hardening behaves like plain fine-tuning") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 400;
  spec.p = 8;
  spec.task_gap = 4.0;
  EmbeddingDataset ds = generate_synthetic(spec, 101);
  TrainConfig cfg;
  cfg.epochs = 200;
  TrainResult tr = train(ds, cfg, nullptr);

  auto test_acc = [&](const ClassifierParams& d) {
    auto idx = ds.indices_of(Split::Test);
    long correct = 0;
    for (int i : idx) {
      Vec z = adapter_forward(tr.adapter, ds.row(i));
      if (predict_class(d, z) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };

  RngStream rng(3, stream_id(StreamKind::Harden));
  ClassifierParams tiny_noise =
      harden_classifier(tr.adapter, tr.classifier, ds, 100, 1e-9, 0.01, rng);
  double acc_before = test_acc(tr.classifier);
  double acc_after = test_acc(tiny_noise);
  CHECK(std::abs(acc_after - acc_before) <= 0.02);
}

TEST_CASE("hardening raises the mean certified d_rs") {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.n = 400;
  spec.p = 8;
  spec.task_gap = 6.0;
  spec.group_gap = 1.0;
  spec.noise_std = 1.0;
  spec.label_leak = 0.0;
  EmbeddingDataset ds = generate_synthetic(spec, 111);
  SensitiveDirection dir = compute_direction(ds, Scope::Train);

  TrainConfig cfg;
  cfg.scheme = Scheme::Naive;
  cfg.epochs = 250;
  TrainResult tr = train(ds, cfg, nullptr);
  RngStream rng(4, stream_id(StreamKind::Harden));
  ClassifierParams hardened =
      harden_classifier(tr.adapter, tr.classifier, ds, 100, 1.0, 0.01, rng);

  SmoothingConfig scfg;
  scfg.n_center = 1200;
  scfg.n_radius = 1200;
  scfg.n_select = 300;
  scfg.n_cert = 1500;

  auto mean_drs = [&](const ClassifierParams& d) {
    auto idx = ds.indices_of(Split::Test);
    double sum = 0.0;
    int count = 0;
    for (size_t i = 0; i < idx.size() && count < 25; ++i, ++count) {
      NodeCertificate cert =
          certify_node(tr.adapter, d, ds.row(idx[i]), dir, 0.5, scfg, 777, idx[i]);
      sum += cert.d_rs.value_or(0.0);
    }
    return sum / count;
  };

  double before = mean_drs(tr.classifier);
  double after = mean_drs(hardened);
  CHECK(after > before);
}
