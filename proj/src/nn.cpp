#include "fairpar/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairpar {

void AdapterParams::validate() const {
  int q = w_down.rows, p = w_down.cols;
  if (q < 1 || p < 1) throw std::runtime_error("adapter invalid: empty projection");
  if (w_up.rows != p || w_up.cols != q)
    throw std::runtime_error("adapter invalid: up/down shapes do not chain");
  if (b_down.size() != static_cast<size_t>(q) || b_up.size() != static_cast<size_t>(p))
    throw std::runtime_error("adapter invalid: bias length mismatch");
  for (const auto* t : {&w_down.a, &b_down, &w_up.a, &b_up})
    if (!all_finite(*t)) throw std::runtime_error("adapter invalid: non-finite parameter");
}

void ClassifierParams::validate() const {
  if (w.empty() || w.size() != b.size())
    throw std::runtime_error("classifier invalid: layer list empty or mismatched");
  for (size_t l = 0; l < w.size(); ++l) {
    if (w[l].rows < 1 || w[l].cols < 1)
      throw std::runtime_error("classifier invalid: empty layer");
    if (b[l].size() != static_cast<size_t>(w[l].rows))
      throw std::runtime_error("classifier invalid: bias length mismatch");
    if (l > 0 && w[l].cols != w[l - 1].rows)
      throw std::runtime_error("classifier invalid: consecutive layer dims do not chain");
    if (!all_finite(w[l].a) || !all_finite(b[l]))
      throw std::runtime_error("classifier invalid: non-finite parameter");
  }
}

namespace {

void init_layer(Matrix& w, Vec& b, int out, int in, RngStream& rng) {
  w = Matrix(out, in);
  b.assign(out, 0.0);
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& x : w.a) x = rng.uniform(-bound, bound);
  for (double& x : b) x = rng.uniform(-bound, bound);
}

inline double relu(double x) { return x > 0 ? x : 0.0; }

}  // namespace

AdapterParams init_adapter(int p, int q, RngStream& rng) {
  if (p < 1 || q < 1) throw std::invalid_argument("init_adapter: need p >= 1, q >= 1");
  AdapterParams g;
  init_layer(g.w_down, g.b_down, q, p, rng);
  init_layer(g.w_up, g.b_up, p, q, rng);
  return g;
}

ClassifierParams init_classifier(const std::vector<int>& dims, RngStream& rng) {
  if (dims.size() < 2) throw std::invalid_argument("init_classifier: need at least in/out dims");
  ClassifierParams d;
  d.w.resize(dims.size() - 1);
  d.b.resize(dims.size() - 1);
  for (size_t l = 0; l + 1 < dims.size(); ++l)
    init_layer(d.w[l], d.b[l], dims[l + 1], dims[l], rng);
  return d;
}

void adapter_forward_into(const AdapterParams& g, std::span<const double> h,
                          std::span<double> hidden, std::span<double> out) {
  affine_into(g.w_down, h, g.b_down, hidden);
  for (double& x : hidden) x = relu(x);
  affine_into(g.w_up, hidden, g.b_up, out);
}

Vec adapter_forward(const AdapterParams& g, std::span<const double> h) {
  Vec hidden(g.hidden_dim()), out(g.in_dim());
  adapter_forward_into(g, h, hidden, out);
  return out;
}

Vec classifier_forward(const ClassifierParams& d, std::span<const double> z) {
  Vec cur(z.begin(), z.end());
  Vec next;
  for (int l = 0; l < d.num_layers(); ++l) {
    next.assign(d.w[l].rows, 0.0);
    affine_into(d.w[l], cur, d.b[l], next);
    if (l + 1 < d.num_layers())
      for (double& x : next) x = relu(x);
    cur.swap(next);
  }
  return cur;
}

int argmax_class(std::span<const double> logits) {
  int best = 0;
  for (size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = static_cast<int>(c);
  return best;
}

int predict_class(const ClassifierParams& d, std::span<const double> z) {
  Vec logits = classifier_forward(d, z);
  return argmax_class(logits);
}

double cross_entropy(std::span<const double> logits, int y) {
  if (y < 0 || y >= static_cast<int>(logits.size()))
    throw std::invalid_argument("cross_entropy: label out of range");
  if (!all_finite(logits)) throw std::invalid_argument("cross_entropy: non-finite logits");
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[y] - mx);
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace {

// Forward/backward caches reused across the batch.
struct Workspace {
  Vec ada_pre;    // q, pre-activation of the down projection
  Vec ada_hid;    // q, relu(ada_pre)
  Vec ada_out;    // p
  Vec ada_delta;  // p, upstream gradient at the adapter output
  Vec dq;         // q
  std::vector<Vec> cls_in;   // input to each classifier layer
  std::vector<Vec> cls_pre;  // pre-activation of each layer
  Vec dlogits;
  Vec dcur;

  void init(const AdapterParams& g, const ClassifierParams& d) {
    ada_pre.assign(g.hidden_dim(), 0.0);
    ada_hid.assign(g.hidden_dim(), 0.0);
    ada_out.assign(g.in_dim(), 0.0);
    ada_delta.assign(g.in_dim(), 0.0);
    dq.assign(g.hidden_dim(), 0.0);
    cls_in.resize(d.num_layers());
    cls_pre.resize(d.num_layers());
    for (int l = 0; l < d.num_layers(); ++l) {
      cls_in[l].assign(d.w[l].cols, 0.0);
      cls_pre[l].assign(d.w[l].rows, 0.0);
    }
    dlogits.assign(d.out_dim(), 0.0);
    dcur.assign(0, 0.0);
  }
};

AdapterParams zero_like(const AdapterParams& g) {
  AdapterParams z;
  z.w_down = Matrix(g.w_down.rows, g.w_down.cols);
  z.b_down.assign(g.b_down.size(), 0.0);
  z.w_up = Matrix(g.w_up.rows, g.w_up.cols);
  z.b_up.assign(g.b_up.size(), 0.0);
  return z;
}

ClassifierParams zero_like(const ClassifierParams& d) {
  ClassifierParams z;
  z.w.reserve(d.w.size());
  z.b.reserve(d.b.size());
  for (size_t l = 0; l < d.w.size(); ++l) {
    z.w.emplace_back(d.w[l].rows, d.w[l].cols);
    z.b.emplace_back(d.b[l].size(), 0.0);
  }
  return z;
}

// Runs the adapter forward, caching pre-activations for the backward pass.
void adapter_fwd(const AdapterParams& g, std::span<const double> h, Workspace& ws) {
  affine_into(g.w_down, h, g.b_down, ws.ada_pre);
  for (size_t i = 0; i < ws.ada_pre.size(); ++i) ws.ada_hid[i] = relu(ws.ada_pre[i]);
  affine_into(g.w_up, ws.ada_hid, g.b_up, ws.ada_out);
}

// Accumulates adapter gradients for upstream gradient ws.ada_delta at input h.
// Assumes ws.ada_pre / ws.ada_hid hold the caches of the matching forward.
void adapter_bwd(const AdapterParams& g, std::span<const double> h, Workspace& ws,
                 AdapterParams* grads) {
  if (!grads) return;
  accumulate_outer(grads->w_up, grads->b_up, ws.ada_delta, ws.ada_hid, 1.0);
  matvec_t_into(g.w_up, ws.ada_delta, ws.dq);
  for (size_t i = 0; i < ws.dq.size(); ++i)
    if (ws.ada_pre[i] <= 0) ws.dq[i] = 0.0;
  accumulate_outer(grads->w_down, grads->b_down, ws.dq, h, 1.0);
}

// Classifier forward with caches; returns the logits (stored in ws.cls_pre.back()).
std::span<const double> classifier_fwd(const ClassifierParams& d,
                                       std::span<const double> z, Workspace& ws) {
  check_dim(z.size(), ws.cls_in[0].size(), "classifier input");
  std::copy(z.begin(), z.end(), ws.cls_in[0].begin());
  for (int l = 0; l < d.num_layers(); ++l) {
    affine_into(d.w[l], ws.cls_in[l], d.b[l], ws.cls_pre[l]);
    if (l + 1 < d.num_layers())
      for (size_t i = 0; i < ws.cls_pre[l].size(); ++i)
        ws.cls_in[l + 1][i] = relu(ws.cls_pre[l][i]);
  }
  return ws.cls_pre.back();
}

// Backprop ws.dlogits through the classifier; returns gradient w.r.t. its
// input in ws.dcur. Assumes caches from the matching classifier_fwd.
void classifier_bwd(const ClassifierParams& d, Workspace& ws, ClassifierParams* grads) {
  Vec delta = ws.dlogits;
  for (int l = d.num_layers() - 1; l >= 0; --l) {
    if (grads) accumulate_outer(grads->w[l], grads->b[l], delta, ws.cls_in[l], 1.0);
    ws.dcur.assign(d.w[l].cols, 0.0);
    matvec_t_into(d.w[l], delta, ws.dcur);
    if (l > 0)
      for (size_t i = 0; i < ws.dcur.size(); ++i)
        if (ws.cls_pre[l - 1][i] <= 0) ws.dcur[i] = 0.0;
    delta = ws.dcur;
  }
}

// softmax(logits) - onehot(y), scaled; also returns the cross-entropy value.
double ce_delta(std::span<const double> logits, int y, double scale, Vec& out) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  out.resize(logits.size());
  for (size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - mx);
    sum += out[c];
  }
  for (size_t c = 0; c < logits.size(); ++c) out[c] = scale * (out[c] / sum);
  out[y] -= scale;
  return std::log(sum) - (logits[y] - mx);
}

// One cross-entropy term through d(g(x)): forward, then (optionally) backward.
double ce_through(const AdapterParams& g, const ClassifierParams& d,
                  std::span<const double> x, int y, double scale, Workspace& ws,
                  AdapterParams* ga, ClassifierParams* gd) {
  adapter_fwd(g, x, ws);
  auto logits = classifier_fwd(d, ws.ada_out, ws);
  double ce = ce_delta(logits, y, scale, ws.dlogits);
  if (ga || gd) {
    classifier_bwd(d, ws, gd);
    ws.ada_delta = ws.dcur;
    adapter_bwd(g, x, ws, ga);
  }
  return ce;
}

double run_loss(const AdapterParams& g, const ClassifierParams& d,
                std::span<const Example> batch, const LossSpec& spec,
                AdapterParams* ga, ClassifierParams* gd) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  g.validate();
  d.validate();
  const int p = g.in_dim();
  if (d.in_dim() != p) throw std::invalid_argument("loss: classifier input dim != adapter output dim");
  if (spec.kind != LossKind::CrossEntropy) {
    if (spec.direction.size() != static_cast<size_t>(p))
      throw std::invalid_argument("loss: direction length != p");
    if (!spec.offsets || spec.offsets->size() != batch.size())
      throw std::invalid_argument("loss: offsets missing or not batch-aligned");
  }

  for (const Example& ex : batch)
    check_dim(ex.h.size(), static_cast<size_t>(p), "loss batch row");

  Workspace ws;
  ws.init(g, d);
  const double n = static_cast<double>(batch.size());
  Vec shifted(p), base_out(p), aug_out(p), diff(p);
  double total = 0.0;

  switch (spec.kind) {
    case LossKind::CrossEntropy: {
      for (const Example& ex : batch)
        total += ce_through(g, d, ex.h, ex.y, 1.0 / n, ws, ga, gd);
      total /= n;
      break;
    }
    case LossKind::RandAT: {
      for (size_t i = 0; i < batch.size(); ++i) {
        const Example& ex = batch[i];
        const Vec& ts = (*spec.offsets)[i];
        if (ts.empty()) throw std::invalid_argument("loss: empty offset list");
        const double k = static_cast<double>(ts.size());
        double inner = 0.0;
        for (double t : ts) {
          for (int j = 0; j < p; ++j) shifted[j] = ex.h[j] + t * spec.direction[j];
          inner += ce_through(g, d, shifted, ex.y, 1.0 / (n * k), ws, ga, gd);
        }
        total += inner / k;
      }
      total /= n;
      break;
    }
    case LossKind::MinMax: {
      double fair_total = 0.0;
      for (size_t i = 0; i < batch.size(); ++i) {
        const Example& ex = batch[i];
        const Vec& ts = (*spec.offsets)[i];
        if (ts.empty()) throw std::invalid_argument("loss: empty offset list");
        adapter_fwd(g, ex.h, ws);
        base_out = ws.ada_out;
        // worst augmented point along the direction segment
        double best = -1.0;
        int best_j = -1;
        for (size_t j = 0; j < ts.size(); ++j) {
          for (int c = 0; c < p; ++c) shifted[c] = ex.h[c] + ts[j] * spec.direction[c];
          adapter_fwd(g, shifted, ws);
          double dist = dist2(base_out, ws.ada_out);
          if (dist > best) {
            best = dist;
            best_j = static_cast<int>(j);
          }
        }
        fair_total += best;
        if ((ga || gd) && best > 0.0) {
          for (int c = 0; c < p; ++c) shifted[c] = ex.h[c] + ts[best_j] * spec.direction[c];
          adapter_fwd(g, shifted, ws);
          aug_out = ws.ada_out;
          double scale = spec.lambda / (n * best);
          for (int c = 0; c < p; ++c) diff[c] = scale * (base_out[c] - aug_out[c]);
          // d||u||/dtheta through the augmented branch (caches are current)
          for (int c = 0; c < p; ++c) ws.ada_delta[c] = -diff[c];
          adapter_bwd(g, shifted, ws, ga);
          // and through the base branch
          adapter_fwd(g, ex.h, ws);
          ws.ada_delta = diff;
          adapter_bwd(g, ex.h, ws, ga);
        }
        total += ce_through(g, d, ex.h, ex.y, 1.0 / n, ws, ga, gd);
      }
      total = total / n + spec.lambda * (fair_total / n);
      break;
    }
  }
  return total;
}

}  // namespace

ModelGrads backward(const AdapterParams& g, const ClassifierParams& d,
                    std::span<const Example> batch, const LossSpec& spec) {
  ModelGrads out;
  out.adapter = zero_like(g);
  out.classifier = zero_like(d);
  out.loss = run_loss(g, d, batch, spec, &out.adapter, &out.classifier);
  return out;
}

double loss_value(const AdapterParams& g, const ClassifierParams& d,
                  std::span<const Example> batch, const LossSpec& spec) {
  return run_loss(g, d, batch, spec, nullptr, nullptr);
}

ClassifierGrads classifier_backward(const ClassifierParams& d,
                                    std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("classifier_backward: empty batch");
  d.validate();
  ClassifierGrads out;
  out.grads = zero_like(d);
  Workspace ws;
  ws.cls_in.resize(d.num_layers());
  ws.cls_pre.resize(d.num_layers());
  for (int l = 0; l < d.num_layers(); ++l) {
    ws.cls_in[l].assign(d.w[l].cols, 0.0);
    ws.cls_pre[l].assign(d.w[l].rows, 0.0);
  }
  ws.dlogits.assign(d.out_dim(), 0.0);
  const double n = static_cast<double>(batch.size());
  for (const Example& ex : batch) {
    auto logits = classifier_fwd(d, ex.h, ws);
    out.loss += ce_delta(logits, ex.y, 1.0 / n, ws.dlogits);
    classifier_bwd(d, ws, &out.grads);
  }
  out.loss /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

OptimizerState OptimizerState::make(double lr, size_t n_params) {
  OptimizerState st;
  st.lr = lr;
  st.m.assign(n_params, 0.0);
  st.v.assign(n_params, 0.0);
  return st;
}

std::vector<std::span<double>> tensor_views(AdapterParams& p) {
  return {std::span<double>(p.w_down.a), std::span<double>(p.b_down),
          std::span<double>(p.w_up.a), std::span<double>(p.b_up)};
}
std::vector<std::span<const double>> tensor_views(const AdapterParams& p) {
  return {std::span<const double>(p.w_down.a), std::span<const double>(p.b_down),
          std::span<const double>(p.w_up.a), std::span<const double>(p.b_up)};
}
std::vector<std::span<double>> tensor_views(ClassifierParams& p) {
  std::vector<std::span<double>> out;
  for (size_t l = 0; l < p.w.size(); ++l) {
    out.emplace_back(p.w[l].a);
    out.emplace_back(p.b[l]);
  }
  return out;
}
std::vector<std::span<const double>> tensor_views(const ClassifierParams& p) {
  std::vector<std::span<const double>> out;
  for (size_t l = 0; l < p.w.size(); ++l) {
    out.emplace_back(p.w[l].a);
    out.emplace_back(p.b[l]);
  }
  return out;
}

size_t param_count(const AdapterParams& p) {
  return p.w_down.a.size() + p.b_down.size() + p.w_up.a.size() + p.b_up.size();
}
size_t param_count(const ClassifierParams& p) {
  size_t n = 0;
  for (size_t l = 0; l < p.w.size(); ++l) n += p.w[l].a.size() + p.b[l].size();
  return n;
}

void adam_step(std::span<std::span<double>> params,
               std::span<std::span<const double>> grads, OptimizerState& st) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: tensor list mismatch");
  size_t total = 0;
  for (size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size())
      throw std::invalid_argument("adam_step: tensor shape mismatch");
    total += params[t].size();
  }
  if (st.m.size() != total)
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  for (auto gs : grads)
    if (!all_finite(gs)) throw std::runtime_error("adam_step: non-finite gradient");

  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  size_t o = 0;
  for (size_t t = 0; t < params.size(); ++t) {
    auto ps = params[t];
    auto gs = grads[t];
    for (size_t i = 0; i < ps.size(); ++i, ++o) {
      st.m[o] = st.beta1 * st.m[o] + (1.0 - st.beta1) * gs[i];
      st.v[o] = st.beta2 * st.v[o] + (1.0 - st.beta2) * gs[i] * gs[i];
      double mhat = st.m[o] / c1;
      double vhat = st.v[o] / c2;
      ps[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace fairpar
