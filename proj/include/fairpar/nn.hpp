#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fairpar/linalg.hpp"
#include "fairpar/rng.hpp"

namespace fairpar {

// Bottleneck adapter: up(relu(down(h))), p -> q -> p.
struct AdapterParams {
  Matrix w_down;  // q x p
  Vec b_down;     // q
  Matrix w_up;    // p x q
  Vec b_up;       // p

  int in_dim() const { return w_down.cols; }
  int hidden_dim() const { return w_down.rows; }
  void validate() const;
};

// Feed-forward classifier: ReLU between layers, linear last layer.
struct ClassifierParams {
  std::vector<Matrix> w;  // layer l maps dims[l] -> dims[l+1]
  std::vector<Vec> b;

  int in_dim() const { return w.front().cols; }
  int out_dim() const { return w.back().rows; }
  int num_layers() const { return static_cast<int>(w.size()); }
  void validate() const;
};

AdapterParams init_adapter(int p, int q, RngStream& rng);
ClassifierParams init_classifier(const std::vector<int>& dims, RngStream& rng);

Vec adapter_forward(const AdapterParams& g, std::span<const double> h);
void adapter_forward_into(const AdapterParams& g, std::span<const double> h,
                          std::span<double> hidden, std::span<double> out);

Vec classifier_forward(const ClassifierParams& d, std::span<const double> z);
int argmax_class(std::span<const double> logits);  // ties go to the lowest index
int predict_class(const ClassifierParams& d, std::span<const double> z);

// -log softmax(logits)[y], computed with max subtraction.
double cross_entropy(std::span<const double> logits, int y);

// ----- training losses and their exact gradients ---------------------------

enum class LossKind { CrossEntropy, RandAT, MinMax };

struct Example {
  std::span<const double> h;
  int y;
};

// Offsets for the augmented losses: offsets[i] holds the k interpolation
// coefficients for batch element i (empty for plain cross-entropy).
struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  std::span<const double> direction;           // alpha, length p
  const std::vector<Vec>* offsets = nullptr;   // batch-aligned, each length k
  double lambda = 0.0;                         // MinMax fairness scale
};

struct ModelGrads {
  AdapterParams adapter;
  ClassifierParams classifier;
  double loss = 0.0;
};

// Exact analytic gradients of the batch loss with respect to every parameter.
ModelGrads backward(const AdapterParams& g, const ClassifierParams& d,
                    std::span<const Example> batch, const LossSpec& spec);

// Classifier-only pass over raw inputs (used by noise hardening).
struct ClassifierGrads {
  ClassifierParams grads;
  double loss = 0.0;
};
ClassifierGrads classifier_backward(const ClassifierParams& d,
                                    std::span<const Example> batch);

// Loss evaluation without gradients (same code path as backward's forward).
double loss_value(const AdapterParams& g, const ClassifierParams& d,
                  std::span<const Example> batch, const LossSpec& spec);

// ----- Adam -----------------------------------------------------------------

struct OptimizerState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Vec m;  // first moment, flat across all tensors
  Vec v;  // second moment

  static OptimizerState make(double lr, size_t n_params);
};

// Tensor views in a fixed order, so optimizer state lines up between calls.
std::vector<std::span<double>> tensor_views(AdapterParams& p);
std::vector<std::span<double>> tensor_views(ClassifierParams& p);
std::vector<std::span<const double>> tensor_views(const AdapterParams& p);
std::vector<std::span<const double>> tensor_views(const ClassifierParams& p);
size_t param_count(const AdapterParams& p);
size_t param_count(const ClassifierParams& p);

// Bias-corrected Adam update, in place. Throws on non-finite gradients.
void adam_step(std::span<std::span<double>> params,
               std::span<std::span<const double>> grads, OptimizerState& st);

}  // namespace fairpar
