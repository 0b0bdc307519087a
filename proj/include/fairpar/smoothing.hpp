#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fairpar/augmenter.hpp"
#include "fairpar/linalg.hpp"
#include "fairpar/nn.hpp"
#include "fairpar/rng.hpp"

namespace fairpar {

// ----- statistical primitives ----------------------------------------------

// Standard normal CDF (erfc-based, accurate to machine precision).
double normal_cdf(double x);

// Inverse standard normal CDF; throws for p outside (0,1). Absolute error
// below 1e-9 across p in [1e-10, 1-1e-10] (rational initial guess plus one
// Halley refinement).
double normal_quantile(double p);

// One-sided Clopper-Pearson lower confidence bound: the largest p such that
// P(Bin(n, p) >= k) >= alpha, i.e. the Beta(k, n-k+1) quantile at alpha.
double binom_lower(long k, long n, double alpha);

// ----- minimum enclosing ball (Badoiu-Clarkson core-set iteration) ---------

struct MebResult {
  Vec center;
  double radius = 0.0;
};

MebResult meb_center(std::span<const Vec> points, int iters);

// ----- certification --------------------------------------------------------

struct SmoothingConfig {
  double sigma_cs = 0.25;  // adapter smoothing noise
  double sigma_rs = 1.0;   // classifier smoothing noise
  int n_center = 10000;    // samples for the center estimate
  int n_radius = 10000;    // fresh samples for the output-bound quantile
  int n_select = 1000;     // votes to pick the candidate class
  int n_cert = 10000;      // fresh votes for the lower bound on p_A
  double alpha_cs = 0.005;
  double alpha_rs = 0.005;
  int meb_iters = 100;

  void validate() const;
};

struct CenterCertificate {
  Vec z;  // smoothed adapter output (enclosing-ball center estimate)
  std::optional<double> d_cs;

  bool abstain() const { return !d_cs.has_value(); }
};

struct RsCertificate {
  std::optional<int> y_hat;
  double p_a_lower = 0.0;
  std::optional<double> d_rs;

  bool abstain() const { return !y_hat.has_value(); }
};

struct NodeCertificate {
  int node = 0;
  double eps1 = 0.0;
  std::optional<double> d_cs;
  std::optional<double> d_rs;
  std::optional<int> y_hat;
  bool abstain_cs = true;
  bool abstain_rs = true;
  bool provable = false;
  double confidence = 0.0;
};

// Vector-valued map evaluated in place (adapter or any test stand-in); the
// output span has the map's output dimension.
using MapFn = std::function<void(std::span<const double>, std::span<double>)>;
using ClassifyFn = std::function<int(std::span<const double>)>;

MapFn adapter_map(const AdapterParams& g);
ClassifyFn classifier_map(const ClassifierParams& d);

// Certified output bound for the smoothed map at h under perturbations of
// L2 size eps1. Draws n_center samples for the center, n_radius fresh
// samples for the distance quantile; abstains when the target quantile level
// reaches 1. Deterministic per rng stream.
CenterCertificate center_smooth_certify(const MapFn& g, int out_dim,
                                        std::span<const double> h, double eps1,
                                        const SmoothingConfig& cfg, RngStream& rng);

// Certified local robustness radius of the smoothed classifier at z:
// candidate class from n_select votes, Clopper-Pearson bound from n_cert
// fresh votes, two-class radius sigma_rs * Phi^{-1}(pA_lower).
RsCertificate rs_predict_certify(const ClassifyFn& d, int num_classes,
                                 std::span<const double> z, const SmoothingConfig& cfg,
                                 RngStream& rng);

// Certified input radius along the sensitive direction.
double eps1_from(const SensitiveDirection& dir, double eps);

// Pure composition rule: provable iff neither stage abstained and d_cs < d_rs.
NodeCertificate compose_certificate(int node, double eps1, const CenterCertificate& cs,
                                    const RsCertificate& rs, const SmoothingConfig& cfg);

// Full per-node certification. Streams are derived from (master_seed, node),
// so results are bit-identical regardless of evaluation order or threading.
NodeCertificate certify_node(const AdapterParams& g, const ClassifierParams& d,
                             std::span<const double> h, const SensitiveDirection& dir,
                             double eps, const SmoothingConfig& cfg, uint64_t master_seed,
                             int node);

}  // namespace fairpar
