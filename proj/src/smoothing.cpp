#include "fairpar/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace fairpar {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

namespace {

// Rational approximation for Phi^{-1} (Acklam), |error| < 1.15e-9.
double quantile_guess(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must lie strictly in (0,1)");
  // Work in the lower tail, where 0.5*erfc(-x/sqrt(2)) keeps full relative
  // precision; 1 - p is exact for p in [0.5, 1).
  bool flip = p > 0.5;
  double q = flip ? 1.0 - p : p;
  double x = quantile_guess(q);
  const double inv_sqrt2pi = 0.3989422804014326779;
  for (int it = 0; it < 2; ++it) {  // Halley refinement
    double e = 0.5 * std::erfc(-x * 0.7071067811865475244) - q;
    double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
    if (pdf <= 0.0) break;
    double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return flip ? -x : x;
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz).
double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
double betainc(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  double bt = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double binom_lower(long k, long n, double alpha) {
  if (k < 0 || n < 1 || k > n) throw std::invalid_argument("binom_lower: need 0 <= k <= n");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("binom_lower: alpha must lie in (0,1)");
  if (k == 0) return 0.0;
  if (k == n) return std::pow(alpha, 1.0 / static_cast<double>(n));
  // Beta(k, n-k+1) quantile at alpha, by bisection on the regularized
  // incomplete beta (increasing in x).
  double a = static_cast<double>(k), b = static_cast<double>(n - k + 1);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (betainc(a, b, mid) < alpha)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

MebResult meb_center(std::span<const Vec> points, int iters) {
  if (points.empty()) throw std::invalid_argument("meb_center: no points");
  if (iters < 1) throw std::invalid_argument("meb_center: iters must be >= 1");
  const size_t dim = points[0].size();
  for (const Vec& pt : points) check_dim(pt.size(), dim, "meb point");

  MebResult res;
  res.center.assign(dim, 0.0);
  for (const Vec& pt : points)
    for (size_t j = 0; j < dim; ++j) res.center[j] += pt[j];
  for (size_t j = 0; j < dim; ++j) res.center[j] /= static_cast<double>(points.size());

  for (int it = 1; it <= iters; ++it) {
    size_t far = 0;
    double best = -1.0;
    for (size_t i = 0; i < points.size(); ++i) {
      double dist = dist2(res.center, points[i]);
      if (dist > best) {
        best = dist;
        far = i;
      }
    }
    double step = 1.0 / static_cast<double>(it + 1);
    for (size_t j = 0; j < dim; ++j)
      res.center[j] += step * (points[far][j] - res.center[j]);
  }

  res.radius = 0.0;
  for (const Vec& pt : points) res.radius = std::max(res.radius, dist2(res.center, pt));
  return res;
}

void SmoothingConfig::validate() const {
  if (sigma_cs <= 0 || sigma_rs <= 0)
    throw std::runtime_error("smoothing config invalid: noise stds must be > 0");
  if (n_center < 1 || n_radius < 1 || n_select < 1 || n_cert < 1)
    throw std::runtime_error("smoothing config invalid: sample counts must be >= 1");
  if (!(alpha_cs > 0 && alpha_cs < 1 && alpha_rs > 0 && alpha_rs < 1 &&
        alpha_cs + alpha_rs < 1))
    throw std::runtime_error(
        "smoothing config invalid: need 0 < alpha_cs, alpha_rs and alpha_cs + alpha_rs < 1");
  if (meb_iters < 1) throw std::runtime_error("smoothing config invalid: meb_iters must be >= 1");
}

MapFn adapter_map(const AdapterParams& g) {
  auto hidden = std::make_shared<Vec>(g.hidden_dim());
  return [&g, hidden](std::span<const double> in, std::span<double> out) {
    adapter_forward_into(g, in, *hidden, out);
  };
}

ClassifyFn classifier_map(const ClassifierParams& d) {
  return [&d](std::span<const double> z) { return predict_class(d, z); };
}

CenterCertificate center_smooth_certify(const MapFn& g, int out_dim,
                                        std::span<const double> h, double eps1,
                                        const SmoothingConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (eps1 < 0) throw std::invalid_argument("center_smooth_certify: eps1 must be >= 0");

  const size_t p = h.size();
  Vec noisy(p);
  std::vector<Vec> samples(cfg.n_center, Vec(out_dim));
  for (int i = 0; i < cfg.n_center; ++i) {
    for (size_t j = 0; j < p; ++j) noisy[j] = h[j] + cfg.sigma_cs * rng.normal();
    g(noisy, samples[i]);
    if (!all_finite(samples[i]))
      throw std::runtime_error("center_smooth_certify: non-finite sample");
  }
  MebResult ball = meb_center(samples, cfg.meb_iters);

  CenterCertificate cert;
  cert.z = ball.center;

  Vec out(out_dim);
  Vec dist(cfg.n_radius);
  for (int i = 0; i < cfg.n_radius; ++i) {
    for (size_t j = 0; j < p; ++j) noisy[j] = h[j] + cfg.sigma_cs * rng.normal();
    g(noisy, out);
    if (!all_finite(out)) throw std::runtime_error("center_smooth_certify: non-finite sample");
    dist[i] = dist2(out, cert.z);
  }

  // Target quantile level: half-mass level inflated by the Hoeffding slack of
  // the center stage, shifted by eps1/sigma, plus the slack of this stage.
  const double delta1 = std::sqrt(std::log(2.0 / cfg.alpha_cs) / (2.0 * cfg.n_center));
  const double delta2 = std::sqrt(std::log(2.0 / cfg.alpha_cs) / (2.0 * cfg.n_radius));
  if (0.5 + delta1 >= 1.0) return cert;  // abstain
  double p_star = normal_cdf(normal_quantile(0.5 + delta1) + eps1 / cfg.sigma_cs) + delta2;
  if (p_star >= 1.0) return cert;  // abstain
  long index = static_cast<long>(std::ceil(p_star * cfg.n_radius));
  if (index < 1) index = 1;
  if (index > cfg.n_radius) return cert;  // abstain

  std::nth_element(dist.begin(), dist.begin() + (index - 1), dist.end());
  cert.d_cs = 2.0 * dist[index - 1];
  return cert;
}

RsCertificate rs_predict_certify(const ClassifyFn& d, int num_classes,
                                 std::span<const double> z, const SmoothingConfig& cfg,
                                 RngStream& rng) {
  cfg.validate();
  if (num_classes < 2) throw std::invalid_argument("rs_predict_certify: need >= 2 classes");

  const size_t p = z.size();
  Vec noisy(p);
  std::vector<long> votes(num_classes, 0);
  for (int i = 0; i < cfg.n_select; ++i) {
    for (size_t j = 0; j < p; ++j) noisy[j] = z[j] + cfg.sigma_rs * rng.normal();
    int c = d(noisy);
    if (c < 0 || c >= num_classes)
      throw std::runtime_error("rs_predict_certify: classifier returned class out of range");
    ++votes[c];
  }
  int candidate = 0;
  for (int c = 1; c < num_classes; ++c)
    if (votes[c] > votes[candidate]) candidate = c;

  long hits = 0;
  for (int i = 0; i < cfg.n_cert; ++i) {
    for (size_t j = 0; j < p; ++j) noisy[j] = z[j] + cfg.sigma_rs * rng.normal();
    if (d(noisy) == candidate) ++hits;
  }

  RsCertificate cert;
  cert.p_a_lower = binom_lower(hits, cfg.n_cert, cfg.alpha_rs);
  if (cert.p_a_lower <= 0.5) return cert;  // abstain
  cert.y_hat = candidate;
  cert.d_rs = cfg.sigma_rs * normal_quantile(cert.p_a_lower);
  return cert;
}

double eps1_from(const SensitiveDirection& dir, double eps) {
  if (eps < 0) throw std::invalid_argument("eps1_from: eps must be >= 0");
  return eps * dir.alpha_norm;
}

NodeCertificate compose_certificate(int node, double eps1, const CenterCertificate& cs,
                                    const RsCertificate& rs, const SmoothingConfig& cfg) {
  NodeCertificate cert;
  cert.node = node;
  cert.eps1 = eps1;
  cert.d_cs = cs.d_cs;
  cert.d_rs = rs.d_rs;
  cert.y_hat = rs.y_hat;
  cert.abstain_cs = cs.abstain();
  cert.abstain_rs = rs.abstain();
  cert.provable = !cert.abstain_cs && !cert.abstain_rs && *cs.d_cs < *rs.d_rs;
  cert.confidence = 1.0 - cfg.alpha_cs - cfg.alpha_rs;
  return cert;
}

NodeCertificate certify_node(const AdapterParams& g, const ClassifierParams& d,
                             std::span<const double> h, const SensitiveDirection& dir,
                             double eps, const SmoothingConfig& cfg, uint64_t master_seed,
                             int node) {
  const double eps1 = eps1_from(dir, eps);
  const uint64_t ctx = static_cast<uint64_t>(node);

  RngStream cs_rng(master_seed, stream_id(StreamKind::CenterSamples, ctx));
  CenterCertificate cs =
      center_smooth_certify(adapter_map(g), g.in_dim(), h, eps1, cfg, cs_rng);

  RngStream rs_rng(master_seed, stream_id(StreamKind::SelectVotes, ctx));
  RsCertificate rs = rs_predict_certify(classifier_map(d), d.out_dim(), cs.z, cfg, rs_rng);

  return compose_certificate(node, eps1, cs, rs, cfg);
}

}  // namespace fairpar
