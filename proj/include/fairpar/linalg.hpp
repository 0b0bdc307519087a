#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairpar {

using Vec = std::vector<double>;

// Dense row-major matrix, just big enough for the adapter/classifier layers.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {a.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const { return {a.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
};

inline void check_dim(size_t got, size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", want " + std::to_string(want) + ")");
  }
}

// out = W x + b
inline void affine_into(const Matrix& w, std::span<const double> x,
                        std::span<const double> b, std::span<double> out) {
  check_dim(x.size(), static_cast<size_t>(w.cols), "affine input");
  check_dim(out.size(), static_cast<size_t>(w.rows), "affine output");
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.a.data() + static_cast<size_t>(r) * w.cols;
    double s = b.empty() ? 0.0 : b[r];
    for (int c = 0; c < w.cols; ++c) s += wr[c] * x[c];
    out[r] = s;
  }
}

// out = W^T y  (back-propagation through the same layer)
inline void matvec_t_into(const Matrix& w, std::span<const double> y, std::span<double> out) {
  check_dim(y.size(), static_cast<size_t>(w.rows), "matvec_t input");
  check_dim(out.size(), static_cast<size_t>(w.cols), "matvec_t output");
  for (int c = 0; c < w.cols; ++c) out[c] = 0.0;
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = w.a.data() + static_cast<size_t>(r) * w.cols;
    double yr = y[r];
    for (int c = 0; c < w.cols; ++c) out[c] += wr[c] * yr;
  }
}

// W += scale * y x^T ; b += scale * y
inline void accumulate_outer(Matrix& w, Vec& b, std::span<const double> y,
                             std::span<const double> x, double scale) {
  for (int r = 0; r < w.rows; ++r) {
    double* wr = w.a.data() + static_cast<size_t>(r) * w.cols;
    double yr = scale * y[r];
    for (int c = 0; c < w.cols; ++c) wr[c] += yr * x[c];
    b[r] += yr;
  }
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  check_dim(y.size(), x.size(), "dot");
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double dist2(std::span<const double> x, std::span<const double> y) {
  check_dim(y.size(), x.size(), "dist2");
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fairpar
