#include "fairpar/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace fairpar {

namespace {

void check_sizes(size_t a, size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": input length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace

double metric_dp(std::span<const int> preds, std::span<const int> sensitive) {
  check_sizes(preds.size(), sensitive.size(), "metric_dp");
  long pos1 = 0, n1 = 0, pos0 = 0, n0 = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (sensitive[i] == 1) {
      ++n1;
      if (preds[i] == 1) ++pos1;
    } else {
      ++n0;
      if (preds[i] == 1) ++pos0;
    }
  }
  if (n0 == 0 || n1 == 0) throw std::runtime_error("metric_dp: empty sensitive group");
  return std::abs(static_cast<double>(pos0) / static_cast<double>(n0) -
                  static_cast<double>(pos1) / static_cast<double>(n1));
}

double metric_eo(std::span<const int> preds, std::span<const int> labels,
                 std::span<const int> sensitive) {
  check_sizes(preds.size(), labels.size(), "metric_eo");
  check_sizes(preds.size(), sensitive.size(), "metric_eo");
  long pos1 = 0, n1 = 0, pos0 = 0, n0 = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] != 1) continue;
    if (sensitive[i] == 1) {
      ++n1;
      if (preds[i] == 1) ++pos1;
    } else {
      ++n0;
      if (preds[i] == 1) ++pos0;
    }
  }
  if (n0 == 0 || n1 == 0)
    throw std::runtime_error("metric_eo: a sensitive group has no y=1 nodes");
  return std::abs(static_cast<double>(pos0) / static_cast<double>(n0) -
                  static_cast<double>(pos1) / static_cast<double>(n1));
}

double metric_dp_or_nan(std::span<const int> preds, std::span<const int> sensitive) {
  try {
    return metric_dp(preds, sensitive);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double metric_eo_or_nan(std::span<const int> preds, std::span<const int> labels,
                        std::span<const int> sensitive) {
  try {
    return metric_eo(preds, labels, sensitive);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

AccF1 metric_acc_f1(std::span<const int> preds, std::span<const int> labels,
                    int num_classes) {
  check_sizes(preds.size(), labels.size(), "metric_acc_f1");
  if (num_classes < 2) throw std::invalid_argument("metric_acc_f1: need >= 2 classes");

  long correct = 0;
  std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("metric_acc_f1: class index out of range");
    if (preds[i] == labels[i]) {
      ++correct;
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }

  AccF1 out;
  out.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  out.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return out;
}

}  // namespace fairpar
